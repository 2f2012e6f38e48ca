//! One implementation track from blueprint to validated pipeline.
//!
//! prep → verify(sample) → modeling → verify(sample) → assemble →
//! verify(full) → score. Any failure is classified and only the faulty
//! stage is regenerated, at most `debug_budget` times.

use std::path::PathBuf;
use std::time::Instant;

use crate::assemble::assemble;
use crate::codegen::{generate_modeling, generate_preprocessing, persist_module, RepairRequest};
use crate::debug::{classify_failure, DocRetriever};
use crate::error::{Error, IoContext, Result};
use crate::evaluation::score_validation;
use crate::llm::Gateway;
use crate::model::{
    canonical_hash, to_canonical_json, ContractReport, ExecutionResult, FaultClassification,
    GeneratedModule, MetaFeatures, Phase, Stage, StrategicBlueprint, TaskSummary, TrackRun,
    TrackStatus, Verdict,
};
use crate::planning::VALIDATION_ARTIFACT;
use crate::verify::{verify_integrated, verify_stage, Mode, VerifyEnv};

/// What every track worker shares.
pub struct TrackContext<'a> {
    pub llm: &'a Gateway,
    pub env: &'a VerifyEnv,
    pub summary: &'a TaskSummary,
    pub profile: &'a MetaFeatures,
    /// Training target in file order; validation rows index into it.
    pub truth: Option<&'a [String]>,
    pub debug_budget: u32,
    pub docs: &'a dyn DocRetriever,
}

#[derive(Debug, Clone)]
pub struct TrackOutcome {
    pub run: TrackRun,
    /// Latest assembled module and where it was written.
    pub assembled: Option<(GeneratedModule, PathBuf)>,
    pub faults: Vec<FaultClassification>,
    pub phase_seconds: Vec<(Phase, f64)>,
}

struct Failure {
    res: ExecutionResult,
    assembled: Option<String>,
}

struct Worker<'a, 'b> {
    ctx: &'a TrackContext<'b>,
    b: &'a StrategicBlueprint,
    name: &'static str,
    run: TrackRun,
    prep_ok: Option<(u32, ContractReport)>,
    model_ok: Option<u32>,
    assembled: Option<(GeneratedModule, PathBuf)>,
    faults: Vec<FaultClassification>,
    phases: Vec<(Phase, f64)>,
}

fn submission_columns(ctx: &TrackContext<'_>, b: &StrategicBlueprint) -> Vec<String> {
    match &ctx.summary.submission_format {
        Some(f) => f.columns(),
        None => b
            .contract
            .artifact("predictions")
            .map(|a| a.columns.iter().map(|c| c.name.clone()).collect())
            .unwrap_or_default(),
    }
}

impl Worker<'_, '_> {
    fn timed<T>(&mut self, phase: Phase, f: impl FnOnce(&mut Self) -> T) -> T {
        let t = Instant::now();
        let out = f(self);
        self.phases.push((phase, t.elapsed().as_secs_f64()));
        out
    }

    fn budget_left(&self) -> bool {
        self.ctx.env.sandbox.remaining().is_none_or(|r| !r.is_zero())
    }

    fn persist(&mut self, m: GeneratedModule) -> Result<PathBuf> {
        let p = persist_module(&self.ctx.env.layout, self.name, &m)?;
        self.run.push_module(m);
        Ok(p)
    }

    fn generate_model(&mut self, repair: Option<&RepairRequest>) -> Result<()> {
        let (_, report) = self.prep_ok.clone().expect("handoff gate passed");
        let prep = self.run.latest(Stage::Preprocessing).expect("prep exists").clone();
        let cols = submission_columns(self.ctx, self.b);
        let rev = self.run.next_revision(Stage::Modeling);
        let m = self.timed(Phase::Codegen, |w| {
            generate_modeling(w.b, &prep, &report, &cols, w.ctx.llm, rev, repair)
        })?;
        self.persist(m)?;
        Ok(())
    }

    /// One verification pass over whatever is not yet known to be good.
    fn verify_once(&mut self) -> Result<Option<Failure>> {
        let env = self.ctx.env;
        let prep = self.run.latest(Stage::Preprocessing).expect("prep exists").clone();
        if self.prep_ok.as_ref().map(|(r, _)| *r) != Some(prep.revision) {
            let (res, passed) = self.timed(Phase::Verification, |w| verify_stage(env, w.name, &prep))?;
            self.run.executions.push(res.clone());
            if !passed {
                return Ok(Some(Failure { res, assembled: None }));
            }
            self.prep_ok = Some((prep.revision, res.artifact_report.clone().unwrap_or_else(|| empty_report())));
            self.model_ok = None;
        }
        if self.run.latest(Stage::Modeling).is_none() {
            self.generate_model(None)?;
        }
        let model = self.run.latest(Stage::Modeling).expect("model exists").clone();
        if self.model_ok != Some(model.revision) {
            let (res, passed) = self.timed(Phase::Verification, |w| verify_stage(env, w.name, &model))?;
            self.run.executions.push(res.clone());
            if !passed {
                return Ok(Some(Failure { res, assembled: None }));
            }
            self.model_ok = Some(model.revision);
        }

        let fmt = self.ctx.summary.submission_format.as_ref();
        let rev = self.run.next_revision(Stage::Assembled);
        let a = assemble(&prep, &model, &env.contract, fmt, rev)?;
        let src = a.source_text.clone();
        let path = self.persist(a.clone())?;
        self.assembled = Some((a.clone(), path.clone()));
        let artifacts = env.layout.pipeline_artifacts(self.name);
        let mut res = self.timed(Phase::Verification, |w| {
            verify_integrated(env, w.name, &a, &path, &artifacts, Mode::Full, &[])
        })?;
        if !res.passed {
            self.run.executions.push(res.clone());
            return Ok(Some(Failure { res, assembled: Some(src) }));
        }

        let scored = match self.ctx.truth {
            Some(truth) => {
                let file = env
                    .contract
                    .artifact(VALIDATION_ARTIFACT)
                    .map(|s| s.file_name())
                    .unwrap_or_else(|| format!("{VALIDATION_ARTIFACT}.csv"));
                let metric = self.b.eval.metric.clone();
                self.timed(Phase::Evaluation, |w| score_validation(&mut w.run, &metric, &artifacts.join(file), truth))
            }
            None => Err(Error::ScoringFailed("training target unavailable".into())),
        };
        if let Err(e) = scored {
            res.passed = false;
            res.notes.push(format!("{}: {e}", e.code()));
            if let Some(r) = res.artifact_report.as_mut() {
                r.verdicts.push(Verdict {
                    subject: VALIDATION_ARTIFACT.into(),
                    constraint: "scorable".into(),
                    pass: false,
                    detail: e.to_string(),
                });
            }
            self.run.executions.push(res.clone());
            return Ok(Some(Failure { res, assembled: Some(src) }));
        }
        self.run.executions.push(res);
        Ok(None)
    }

    fn write_diagnostics(&self, n: u32, res: &ExecutionResult, fc: &FaultClassification) -> Result<()> {
        let dir = self.ctx.env.layout.debug_attempt(self.name, n);
        std::fs::create_dir_all(&dir).ctx(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("classification.json"), to_canonical_json(fc)?)
            .ctx(|| format!("writing {}", dir.display()))?;
        std::fs::write(dir.join("execution.json"), to_canonical_json(res)?)
            .ctx(|| format!("writing {}", dir.display()))?;
        Ok(())
    }

    fn repair(&mut self, failure: Failure) -> Result<()> {
        let fc = classify_failure(&failure.res, &self.ctx.env.contract, self.b, failure.assembled.as_deref());
        let n = self.run.debug_attempts_used;
        self.write_diagnostics(n, &failure.res, &fc)?;
        let stage = fc.class.faulty_stage();
        let request = RepairRequest {
            previous_source: self.run.latest(stage).map(|m| m.source_text.clone()).unwrap_or_default(),
            diagnosis: format!(
                "{:?} in the {} stage{}.\n{}",
                fc.class,
                stage,
                if fc.infra_flag { " (environment or dependency problem)" } else { "" },
                fc.repair_hint
            ),
            docs: self.ctx.docs.lookup(&fc, &failure.res),
        };
        self.faults.push(fc);
        match stage {
            Stage::Preprocessing => {
                let rev = self.run.next_revision(Stage::Preprocessing);
                let m = self.timed(Phase::Codegen, |w| {
                    generate_preprocessing(w.b, w.ctx.summary, w.ctx.profile, w.ctx.llm, rev, Some(&request))
                })?;
                self.persist(m)?;
            }
            _ => self.generate_model(Some(&request))?,
        }
        Ok(())
    }

    fn drive(&mut self) -> Result<()> {
        self.run.transition(TrackStatus::Coding)?;
        let prep = self.timed(Phase::Codegen, |w| {
            generate_preprocessing(w.b, w.ctx.summary, w.ctx.profile, w.ctx.llm, 0, None)
        })?;
        self.persist(prep)?;
        self.run.transition(TrackStatus::Verifying)?;
        loop {
            if !self.budget_left() {
                return Err(Error::Invalid("time budget exhausted".into()));
            }
            let Some(failure) = self.verify_once()? else {
                return self.run.transition(TrackStatus::Validated);
            };
            if self.run.debug_attempts_used >= self.run.debug_budget {
                let fc = classify_failure(&failure.res, &self.ctx.env.contract, self.b, failure.assembled.as_deref());
                let reason = format!(
                    "DEBUG_BUDGET_EXHAUSTED: {} attempt(s); last fault {:?} ({})",
                    self.run.debug_attempts_used,
                    fc.class,
                    fc.violated_constraints.join(", ")
                );
                self.faults.push(fc);
                self.run.fail(reason);
                return Ok(());
            }
            if !self.budget_left() {
                return Err(Error::Invalid("time budget exhausted".into()));
            }
            self.run.transition(TrackStatus::Debugging)?;
            self.run.debug_attempts_used += 1;
            self.repair(failure)?;
            self.run.transition(TrackStatus::Verifying)?;
        }
    }
}

fn empty_report() -> ContractReport {
    ContractReport {
        schema_version: crate::model::SCHEMA_VERSION.into(),
        stage: Stage::Preprocessing,
        artifacts: Default::default(),
        verdicts: Vec::new(),
    }
}

/// Runs one track to a terminal state. Errors end the track as `failed`
/// with the error code in `failure`; they never escape.
pub fn run_track(ctx: &TrackContext<'_>, b: &StrategicBlueprint) -> TrackOutcome {
    let hash = canonical_hash(b).unwrap_or_default();
    let mut w = Worker {
        ctx,
        b,
        name: b.model.track.kind.as_str(),
        run: TrackRun::new(b.model.track.kind, hash, ctx.debug_budget),
        prep_ok: None,
        model_ok: None,
        assembled: None,
        faults: Vec::new(),
        phases: Vec::new(),
    };
    if let Err(e) = w.drive() {
        let code = match &e {
            Error::Invalid(m) if m.contains("time budget") => "BUDGET_EXHAUSTED",
            other => other.code(),
        };
        log::warn!("track {}: {code}: {e}", w.name);
        w.run.fail(format!("{code}: {e}"));
    }
    let run_path = ctx.env.layout.track_dir(w.name).join("run.json");
    if let Ok(text) = to_canonical_json(&w.run) {
        let _ = std::fs::create_dir_all(ctx.env.layout.track_dir(w.name));
        let _ = std::fs::write(run_path, text);
    }
    TrackOutcome {
        run: w.run,
        assembled: w.assembled,
        faults: w.faults,
        phase_seconds: w.phases,
    }
}
