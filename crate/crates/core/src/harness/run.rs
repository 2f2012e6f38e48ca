//! `run`: one task directory end to end.
//!
//! A task directory holds the data (under `data/` when present, else the
//! directory itself), an optional `description.md`/`description.txt` and an
//! optional `metric.json` (`{"name": "rmse"}`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::{ProviderKind, RunConfig};
use crate::debug::NoDocs;
use crate::error::{Error, IoContext, Result};
use crate::evaluation::{
    build_ensemble, compute_metric, normalize_for_metric, read_truth, read_validation, select_best, Aggregate,
    EnsembleMember,
};
use crate::layout::RunLayout;
use crate::llm::{Gateway, HttpProvider, LlmProvider, ScriptedProvider, Transcript};
use crate::model::{
    to_canonical_json, FileRole, InterfaceContract, MetaFeatures, MetricDirection, MetricSpec,
    ObjectiveKind, Phase, RunTelemetry, StrategicBlueprint, TaskSpec, TaskSummary, TrackKind, TrackRun, TrackStatus,
};
use crate::par;
use crate::perception::{
    analyze_description, infer_semantics, looks_like_submission, profile_dataset, ClassThreshold, ProfileOptions,
    STRIPPED_DESCRIPTION,
};
use crate::planning::{define_contract, persist_blueprint, persist_contract, synthesize_blueprint, VALIDATION_ARTIFACT};
use crate::retrieval::{retrieve_candidates, validate_all, Catalog};
use crate::sandbox::Sandbox;
use crate::verify::{install_runtime, prepare_sample_data, verify_integrated, Mode, SubmissionSpec, VerifyEnv, SUBMISSION_FILE};
use crate::worker::{run_track, TrackContext, TrackOutcome};

pub const REPORT_SCHEMA: &str = "1";
pub const ENSEMBLE_DIR: &str = "ensemble";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub code: String,
    pub phase: Phase,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub track: TrackKind,
    pub status: TrackStatus,
    pub validation_score: Option<f64>,
    pub normalized: f64,
    pub debug_attempts_used: u32,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub strategy: Aggregate,
    pub members: Vec<TrackKind>,
    pub passed: bool,
    pub validation_score: Option<f64>,
    pub note: Option<String>,
}

/// `report.json`. Everything outside `telemetry` is a function of the
/// inputs, the provider responses and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    /// `succeeded` or `failed`.
    pub status: String,
    pub failure: Option<FailureRecord>,
    pub metric: Option<String>,
    pub metric_direction: Option<MetricDirection>,
    pub contract_hash: Option<String>,
    pub seed: u64,
    pub tracks: Vec<TrackSummary>,
    /// `best:<track>` or `ensemble:<strategy>`.
    pub chosen: Option<String>,
    pub ensemble: Option<EnsembleSummary>,
    pub validation_score: Option<f64>,
    pub normalized_score: f64,
    /// The submission exists and passed full-mode verification.
    pub v_exec: bool,
    pub submission: Option<String>,
    pub telemetry: RunTelemetry,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.status == "succeeded"
    }

    /// The report without wall times or token counts.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(m) = v.as_object_mut() {
            m.remove("telemetry");
        }
        Ok(to_canonical_json(&v)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).ctx(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn fail_at(phase: Phase) -> impl Fn(Error) -> (Phase, Error) {
    move |e| (phase, e)
}

type Staged<T> = std::result::Result<T, (Phase, Error)>;

pub fn make_provider(cfg: &RunConfig) -> Result<Arc<dyn LlmProvider>> {
    Ok(match cfg.provider {
        ProviderKind::Scripted => {
            let dir = cfg
                .fixtures
                .as_ref()
                .ok_or_else(|| Error::Usage("the scripted provider needs --fixtures".into()))?;
            Arc::new(ScriptedProvider::from_dir(dir)?)
        }
        ProviderKind::Http => Arc::new(HttpProvider::new(cfg.http.provider_config())),
    })
}

/// Where the data lives inside a task directory.
pub fn data_root(task_dir: &Path) -> PathBuf {
    let d = task_dir.join("data");
    if d.is_dir() {
        d
    } else {
        task_dir.to_path_buf()
    }
}

fn read_description(task_dir: &Path) -> String {
    ["description.md", "description.txt"]
        .iter()
        .find_map(|n| std::fs::read_to_string(task_dir.join(n)).ok())
        .unwrap_or_default()
}

fn find_sample_submission(root: &Path) -> Option<PathBuf> {
    let mut names: Vec<String> = std::fs::read_dir(root)
        .ok()?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .filter(|n| looks_like_submission(n))
        .collect();
    names.sort();
    names.into_iter().next().map(|n| root.join(n))
}

pub fn task_spec(task_dir: &Path, cfg: &RunConfig) -> Result<TaskSpec> {
    let task_dir = &std::path::absolute(task_dir).ctx(|| format!("resolving {}", task_dir.display()))?;
    let root = data_root(task_dir);
    let metric_spec = match std::fs::read_to_string(task_dir.join("metric.json")) {
        Ok(t) => Some(serde_json::from_str::<MetricSpec>(&t)?),
        Err(_) => None,
    };
    let spec = TaskSpec {
        description_text: if cfg.strip_description {
            STRIPPED_DESCRIPTION.to_string()
        } else {
            read_description(task_dir)
        },
        submission_sample: find_sample_submission(&root),
        data_root: root,
        metric_spec,
        time_budget: cfg.time_budget,
        exec_interpreter: cfg.interpreter.clone(),
    };
    let problems = spec.validate();
    if !problems.is_empty() {
        return Err(Error::Usage(problems.join("; ")));
    }
    Ok(spec)
}

/// Mirrors `src` into `dst` with hard links, copying where linking fails, so
/// the sandboxed child can read the data whatever the permissions above `src`.
pub fn stage_input(src: &Path, dst: &Path) -> Result<()> {
    if dst.exists() {
        std::fs::remove_dir_all(dst).ctx(|| format!("clearing {}", dst.display()))?;
    }
    std::fs::create_dir_all(dst).ctx(|| format!("creating {}", dst.display()))?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(src)
        .ctx(|| format!("listing {}", src.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        let Some(name) = p.file_name() else { continue };
        let target = dst.join(name);
        if p.is_dir() {
            stage_input(&p, &target)?;
        } else if std::fs::hard_link(&p, &target).is_err() {
            std::fs::copy(&p, &target).ctx(|| format!("copying {}", p.display()))?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).ctx(|| format!("creating {}", d.display()))?;
    }
    std::fs::write(path, to_canonical_json(v)?).ctx(|| format!("writing {}", path.display()))
}

struct Perceived {
    summary: TaskSummary,
    profile: MetaFeatures,
}

fn perceive(spec: &TaskSpec, cfg: &RunConfig, llm: &Gateway, layout: &RunLayout) -> Result<Perceived> {
    let opts = ProfileOptions {
        sample_rows: cfg.profile_rows,
        seed: cfg.seed,
        class_threshold_min: cfg.class_threshold_min,
        class_threshold_ratio: cfg.class_threshold_ratio,
        exec: cfg.exec,
        ..ProfileOptions::default()
    };
    let profile = profile_dataset(&spec.data_root, &opts)?;
    let described = analyze_description(spec, llm)?;
    let th = ClassThreshold {
        min: cfg.class_threshold_min,
        ratio: cfg.class_threshold_ratio,
    };
    let summary = infer_semantics(&described, &profile, th)?;
    let problems = summary.validate();
    if !problems.is_empty() {
        return Err(Error::Invalid(problems.join("; ")));
    }
    write_json(&layout.path("summary.json"), &summary)?;
    write_json(&layout.path("profile.json"), &profile)?;
    Ok(Perceived { summary, profile })
}

/// Blueprints per track; a track that cannot be planned becomes a failed
/// run instead of aborting the others.
fn plan_tracks(
    p: &Perceived,
    cfg: &RunConfig,
    contract: &InterfaceContract,
    llm: &Gateway,
    layout: &RunLayout,
) -> Result<Vec<(TrackKind, std::result::Result<StrategicBlueprint, String>)>> {
    let catalog = match &cfg.catalog {
        Some(p) => Catalog::load(p)?,
        None => Catalog::empty(),
    };
    let mut cands = retrieve_candidates(&catalog, &p.profile, cfg.max_candidates);
    if cfg.head_timeout > 0.0 {
        cands = validate_all(&cands, Duration::from_secs_f64(cfg.head_timeout), cfg.exec);
    }
    write_json(&layout.path("candidates.json"), &cands)?;
    let mut out = Vec::new();
    for track in cfg.track_set() {
        match synthesize_blueprint(&p.summary, &p.profile, &cands, contract, llm, &[track], cfg.seed) {
            Ok(mut bs) => {
                let b = bs.remove(0);
                persist_blueprint(layout, &b)?;
                out.push((track, Ok(b)));
            }
            Err(e @ Error::PlanningFailed { .. }) => out.push((track, Err(format!("{}: {e}", e.code())))),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn train_file(summary: &TaskSummary) -> Option<&str> {
    summary.files_with_role(FileRole::Train).next()
}

fn test_file(summary: &TaskSummary) -> Option<String> {
    summary.files_with_role(FileRole::Test).next().map(str::to_string)
}

struct Chosen {
    label: String,
    submission: PathBuf,
    score: Option<f64>,
}

struct EnsembleAttempt {
    summary: EnsembleSummary,
    chosen: Option<Chosen>,
}

fn try_ensemble(
    env: &VerifyEnv,
    summary: &TaskSummary,
    strategy: Aggregate,
    outcomes: &[TrackOutcome],
    metric: &str,
    truth: Option<&[String]>,
) -> EnsembleAttempt {
    let members: Vec<EnsembleMember> = outcomes
        .iter()
        .filter(|o| o.run.status() == TrackStatus::Validated)
        .filter_map(|o| {
            o.assembled.as_ref().map(|(_, p)| EnsembleMember {
                track: o.run.track,
                module_path: Path::new("..").join(o.run.track.as_str()).join(p.file_name().unwrap_or_default()),
            })
        })
        .collect();
    let mut s = EnsembleSummary {
        strategy,
        members: members.iter().map(|m| m.track).collect(),
        passed: false,
        validation_score: None,
        note: None,
    };
    let attempt = || -> Result<Chosen> {
        let fmt = summary
            .submission_format
            .as_ref()
            .ok_or_else(|| Error::Invalid("no submission format to aggregate into".into()))?;
        let regression = summary.objective_kind == ObjectiveKind::Regression;
        let m = build_ensemble(&members, &env.contract, fmt, strategy, regression, 0)?;
        let path = env.layout.module(ENSEMBLE_DIR, &m);
        write_module(&path, &m.source_text)?;
        let artifacts = env.layout.pipeline_artifacts(ENSEMBLE_DIR);
        let readable: Vec<PathBuf> = outcomes
            .iter()
            .filter(|o| o.run.status() == TrackStatus::Validated)
            .filter_map(|o| o.assembled.as_ref().map(|(_, p)| p.clone()))
            .collect();
        let res = verify_integrated(env, ENSEMBLE_DIR, &m, &path, &artifacts, Mode::Full, &readable)?;
        write_json(&env.layout.track_dir(ENSEMBLE_DIR).join("execution.json"), &res)?;
        if !res.passed {
            return Err(Error::Invalid(format!("ensemble failed verification: {}", res.notes.join("; "))));
        }
        let score = match truth {
            Some(t) => {
                let file = env
                    .contract
                    .artifact(VALIDATION_ARTIFACT)
                    .map(|a| a.file_name())
                    .unwrap_or_else(|| format!("{VALIDATION_ARTIFACT}.csv"));
                let set = read_validation(&artifacts.join(file), t)?;
                Some(compute_metric(metric, &set)?)
            }
            None => None,
        };
        Ok(Chosen {
            label: format!("ensemble:{strategy}"),
            submission: artifacts.join(SUBMISSION_FILE),
            score,
        })
    };
    match attempt() {
        Ok(c) => {
            s.passed = true;
            s.validation_score = c.score;
            EnsembleAttempt { summary: s, chosen: Some(c) }
        }
        Err(e) => {
            log::warn!("ensemble ({strategy}) falls back to the best track: {e}");
            s.note = Some(format!("{}: {e}; fell back to the best track", e.code()));
            EnsembleAttempt { summary: s, chosen: None }
        }
    }
}

fn write_module(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).ctx(|| format!("creating {}", d.display()))?;
    }
    std::fs::write(path, text).ctx(|| format!("writing {}", path.display()))
}

fn track_summary(r: &TrackRun, metric: &str) -> TrackSummary {
    let failed = r.status() != TrackStatus::Validated;
    let normalized = normalize_for_metric(r.validation_score, metric, failed || r.validation_score.is_none())
        .map(|n| n.value())
        .unwrap_or(0.0);
    TrackSummary {
        track: r.track,
        status: r.status(),
        validation_score: r.validation_score,
        normalized,
        debug_attempts_used: r.debug_attempts_used,
        failure: r.failure.clone(),
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    layout: RunLayout,
    llm: Gateway,
    started: Instant,
    report: RunReport,
}

impl Ctx<'_> {
    fn phase<T>(&mut self, phase: Phase, f: impl FnOnce(&mut Self) -> Result<T>) -> Staged<T> {
        let t = Instant::now();
        let out = f(self);
        self.llm
            .telemetry()
            .lock()
            .expect("telemetry lock")
            .add_phase_time(phase, t.elapsed().as_secs_f64());
        out.map_err(fail_at(phase))
    }

    fn drive(&mut self, task_dir: &Path) -> Staged<()> {
        let cfg = self.cfg;
        let spec = task_spec(task_dir, cfg).map_err(fail_at(Phase::Perception))?;
        let p = self.phase(Phase::Perception, |c| perceive(&spec, cfg, &c.llm, &c.layout))?;
        let metric = p.summary.optimization_metric.clone();
        self.report.metric = Some(metric.clone());
        self.report.metric_direction = p.summary.metric_direction;

        let contract = self.phase(Phase::Planning, |c| {
            let k = define_contract(&p.summary, &p.profile, &c.llm)?;
            persist_contract(&c.layout, &k)?;
            Ok(k)
        })?;
        self.report.contract_hash = Some(contract.hash());
        let planned = self.phase(Phase::Planning, |c| plan_tracks(&p, cfg, &contract, &c.llm, &c.layout))?;

        let env = self.phase(Phase::Verification, |c| {
            install_runtime(&c.layout, &contract)?;
            stage_input(&spec.data_root, &c.layout.input())?;
            prepare_sample_data(&c.layout.input(), &c.layout.sample_data(), cfg.sample_limit)?;
            let mut sb_cfg = cfg.sandbox.clone();
            sb_cfg.interpreter = cfg.interpreter.clone();
            let deadline = c.started + Duration::from_secs_f64(cfg.time_budget);
            let sandbox = Sandbox::new(sb_cfg, &c.layout.scratch())?.with_deadline(deadline);
            Ok(VerifyEnv {
                sandbox,
                layout: c.layout.clone(),
                contract: contract.clone(),
                data_dir: c.layout.input(),
                sample_data_dir: c.layout.sample_data(),
                sample_limit: cfg.sample_limit,
                seed: cfg.seed,
                stage_timeout_s: cfg.stage_timeout,
                full_timeout_s: cfg.time_budget,
                submission: p.summary.submission_format.clone().map(|format| SubmissionSpec {
                    format,
                    test_file: test_file(&p.summary),
                }),
                shim: cfg.shim.clone(),
            })
        })?;
        let truth = match (train_file(&p.summary), &p.summary.target_column) {
            (Some(f), Some(t)) => read_truth(&spec.data_root.join(f), t).ok(),
            _ => None,
        };

        let ctx = TrackContext {
            llm: &self.llm,
            env: &env,
            summary: &p.summary,
            profile: &p.profile,
            truth: truth.as_deref(),
            debug_budget: cfg.debug_budget,
            docs: &NoDocs,
        };
        let blueprints: Vec<&StrategicBlueprint> = planned.iter().filter_map(|(_, b)| b.as_ref().ok()).collect();
        let mut outcomes: BTreeMap<TrackKind, TrackOutcome> = par::run_jobs(cfg.exec, blueprints, |b| run_track(&ctx, b))
            .into_iter()
            .map(|o| (o.run.track, o))
            .collect();
        {
            let tel = self.llm.telemetry();
            let mut t = tel.lock().expect("telemetry lock");
            for o in outcomes.values() {
                for (ph, s) in &o.phase_seconds {
                    t.add_phase_time(*ph, *s);
                }
            }
        }
        let mut runs = Vec::new();
        for (track, b) in &planned {
            match b {
                Ok(_) => runs.push(outcomes[track].run.clone()),
                Err(reason) => {
                    let mut r = TrackRun::new(*track, String::new(), cfg.debug_budget);
                    r.fail(reason.clone());
                    write_json(&self.layout.track_dir(track.as_str()).join("run.json"), &r)
                        .map_err(fail_at(Phase::Planning))?;
                    runs.push(r);
                }
            }
        }
        self.report.tracks = runs.iter().map(|r| track_summary(r, &metric)).collect();

        let direction = p.summary.metric_direction.unwrap_or(MetricDirection::HigherBetter);
        let best = select_best(&runs, direction).map_err(fail_at(Phase::Evaluation))?;
        let best_outcome = outcomes.remove(&best.track).expect("validated track has an outcome");
        let mut chosen = Chosen {
            label: format!("best:{}", best.track),
            submission: env.layout.pipeline_artifacts(best.track.as_str()).join(SUBMISSION_FILE),
            score: best.validation_score,
        };
        if cfg.aggregate != Aggregate::Best {
            let validated = runs.iter().filter(|r| r.status() == TrackStatus::Validated).count();
            if validated >= 2 {
                let mut all: Vec<TrackOutcome> = outcomes.into_values().collect();
                all.push(best_outcome);
                all.sort_by_key(|o| o.run.track);
                let t = Instant::now();
                let e = try_ensemble(&env, &p.summary, cfg.aggregate, &all, &metric, truth.as_deref());
                self.llm
                    .telemetry()
                    .lock()
                    .expect("telemetry lock")
                    .add_phase_time(Phase::Evaluation, t.elapsed().as_secs_f64());
                if let Some(c) = e.chosen {
                    chosen = c;
                }
                self.report.ensemble = Some(e.summary);
            } else {
                self.report.ensemble = Some(EnsembleSummary {
                    strategy: cfg.aggregate,
                    members: runs.iter().filter(|r| r.status() == TrackStatus::Validated).map(|r| r.track).collect(),
                    passed: false,
                    validation_score: None,
                    note: Some(format!("{validated} validated track(s); an ensemble needs 2; fell back to the best track")),
                });
            }
        }

        std::fs::copy(&chosen.submission, self.layout.submission())
            .ctx(|| format!("copying {}", chosen.submission.display()))
            .map_err(fail_at(Phase::Evaluation))?;
        self.report.chosen = Some(chosen.label);
        self.report.validation_score = chosen.score;
        self.report.normalized_score = normalize_for_metric(chosen.score, &metric, chosen.score.is_none())
            .map(|n| n.value())
            .unwrap_or(0.0);
        self.report.v_exec = true;
        self.report.submission = Some(SUBMISSION_FILE.to_string());
        Ok(())
    }
}

/// Result of a run: the report is always written, even on failure.
pub struct RunOutcome {
    pub report: RunReport,
    pub layout: RunLayout,
}

impl RunOutcome {
    /// 0 iff a valid submission was produced.
    pub fn exit_code(&self) -> i32 {
        if self.report.succeeded() {
            0
        } else {
            1
        }
    }
}

fn prepare_layout(out_dir: &Path, cfg: &RunConfig) -> Result<RunLayout> {
    let out_dir = &std::path::absolute(out_dir).ctx(|| format!("resolving {}", out_dir.display()))?;
    std::fs::create_dir_all(out_dir).ctx(|| format!("creating {}", out_dir.display()))?;
    let layout = RunLayout::new(out_dir);
    write_json(&layout.path("layout.json"), &serde_json::json!({"layout_version": 1}))?;
    write_json(&layout.path("config.json"), cfg)?;
    Ok(layout)
}

/// Runs the whole pipeline for one task. Setup problems (bad config, an
/// unusable output directory) are errors; everything after that ends in a
/// report.
pub fn cmd_run(task_dir: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    if !task_dir.is_dir() {
        return Err(Error::Usage(format!("task directory {} does not exist", task_dir.display())));
    }
    let started = Instant::now();
    let layout = prepare_layout(out_dir, cfg)?;
    let provider = make_provider(cfg)?;
    let llm = Gateway::new(provider, cfg.temperature, cfg.max_tokens)
        .with_transcript(Transcript::create(&layout.transcript())?)
        .with_prices(cfg.prices.clone());
    let mut ctx = Ctx {
        cfg,
        layout: layout.clone(),
        llm,
        started,
        report: RunReport {
            schema_version: REPORT_SCHEMA.into(),
            status: "failed".into(),
            failure: None,
            metric: None,
            metric_direction: None,
            contract_hash: None,
            seed: cfg.seed,
            tracks: Vec::new(),
            chosen: None,
            ensemble: None,
            validation_score: None,
            normalized_score: 0.0,
            v_exec: false,
            submission: None,
            telemetry: RunTelemetry::default(),
        },
    };
    match ctx.drive(task_dir) {
        Ok(()) => ctx.report.status = "succeeded".into(),
        Err((phase, e)) => {
            log::error!("run failed in {phase:?}: {}: {e}", e.code());
            ctx.report.failure = Some(FailureRecord {
                code: e.code().to_string(),
                phase,
                message: e.to_string(),
            });
        }
    }
    ctx.report.telemetry = ctx.llm.telemetry_snapshot();
    write_json(&layout.report(), &ctx.report)?;
    Ok(RunOutcome { report: ctx.report, layout })
}

/// Digest of the artifacts that must not change between identical runs.
pub fn determinism_digest(layout: &RunLayout) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut add = |name: String, bytes: Vec<u8>| {
        out.insert(name, crate::model::sha256_hex(&bytes));
    };
    for entry in ["contract.json"] {
        if let Ok(b) = std::fs::read(layout.path(entry)) {
            add(entry.to_string(), b);
        }
    }
    if let Ok(rd) = std::fs::read_dir(layout.path("blueprints")) {
        let mut names: Vec<_> = rd.filter_map(|e| e.ok()).map(|e| e.path()).collect();
        names.sort();
        for p in names {
            add(format!("blueprints/{}", p.file_name().unwrap().to_string_lossy()), std::fs::read(&p).ctx(|| p.display().to_string())?);
        }
    }
    if let Ok(rd) = std::fs::read_dir(layout.path("tracks")) {
        let mut tracks: Vec<_> = rd.filter_map(|e| e.ok()).map(|e| e.path()).collect();
        tracks.sort();
        for t in tracks {
            let mut files: Vec<_> = std::fs::read_dir(&t)
                .ctx(|| t.display().to_string())?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "py"))
                .collect();
            files.sort();
            for f in files {
                let rel = f.strip_prefix(layout.root()).unwrap_or(&f).to_string_lossy().into_owned();
                add(rel, std::fs::read(&f).ctx(|| f.display().to_string())?);
            }
        }
    }
    let report = RunReport::load(&layout.report())?;
    add("report.json".into(), report.deterministic_json()?.into_bytes());
    Ok(out)
}
