//! Stage and pipeline verification: run in the sandbox, measure what was
//! written, check it against the contract.

mod launcher;
mod measure;

pub use launcher::{last_stage_started, stage_finished, LAUNCHER_PY, MARKER, MISSING_ENTRYPOINT, MISSING_ENTRYPOINT_EXIT};
pub use measure::{measure_all, measure_artifact, write_npy_f64};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result};
use crate::layout::RunLayout;
use crate::model::{
    check_contract, to_canonical_json, ContractReport, ExecutionResult, GeneratedModule,
    InterfaceContract, ObservedArtifact, Stage, SubmissionFormat, Verdict, SCHEMA_VERSION,
};
use crate::sandbox::{ExecRequest, Sandbox};
use crate::stats;

pub const SUBMISSION_FILE: &str = "submission.csv";
pub const REPORT_FILE: &str = "contract_report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sample,
    Full,
}

/// What the final submission must look like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionSpec {
    pub format: SubmissionFormat,
    /// Test table relative to the data root; its row count bounds the submission.
    pub test_file: Option<String>,
}

/// Everything a verification needs besides the module itself.
#[derive(Clone)]
pub struct VerifyEnv {
    pub sandbox: Sandbox,
    pub layout: RunLayout,
    pub contract: InterfaceContract,
    pub data_dir: PathBuf,
    pub sample_data_dir: PathBuf,
    pub sample_limit: usize,
    pub seed: u64,
    pub stage_timeout_s: f64,
    /// Timeout for full-mode runs; the sandbox deadline clamps it further.
    pub full_timeout_s: f64,
    pub submission: Option<SubmissionSpec>,
    /// External runner script with the `run-stage` surface, replacing the
    /// built-in launcher. Its `contract_report.json` supplies the
    /// observations; verdicts are always recomputed here.
    pub shim: Option<PathBuf>,
}

impl VerifyEnv {
    fn data_for(&self, mode: Mode) -> &Path {
        match mode {
            Mode::Sample => &self.sample_data_dir,
            Mode::Full => &self.data_dir,
        }
    }

    fn sample_arg(&self, mode: Mode) -> usize {
        match mode {
            Mode::Sample => self.sample_limit,
            Mode::Full => 0,
        }
    }
}

/// Writes the launcher and the contract into the run directory.
pub fn install_runtime(layout: &RunLayout, contract: &InterfaceContract) -> Result<()> {
    std::fs::create_dir_all(layout.root()).ctx(|| format!("creating {}", layout.root().display()))?;
    std::fs::write(layout.launcher(), LAUNCHER_PY).ctx(|| "writing launcher".to_string())?;
    std::fs::write(layout.contract(), to_canonical_json(contract)?).ctx(|| "writing contract".to_string())?;
    Ok(())
}

/// Copies `data_dir` into `out`, keeping the header and first `limit` records
/// of every delimited file; other files are symlinked. Head sampling keeps
/// test ids and the sample submission aligned.
pub fn prepare_sample_data(data_dir: &Path, out: &Path, limit: usize) -> Result<()> {
    if out.exists() {
        std::fs::remove_dir_all(out).ctx(|| format!("clearing {}", out.display()))?;
    }
    copy_sampled(data_dir, out, limit)
}

fn copy_sampled(src: &Path, dst: &Path, limit: usize) -> Result<()> {
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
            copy_sampled(&p, &target, limit)?;
            continue;
        }
        let ext = p
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        if ext == "csv" || ext == "tsv" {
            let delim = crate::perception::delimiter_for(&p);
            let mut rdr = csv::ReaderBuilder::new()
                .delimiter(delim)
                .has_headers(false)
                .flexible(true)
                .from_path(&p)?;
            let mut wtr = csv::WriterBuilder::new()
                .delimiter(delim)
                .flexible(true)
                .from_path(&target)?;
            for rec in rdr.byte_records().take(limit + 1) {
                wtr.write_byte_record(&rec?)?;
            }
            wtr.flush().ctx(|| format!("writing {}", target.display()))?;
        } else {
            let abs = std::path::absolute(&p).ctx(|| format!("resolving {}", p.display()))?;
            std::os::unix::fs::symlink(&abs, &target).ctx(|| format!("linking {}", target.display()))?;
        }
    }
    Ok(())
}

fn clear_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).ctx(|| format!("clearing {}", dir.display()))?;
    }
    std::fs::create_dir_all(dir).ctx(|| format!("creating {}", dir.display()))
}

fn remove_outputs(contract: &InterfaceContract, dir: &Path, stage: Stage) {
    for a in contract.produced_by(stage) {
        let _ = std::fs::remove_file(dir.join(a.file_name()));
    }
}

fn full_stdout(res: &ExecutionResult, log_dir: &Path) -> String {
    std::fs::read_to_string(log_dir.join("stdout.txt")).unwrap_or_else(|_| res.stdout_tail.clone())
}

fn annotate(res: &mut ExecutionResult, log_dir: &Path) {
    let out = full_stdout(res, log_dir);
    res.last_stage_started = last_stage_started(&out);
    if res.stderr_tail.contains(MISSING_ENTRYPOINT) {
        let line = res
            .stderr_tail
            .lines()
            .find(|l| l.starts_with(MISSING_ENTRYPOINT))
            .unwrap_or(MISSING_ENTRYPOINT);
        res.notes.push(line.to_string());
    }
}

/// Reads a `contract_report.json` written by an external runner.
pub fn read_report(path: &Path) -> Result<ContractReport> {
    let text = std::fs::read_to_string(path).ctx(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn build_report(
    env: &VerifyEnv,
    stage: Stage,
    observed: BTreeMap<String, ObservedArtifact>,
    in_scope: impl Fn(&crate::model::ArtifactSpec) -> bool,
) -> ContractReport {
    let verdicts = check_contract(&env.contract, &observed, in_scope);
    ContractReport {
        schema_version: SCHEMA_VERSION.into(),
        stage,
        artifacts: observed,
        verdicts,
    }
}

fn write_report(report: &ContractReport, log_dir: &Path) -> Result<()> {
    let p = log_dir.join(REPORT_FILE);
    std::fs::write(&p, to_canonical_json(report)?).ctx(|| format!("writing {}", p.display()))
}

/// Runs one stage module on the sample data and checks its side of the
/// contract. Sandbox problems end up in the result, never as errors; only
/// orchestrator-side I/O failures are returned as `Err`.
pub fn verify_stage(env: &VerifyEnv, track: &str, module: &GeneratedModule) -> Result<(ExecutionResult, bool)> {
    let stage = module.stage;
    let artifacts = env.layout.stage_artifacts(track);
    std::fs::create_dir_all(&artifacts).ctx(|| format!("creating {}", artifacts.display()))?;
    if stage == Stage::Preprocessing {
        remove_outputs(&env.contract, &artifacts, Stage::Preprocessing);
    }
    remove_outputs(&env.contract, &artifacts, Stage::Modeling);
    let _ = std::fs::remove_file(artifacts.join(REPORT_FILE));

    let module_path = env.layout.module(track, module);
    let log_dir = env.layout.logs(track, &format!("stage_{}_rev{}", stage.ordinal(), module.revision));
    clear_dir(&log_dir)?;
    let data = env.data_for(Mode::Sample);
    let mut args = vec![
        "run-stage".to_string(),
        "--module".into(),
        module_path.display().to_string(),
        "--contract".into(),
        env.layout.contract().display().to_string(),
        "--artifacts".into(),
        artifacts.display().to_string(),
        "--sample".into(),
        env.sample_limit.to_string(),
    ];
    let script = match &env.shim {
        Some(shim) => shim.clone(),
        None => {
            args.extend([
                "--data".into(),
                data.display().to_string(),
                "--stage".into(),
                stage.to_string(),
                "--seed".into(),
                env.seed.to_string(),
            ]);
            env.layout.launcher()
        }
    };
    let req = ExecRequest {
        script,
        args,
        log_dir: Some(log_dir.clone()),
        writable: vec![artifacts.clone()],
        readable: vec![data.to_path_buf(), env.data_dir.clone(), module_path, env.layout.contract()],
        env: vec![
            ("PIPEWRIGHT_DATA_DIR".into(), data.display().to_string()),
            ("PIPEWRIGHT_STAGE".into(), stage.to_string()),
            ("PIPEWRIGHT_SEED".into(), env.seed.to_string()),
        ],
    };
    let mut res = env.sandbox.execute(&req, env.sandbox.limits(env.stage_timeout_s))?;
    res.stage = Some(stage);
    annotate(&mut res, &log_dir);

    if res.exit_ok() {
        let in_scope = |a: &crate::model::ArtifactSpec| match stage {
            Stage::Preprocessing => a.producer == Stage::Preprocessing,
            _ => true,
        };
        let observed = match &env.shim {
            Some(_) => match read_report(&artifacts.join(REPORT_FILE)) {
                Ok(r) => {
                    let mine = build_report(env, stage, r.artifacts.clone(), in_scope);
                    if mine.verdicts != r.verdicts {
                        res.notes.push("external runner verdicts differ from recomputed verdicts".into());
                    }
                    r.artifacts
                }
                Err(e) => {
                    res.notes.push(format!("external runner report unusable: {e}"));
                    measure_all(&env.contract, &artifacts, env.sample_limit, in_scope)
                }
            },
            None => measure_all(&env.contract, &artifacts, env.sample_limit, in_scope),
        };
        let report = build_report(env, stage, observed, in_scope);
        write_report(&report, &log_dir)?;
        res.artifact_report = Some(report);
    }
    res.passed = res.exit_ok() && res.artifact_report.as_ref().is_some_and(ContractReport::all_pass);
    std::fs::write(log_dir.join("result.json"), to_canonical_json(&res)?)
        .ctx(|| format!("writing {}", log_dir.display()))?;
    let passed = res.passed;
    Ok((res, passed))
}

/// Submission conformance verdicts (subject `submission`).
pub fn check_submission(path: &Path, spec: &SubmissionSpec, data_dir: &Path) -> Vec<Verdict> {
    let v = |constraint: &str, pass: bool, detail: String| Verdict {
        subject: "submission".into(),
        constraint: constraint.into(),
        pass,
        detail,
    };
    let mut rdr = match csv::Reader::from_path(path) {
        Ok(r) => r,
        Err(_) => return vec![v("present", false, format!("{SUBMISSION_FILE} was not written"))],
    };
    let mut out = vec![v("present", true, SUBMISSION_FILE.into())];
    let header: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(|s| s.trim().to_string()).collect(),
        Err(e) => return vec![v("present", false, format!("unreadable: {e}"))],
    };
    let want = spec.format.columns();
    out.push(v(
        "header",
        header == want,
        format!("expected [{}], found [{}]", want.join(", "), header.join(", ")),
    ));
    let pred_idx: Vec<usize> = spec
        .format
        .prediction_columns
        .iter()
        .filter_map(|c| header.iter().position(|h| h == c))
        .collect();
    let mut rows = 0u64;
    let mut nulls = 0u64;
    for rec in rdr.records() {
        let Ok(rec) = rec else {
            nulls += 1;
            continue;
        };
        rows += 1;
        nulls += pred_idx
            .iter()
            .filter(|&&i| rec.get(i).is_none_or(stats::is_null))
            .count() as u64;
    }
    out.push(v(
        "prediction_nulls",
        nulls == 0,
        format!("{nulls} null prediction value(s)"),
    ));
    if let Some(test) = &spec.test_file {
        match count_rows(&data_dir.join(test)) {
            Some(n) => out.push(v(
                "rows",
                rows == n,
                format!("submission.rows == test.rows: {rows} vs {n}"),
            )),
            None => out.push(v("rows", false, format!("test file {test} unreadable"))),
        }
    }
    out
}

pub(crate) fn count_rows(path: &Path) -> Option<u64> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(crate::perception::delimiter_for(path))
        .flexible(true)
        .from_path(path)
        .ok()?;
    let mut n = 0;
    let mut rec = csv::ByteRecord::new();
    while rdr.read_byte_record(&mut rec).ok()? {
        n += 1;
    }
    Some(n)
}

/// Runs an assembled (or ensemble) pipeline end to end and applies the full
/// contract plus submission conformance. `passed` is the V_exec gate.
pub fn verify_integrated(
    env: &VerifyEnv,
    track: &str,
    module: &GeneratedModule,
    module_path: &Path,
    artifacts: &Path,
    mode: Mode,
    extra_readable: &[PathBuf],
) -> Result<ExecutionResult> {
    clear_dir(artifacts)?;
    let label = format!("{}_rev{}_{}", module.stage, module.revision, match mode {
        Mode::Sample => "sample",
        Mode::Full => "full",
    });
    let log_dir = env.layout.logs(track, &label);
    clear_dir(&log_dir)?;
    let data = env.data_for(mode);
    let req = ExecRequest {
        script: module_path.to_path_buf(),
        args: vec![
            "--data".into(),
            data.display().to_string(),
            "--artifacts".into(),
            artifacts.display().to_string(),
            "--sample".into(),
            env.sample_arg(mode).to_string(),
            "--seed".into(),
            env.seed.to_string(),
        ],
        log_dir: Some(log_dir.clone()),
        writable: vec![artifacts.to_path_buf()],
        readable: [data.to_path_buf(), env.data_dir.clone()]
            .into_iter()
            .chain(extra_readable.iter().cloned())
            .collect(),
        env: Vec::new(),
    };
    let timeout = match mode {
        Mode::Sample => env.stage_timeout_s,
        Mode::Full => env.full_timeout_s,
    };
    let mut res = env.sandbox.execute(&req, env.sandbox.limits(timeout))?;
    res.stage = Some(module.stage);
    annotate(&mut res, &log_dir);
    if res.exit_ok() {
        let observed = measure_all(&env.contract, artifacts, env.sample_limit, |_| true);
        let mut report = build_report(env, module.stage, observed, |_| true);
        if let Some(spec) = &env.submission {
            report
                .verdicts
                .extend(check_submission(&artifacts.join(SUBMISSION_FILE), spec, data));
        }
        write_report(&report, &log_dir)?;
        res.artifact_report = Some(report);
    } else if res.last_stage_started.is_some() {
        // Preprocessing ran: its side of the contract tells the classifier
        // whether the producer or the consumer broke the handoff.
        let prep = |a: &crate::model::ArtifactSpec| a.producer == Stage::Preprocessing;
        let observed = measure_all(&env.contract, artifacts, env.sample_limit, prep);
        let report = build_report(env, Stage::Preprocessing, observed, prep);
        write_report(&report, &log_dir)?;
        res.artifact_report = Some(report);
    }
    res.passed = res.exit_ok() && res.artifact_report.as_ref().is_some_and(ContractReport::all_pass);
    std::fs::write(log_dir.join("result.json"), to_canonical_json(&res)?)
        .ctx(|| format!("writing {}", log_dir.display()))?;
    Ok(res)
}
