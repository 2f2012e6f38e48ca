//! `bench`: runs a list of split tasks, grades each submission against its
//! sealed truth and aggregates. `report` recomputes the aggregates from the
//! per-task `grade.json` files.
//!
//! A task entry is a directory produced by `split` (`task/`, `sealed/`,
//! `manifest.json`). Output:
//!
//! ```text
//! <out>/<task>/run/...        run directory
//! <out>/<task>/grade.json
//! <out>/bench.json  <out>/bench.csv
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{cmd_run, RunReport};
use super::split::{SplitManifest, MANIFEST_FILE, TRUTH_FILE};
use crate::error::{Error, IoContext, Result};
use crate::evaluation::{aps, compute_metric, normalize_for_metric, ValidationSet};
use crate::model::{metric_info, to_canonical_json, MetricDirection, NormalizedScore};
use crate::par::{self, Exec};

pub const GRADE_FILE: &str = "grade.json";

/// Raw-metric thresholds of one task, in the metric's own direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub median: f64,
    #[serde(default)]
    pub bronze: Option<f64>,
    #[serde(default)]
    pub silver: Option<f64>,
    #[serde(default)]
    pub gold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Medal {
    Bronze,
    Silver,
    Gold,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskTelemetry {
    pub wall_seconds: f64,
    pub llm_calls: u64,
    pub tokens: u64,
    pub estimated_cost: f64,
    pub debug_attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grade {
    pub task: String,
    pub metric: String,
    pub valid: bool,
    pub raw: Option<f64>,
    pub normalized: f64,
    pub failure: Option<String>,
    pub above_median: Option<bool>,
    pub medal: Option<Medal>,
    pub telemetry: TaskTelemetry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub tasks: usize,
    pub aps: f64,
    pub pct_valid: f64,
    /// Present when every task has thresholds.
    pub pct_above_median: Option<f64>,
    pub medals: Option<BTreeMap<Medal, usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub grades: Vec<Grade>,
    pub aggregate: Aggregate,
}

fn better_or_equal(direction: MetricDirection, a: f64, b: f64) -> bool {
    match direction {
        MetricDirection::LowerBetter => a <= b,
        _ => a >= b,
    }
}

fn strictly_better(direction: MetricDirection, a: f64, b: f64) -> bool {
    a != b && better_or_equal(direction, a, b)
}

pub fn medal_for(direction: MetricDirection, raw: f64, t: &Thresholds) -> Option<Medal> {
    [(t.gold, Medal::Gold), (t.silver, Medal::Silver), (t.bronze, Medal::Bronze)]
        .into_iter()
        .find_map(|(th, m)| th.filter(|&th| better_or_equal(direction, raw, th)).map(|_| m))
}

/// Reads `id,<target>` columns of a CSV into an id → value map, rejecting
/// duplicate ids.
fn read_keyed(path: &Path, id: &str, target: &str) -> Result<(Vec<String>, BTreeMap<String, String>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::ScoringFailed(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |n: &str| {
        header
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| Error::ScoringFailed(format!("{} has no `{n}` column", path.display())))
    };
    let (ii, ti) = (col(id)?, col(target)?);
    let mut order = Vec::new();
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let k = rec.get(ii).unwrap_or_default().trim().to_string();
        if out.insert(k.clone(), rec.get(ti).unwrap_or_default().trim().to_string()).is_some() {
            return Err(Error::ScoringFailed(format!("id `{k}` appears twice in {}", path.display())));
        }
        order.push(k);
    }
    Ok((order, out))
}

/// Raw metric of a submission against the sealed truth, joined on id. The
/// submission must cover exactly the truth ids.
pub fn grade_submission(submission: &Path, truth: &Path, id: &str, target: &str, metric: &str) -> Result<f64> {
    let (order, t) = read_keyed(truth, id, target)?;
    let (_, s) = read_keyed(submission, id, target)?;
    let missing = t.keys().filter(|k| !s.contains_key(*k)).count();
    let extra = s.keys().filter(|k| !t.contains_key(*k)).count();
    if missing > 0 || extra > 0 {
        return Err(Error::ScoringFailed(format!("submission ids differ from the truth: {missing} missing, {extra} unexpected")));
    }
    let set = ValidationSet {
        rows: (0..order.len()).collect(),
        y_true: order.iter().map(|k| t[k].clone()).collect(),
        y_pred: order.iter().map(|k| s[k].clone()).collect(),
        proba: None,
    };
    compute_metric(metric, &set)
}

pub fn task_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string())
}

fn grade_task(dir: &Path, cfg: &RunConfig, out: &Path, thresholds: Option<&Thresholds>) -> Grade {
    let name = task_name(dir);
    let run_dir = out.join(&name).join("run");
    let started = Instant::now();
    let mut g = Grade {
        task: name.clone(),
        metric: String::new(),
        valid: false,
        raw: None,
        normalized: 0.0,
        failure: None,
        above_median: None,
        medal: None,
        telemetry: TaskTelemetry::default(),
    };
    let outcome = (|| -> std::result::Result<(RunReport, f64), (Option<RunReport>, Error)> {
        let manifest = SplitManifest::load(&dir.join(MANIFEST_FILE)).map_err(|e| (None, e))?;
        let o = cmd_run(&dir.join("task"), cfg, &run_dir).map_err(|e| (None, e))?;
        let report = o.report;
        if !report.succeeded() {
            let f = report.failure.as_ref().map(|f| format!("{}: {}", f.code, f.message)).unwrap_or_default();
            return Err((Some(report), Error::Invalid(format!("run failed: {f}"))));
        }
        let metric = report.metric.clone().unwrap_or_default();
        match grade_submission(
            &o.layout.submission(),
            &dir.join("sealed").join(TRUTH_FILE),
            &manifest.id_column,
            &manifest.target,
            &metric,
        ) {
            Ok(r) => Ok((report, r)),
            Err(e) => Err((Some(report), e)),
        }
    })();
    let fill_telemetry = |g: &mut Grade, r: &RunReport| {
        g.metric = r.metric.clone().unwrap_or_default();
        g.telemetry.llm_calls = r.telemetry.llm_calls;
        g.telemetry.tokens = r.telemetry.total_tokens();
        g.telemetry.estimated_cost = r.telemetry.estimated_cost;
        g.telemetry.debug_attempts = r.tracks.iter().map(|t| t.debug_attempts_used).sum();
    };
    match outcome {
        Ok((report, raw)) => {
            fill_telemetry(&mut g, &report);
            match normalize_for_metric(Some(raw), &g.metric, false) {
                Ok(n) => {
                    g.valid = true;
                    g.raw = Some(raw);
                    g.normalized = n.value();
                }
                Err(e) => g.failure = Some(format!("{}: {e}", e.code())),
            }
        }
        Err((report, e)) => {
            if let Some(r) = &report {
                fill_telemetry(&mut g, r);
            }
            g.failure = Some(format!("{}: {e}", e.code()));
        }
    }
    if let (Some(t), Some(info)) = (thresholds, metric_info(&g.metric)) {
        g.above_median = Some(g.raw.is_some_and(|r| strictly_better(info.direction, r, t.median)));
        g.medal = g.raw.and_then(|r| medal_for(info.direction, r, t));
    } else if thresholds.is_some() {
        g.above_median = Some(false);
    }
    g.telemetry.wall_seconds = started.elapsed().as_secs_f64();
    g
}

pub fn aggregate(grades: &[Grade]) -> Result<Aggregate> {
    let scores: Vec<NormalizedScore> = grades
        .iter()
        .map(|g| match (g.valid, g.raw) {
            (true, Some(r)) => normalize_for_metric(Some(r), &g.metric, false),
            _ => Ok(NormalizedScore::failure()),
        })
        .collect::<Result<_>>()?;
    let n = grades.len();
    let all_thresholds = n > 0 && grades.iter().all(|g| g.above_median.is_some());
    let medals = all_thresholds.then(|| {
        let mut m = BTreeMap::new();
        for x in [Medal::Bronze, Medal::Silver, Medal::Gold] {
            m.insert(x, grades.iter().filter(|g| g.medal == Some(x)).count());
        }
        m
    });
    Ok(Aggregate {
        tasks: n,
        aps: aps(&scores)?,
        pct_valid: 100.0 * grades.iter().filter(|g| g.valid).count() as f64 / n as f64,
        pct_above_median: all_thresholds
            .then(|| 100.0 * grades.iter().filter(|g| g.above_median == Some(true)).count() as f64 / n as f64),
        medals,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).ctx(|| format!("creating {}", d.display()))?;
    }
    std::fs::write(path, text).ctx(|| format!("writing {}", path.display()))
}

/// One row per task plus the aggregate row.
pub fn table_csv(report: &BenchReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "task", "metric", "valid", "raw", "p_norm", "above_median", "medal", "wall_s", "llm_calls", "tokens",
        "cost", "debug_attempts", "failure",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for g in &report.grades {
        w.write_record([
            g.task.clone(),
            g.metric.clone(),
            g.valid.to_string(),
            opt(g.raw),
            format!("{:.6}", g.normalized),
            g.above_median.map(|b| b.to_string()).unwrap_or_default(),
            g.medal.map(|m| format!("{m:?}").to_lowercase()).unwrap_or_default(),
            format!("{:.1}", g.telemetry.wall_seconds),
            g.telemetry.llm_calls.to_string(),
            g.telemetry.tokens.to_string(),
            format!("{:.4}", g.telemetry.estimated_cost),
            g.telemetry.debug_attempts.to_string(),
            g.failure.clone().unwrap_or_default(),
        ])?;
    }
    let a = &report.aggregate;
    w.write_record([
        "ALL".to_string(),
        String::new(),
        format!("{:.2}%", a.pct_valid),
        String::new(),
        format!("{:.6}", a.aps),
        opt(a.pct_above_median).to_string(),
        a.medals
            .as_ref()
            .map(|m| m.iter().map(|(k, v)| format!("{k:?}={v}").to_lowercase()).collect::<Vec<_>>().join(" "))
            .unwrap_or_default(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ])?;
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

pub fn load_thresholds(path: &Path) -> Result<BTreeMap<String, Thresholds>> {
    let text = std::fs::read_to_string(path).ctx(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Runs and grades every task. Task failures score 0 and never stop the batch.
pub fn cmd_bench(
    tasks: &[PathBuf],
    cfg: &RunConfig,
    out: &Path,
    parallel: usize,
    thresholds: Option<&Path>,
) -> Result<BenchReport> {
    if tasks.is_empty() {
        return Err(Error::Usage("the task list is empty".into()));
    }
    let names: BTreeSet<String> = tasks.iter().map(|t| task_name(t)).collect();
    if names.len() != tasks.len() {
        return Err(Error::Usage("task directory names must be unique".into()));
    }
    cfg.validate()?;
    let th = match thresholds {
        Some(p) => Some(load_thresholds(p)?),
        None => None,
    };
    let exec = if parallel > 1 { Exec::Parallel } else { Exec::Sequential };
    let grades = par::map_capped(exec, parallel.max(1), tasks, |t| {
        let th = th.as_ref().and_then(|m| m.get(&task_name(t)));
        let g = grade_task(t, cfg, out, th);
        if let Err(e) = to_canonical_json(&g)
            .map_err(Error::from)
            .and_then(|s| write_text(&out.join(&g.task).join(GRADE_FILE), &s))
        {
            log::error!("writing grade for {}: {e}", g.task);
        }
        g
    });
    let report = BenchReport {
        aggregate: aggregate(&grades)?,
        grades,
    };
    write_text(&out.join("bench.json"), &to_canonical_json(&report)?)?;
    write_text(&out.join("bench.csv"), &table_csv(&report)?)?;
    Ok(report)
}

/// Recomputes the aggregates of a bench directory from its grade files.
pub fn cmd_report(bench_dir: &Path) -> Result<BenchReport> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(bench_dir)
        .ctx(|| format!("reading {}", bench_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join(GRADE_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Usage(format!("no {GRADE_FILE} files under {}", bench_dir.display())));
    }
    let mut grades = Vec::new();
    for d in dirs {
        let p = d.join(GRADE_FILE);
        let text = std::fs::read_to_string(&p).ctx(|| format!("reading {}", p.display()))?;
        grades.push(serde_json::from_str::<Grade>(&text)?);
    }
    if let Ok(text) = std::fs::read_to_string(bench_dir.join("bench.json")) {
        if let Ok(prev) = serde_json::from_str::<BenchReport>(&text) {
            let order: Vec<&str> = prev.grades.iter().map(|g| g.task.as_str()).collect();
            grades.sort_by_key(|g| order.iter().position(|t| *t == g.task).unwrap_or(usize::MAX));
        }
    }
    Ok(BenchReport {
        aggregate: aggregate(&grades)?,
        grades,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grade(task: &str, metric: &str, raw: Option<f64>) -> Grade {
        Grade {
            task: task.into(),
            metric: metric.into(),
            valid: raw.is_some(),
            raw,
            normalized: raw.map(|r| normalize_for_metric(Some(r), metric, false).unwrap().value()).unwrap_or(0.0),
            failure: None,
            above_median: None,
            medal: None,
            telemetry: TaskTelemetry::default(),
        }
    }

    #[test]
    fn failures_score_zero() {
        let a = aggregate(&[grade("a", "accuracy", Some(0.8)), grade("b", "accuracy", None)]).unwrap();
        assert!((a.aps - 0.4).abs() < 1e-12);
        assert_eq!(a.pct_valid, 50.0);
        assert_eq!(a.pct_above_median, None);
    }

    #[test]
    fn medals_respect_direction() {
        let t = Thresholds { median: 1.0, bronze: Some(0.8), silver: Some(0.6), gold: Some(0.5) };
        assert_eq!(medal_for(MetricDirection::LowerBetter, 0.7, &t), Some(Medal::Bronze));
        assert_eq!(medal_for(MetricDirection::LowerBetter, 0.5, &t), Some(Medal::Gold));
        assert_eq!(medal_for(MetricDirection::LowerBetter, 0.9, &t), None);
        assert!(strictly_better(MetricDirection::LowerBetter, 0.9, t.median));
    }

    #[test]
    fn grading_joins_on_id() {
        let d = tempfile::tempdir().unwrap();
        let t = d.path().join("t.csv");
        let s = d.path().join("s.csv");
        std::fs::write(&t, "id,y\n1,a\n2,b\n3,a\n").unwrap();
        std::fs::write(&s, "y,id\nb,2\na,3\nb,1\n").unwrap();
        let acc = grade_submission(&s, &t, "id", "y", "accuracy").unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
        std::fs::write(&s, "id,y\n1,a\n2,b\n").unwrap();
        assert_eq!(grade_submission(&s, &t, "id", "y", "accuracy").unwrap_err().code(), "SCORING_FAILED");
    }

    #[test]
    fn empty_list_is_usage() {
        let d = tempfile::tempdir().unwrap();
        assert_eq!(cmd_bench(&[], &RunConfig::default(), d.path(), 1, None).unwrap_err().code(), "USAGE");
    }
}
