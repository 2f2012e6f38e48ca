use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::assemble::ASSEMBLED_ENTRYPOINT;
use crate::error::{Error, Result};
use crate::model::{GeneratedModule, InterfaceContract, Stage, SubmissionFormat, TrackKind};
use crate::verify::{MARKER, SUBMISSION_FILE};

/// How validated tracks are combined into the final pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Best,
    Voting,
    Averaging,
    Stacking,
}

impl Aggregate {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregate::Best => "best",
            Aggregate::Voting => "voting",
            Aggregate::Averaging => "averaging",
            Aggregate::Stacking => "stacking",
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Aggregate {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "best" => Ok(Aggregate::Best),
            "voting" => Ok(Aggregate::Voting),
            "averaging" => Ok(Aggregate::Averaging),
            "stacking" => Ok(Aggregate::Stacking),
            other => Err(format!("unknown aggregate `{other}` (best, voting, averaging, stacking)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleMember {
    pub track: TrackKind,
    /// Assembled pipeline of the member. A relative path resolves against
    /// the directory of the ensemble module, which keeps the generated
    /// source independent of where the run lives.
    pub module_path: PathBuf,
}

const TEMPLATE: &str = r#"
import argparse
import csv
import importlib.util
import os
import shutil
import sys


def _load(name, path):
    spec = importlib.util.spec_from_file_location("member_" + name, path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    return header, rows


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([r.get(c, "") for c in header])


def _num(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return None


def _vote(values, weights):
    score = {}
    for v, w in zip(values, weights):
        score[v] = score.get(v, 0.0) + w
    best = max(score.values())
    for v in values:
        if score[v] == best:
            return v


def _mean(values, weights):
    nums = [_num(v) for v in values]
    if any(n is None for n in nums):
        return _vote(values, weights)
    total = sum(weights)
    return repr(sum(n * w for n, w in zip(nums, weights)) / total)


def _solve(a, b):
    n = len(b)
    m = [row[:] + [b[i]] for i, row in enumerate(a)]
    for c in range(n):
        p = max(range(c, n), key=lambda r: abs(m[r][c]))
        m[c], m[p] = m[p], m[c]
        if abs(m[c][c]) < 1e-12:
            return None
        for r in range(n):
            if r != c:
                f = m[r][c] / m[c][c]
                m[r] = [x - f * y for x, y in zip(m[r], m[c])]
    return [m[i][n] / m[i][i] for i in range(n)]


def _stack_weights(tables, rows):
    k = len(tables)
    truth = [tables[0][r].get("y_true") for r in rows]
    if not rows or any(t in (None, "") for t in truth):
        return [1.0] * k, None
    preds = [[t[r]["y_pred"] for r in rows] for t in tables]
    if REGRESSION:
        y = [_num(t) for t in truth]
        xs = [[_num(v) for v in p] for p in preds]
        if any(v is None for v in y) or any(v is None for x in xs for v in x):
            return [1.0] * k, None
        cols = xs + [[1.0] * len(rows)]
        a = [[sum(ci * cj for ci, cj in zip(c1, c2)) + (1e-6 if i == j else 0.0)
              for j, c2 in enumerate(cols)] for i, c1 in enumerate(cols)]
        b = [sum(ci * yi for ci, yi in zip(c, y)) for c in cols]
        w = _solve(a, b)
        if w is None:
            return [1.0] * k, None
        return w[:k], w[k]
    return [1e-9 + sum(1 for v, t in zip(p, truth) if v == t) / len(rows) for p in preds], None


def _linear(values, weights, bias):
    nums = [_num(v) for v in values]
    if any(n is None for n in nums):
        return _vote(values, [abs(w) for w in weights])
    return repr(sum(n * w for n, w in zip(nums, weights)) + bias)


def run_pipeline(data_dir, artifacts_dir, sample_limit=None, seed=0):
    os.makedirs(artifacts_dir, exist_ok=True)
    dirs = []
    for name, path in MEMBERS:
        sub = os.path.join(artifacts_dir, "members", name)
        path = os.path.join(os.path.dirname(os.path.abspath(__file__)), path)
        _load(name, path).run_pipeline(data_dir, sub, sample_limit, seed)
        dirs.append(sub)
    print(MARKER + ":start:ensemble", flush=True)
    first = dirs[0]
    for entry in sorted(os.listdir(first)):
        if entry in (PREDICTIONS_FILE, VALIDATION_FILE, SUBMISSION_FILE):
            continue
        src = os.path.join(first, entry)
        if os.path.isfile(src):
            shutil.copyfile(src, os.path.join(artifacts_dir, entry))

    vals = []
    for d in dirs:
        header, rows = _read(os.path.join(d, VALIDATION_FILE))
        vals.append((header, {r["row"]: r for r in rows}, [r["row"] for r in rows]))
    order = [r for r in vals[0][2] if all(r in v[1] for v in vals)]
    tables = [v[1] for v in vals]
    weights, bias = [1.0] * len(dirs), None
    if STRATEGY == "stacking":
        weights, bias = _stack_weights(tables, order)

    def agg(values):
        if bias is not None:
            return _linear(values, weights, bias)
        if REGRESSION:
            return _mean(values, weights)
        return _vote(values, weights)

    prob_cols = [c for c in vals[0][0] if c.startswith("p_")]
    if any([c for c in v[0] if c.startswith("p_")] != prob_cols for v in vals):
        prob_cols = []
    out_val = []
    for r in order:
        row = {"row": r, "y_true": tables[0][r].get("y_true", "")}
        row["y_pred"] = agg([t[r]["y_pred"] for t in tables])
        for c in prob_cols:
            ps = [_num(t[r][c]) or 0.0 for t in tables]
            total = sum(abs(w) for w in weights)
            row[c] = repr(sum(p * abs(w) for p, w in zip(ps, weights)) / total)
        out_val.append(row)
    _write(os.path.join(artifacts_dir, VALIDATION_FILE), ["row", "y_true", "y_pred"] + prob_cols, out_val)

    preds = [_read(os.path.join(d, PREDICTIONS_FILE))[1] for d in dirs]
    n = len(preds[0])
    if any(len(p) != n for p in preds):
        sys.stderr.write("ensemble members disagree on prediction row counts\n")
        sys.exit(1)
    out = []
    for i in range(n):
        row = {c: preds[0][i].get(c, "") for c in ID_COLUMNS}
        for c in PREDICTION_COLUMNS:
            row[c] = agg([p[i].get(c, "") for p in preds])
        out.append(row)
    columns = ID_COLUMNS + PREDICTION_COLUMNS
    _write(os.path.join(artifacts_dir, PREDICTIONS_FILE), columns, out)
    _write(os.path.join(artifacts_dir, SUBMISSION_FILE), columns, out)
    print(MARKER + ":end:ensemble", flush=True)


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--data", required=True)
    p.add_argument("--artifacts", required=True)
    p.add_argument("--sample", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    run_pipeline(a.data, a.artifacts, a.sample or None, a.seed)
"#;

fn py_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn py_list(items: &[String]) -> String {
    format!("[{}]", items.iter().map(|s| py_str(s)).collect::<Vec<_>>().join(", "))
}

/// Composite pipeline running each member and combining predictions.
/// Voting and averaging coincide for class labels; on a regression
/// objective both take the mean. Stacking fits per-member weights on the
/// shared validation rows (accuracy weights for labels, least squares with
/// an intercept for numeric targets).
pub fn build_ensemble(
    members: &[EnsembleMember],
    contract: &InterfaceContract,
    submission: &SubmissionFormat,
    strategy: Aggregate,
    regression: bool,
    revision: u32,
) -> Result<GeneratedModule> {
    if members.len() < 2 {
        return Err(Error::Invalid(format!("an ensemble needs at least 2 members, got {}", members.len())));
    }
    if strategy == Aggregate::Best {
        return Err(Error::Invalid("`best` is a selection, not an ensemble".into()));
    }
    let file_of = |name: &str, default: &str| {
        contract.artifact(name).map(|a| a.file_name()).unwrap_or_else(|| default.to_string())
    };
    let mut s = String::new();
    s.push_str(&format!("# Ensemble ({strategy}) over {} members.\n", members.len()));
    s.push_str("MEMBERS = [\n");
    for m in members {
        s.push_str(&format!(
            "    ({}, {}),\n",
            py_str(m.track.as_str()),
            py_str(&m.module_path.display().to_string())
        ));
    }
    s.push_str("]\n");
    s.push_str(&format!("STRATEGY = {}\n", py_str(strategy.as_str())));
    s.push_str(&format!("REGRESSION = {}\n", if regression { "True" } else { "False" }));
    s.push_str(&format!("ID_COLUMNS = {}\n", py_list(&submission.id_columns)));
    s.push_str(&format!("PREDICTION_COLUMNS = {}\n", py_list(&submission.prediction_columns)));
    s.push_str(&format!("PREDICTIONS_FILE = {}\n", py_str(&file_of("predictions", "predictions.csv"))));
    s.push_str(&format!(
        "VALIDATION_FILE = {}\n",
        py_str(&file_of(crate::planning::VALIDATION_ARTIFACT, "validation_predictions.csv"))
    ));
    s.push_str(&format!("SUBMISSION_FILE = {}\n", py_str(SUBMISSION_FILE)));
    s.push_str(&format!("MARKER = {}\n", py_str(MARKER)));
    s.push_str(TEMPLATE);
    Ok(GeneratedModule::new(Stage::Ensemble, s, ASSEMBLED_ENTRYPOINT, revision))
}
