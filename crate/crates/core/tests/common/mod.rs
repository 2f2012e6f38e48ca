#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pipewright::harness::{cmd_run, ProviderKind, RunConfig, RunOutcome};
use pipewright::layout::RunLayout;
use pipewright::model::{FaultClass, FaultClassification, TrackKind, TrackRun};
use tempfile::TempDir;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn toy_task() -> PathBuf {
    fixtures().join("tasks").join("toy")
}

pub fn toy_truth() -> PathBuf {
    fixtures().join("tasks").join("toy_truth.csv")
}

pub fn catalog() -> PathBuf {
    fixtures().join("catalog.json")
}

fn copy_tree(src: &Path, dst: &Path) {
    std::fs::create_dir_all(dst).unwrap();
    for e in std::fs::read_dir(src).unwrap() {
        let e = e.unwrap();
        let to = dst.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_tree(&e.path(), &to);
        } else {
            std::fs::copy(e.path(), to).unwrap();
        }
    }
}

/// A writable copy of the golden scripted fixtures.
pub struct FixtureSet {
    dir: TempDir,
}

impl FixtureSet {
    pub fn golden() -> Self {
        let dir = tempfile::tempdir().unwrap();
        copy_tree(&fixtures().join("scripted").join("golden"), dir.path());
        FixtureSet { dir }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn read(&self, rel: &str) -> String {
        std::fs::read_to_string(self.dir.path().join(rel)).unwrap()
    }

    pub fn write(&self, rel: &str, text: &str) -> &Self {
        std::fs::write(self.dir.path().join(rel), text).unwrap();
        self
    }
}

/// `text` with `from` replaced by `to`; panics when `from` is absent so a
/// drifting fixture cannot silently produce a no-op mutation.
pub fn mutate(text: &str, from: &str, to: &str) -> String {
    assert!(text.contains(from), "mutation anchor not found: {from}");
    text.replacen(from, to, 1)
}

pub fn config(fixtures: &Path) -> RunConfig {
    RunConfig {
        provider: ProviderKind::Scripted,
        fixtures: Some(fixtures.to_path_buf()),
        tracks: vec![TrackKind::Traditional],
        catalog: Some(catalog()),
        head_timeout: 0.0,
        time_budget: 120.0,
        stage_timeout: 60.0,
        ..RunConfig::default()
    }
}

pub fn run_toy(cfg: &RunConfig, out: &Path) -> RunOutcome {
    cmd_run(&toy_task(), cfg, out).unwrap()
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

pub const PREP: &str = "traditional/prep_coder_0.py";
pub const MODEL: &str = "traditional/model_coder_0.py";
pub const DEBUGGER: &str = "traditional/debugger";

/// An injected defect: one string mutation of one golden stage.
pub struct Defect {
    pub name: &'static str,
    pub file: &'static str,
    pub from: &'static str,
    pub to: &'static str,
    pub class: FaultClass,
    pub infra: bool,
}

impl Defect {
    pub fn broken(&self, golden: &FixtureSet) -> String {
        mutate(&golden.read(self.file), self.from, self.to)
    }

    /// Fixture set whose coder emits the defect and whose debugger returns
    /// the broken stage `fix_at - 1` times before returning the golden one.
    pub fn fixtures(&self, fix_at: u32) -> FixtureSet {
        let set = FixtureSet::golden();
        let golden = set.read(self.file);
        let broken = self.broken(&set);
        set.write(self.file, &broken);
        for n in 0..fix_at {
            let text = if n + 1 == fix_at { &golden } else { &broken };
            set.write(&format!("{DEBUGGER}_{n}.py"), text);
        }
        set
    }
}

const PREP_BODY: &str = "    os.makedirs(artifacts_dir, exist_ok=True)\n";
const MODEL_BODY: &str = "def train_and_predict(data_dir, artifacts_dir, sample_limit=None, seed=0):\n";
const TARGET_ROWS: &str = "[[int(r[\"label\"])] for r in train]";
const PRED_ROWS: &str = "w.writerows(zip(ids, _predict(final, T)))";

pub fn defects() -> Vec<Defect> {
    use FaultClass::{ContractFulfillmentFailure as F, ContractUsageViolation as U};
    let d = |name, file, from, to, class, infra| Defect { name, file, from, to, class, infra };
    vec![
        d(
            "prep_missing_artifact",
            PREP,
            "    _write(os.path.join(artifacts_dir, \"test_features.csv\"), header, _features(test, fill))\n",
            "",
            F,
            false,
        ),
        d("prep_wrong_dtype", PREP, "[x1, float(r[\"x2\"])]", "[x1, \"v\" + r[\"x2\"]]", F, false),
        d("prep_null_violation", PREP, "float(r[\"x1\"]) if r[\"x1\"] != \"\" else fill", "r[\"x1\"]", F, false),
        d("prep_row_relation", PREP, TARGET_ROWS, "[[int(r[\"label\"])] for r in train][:-1]", F, false),
        d(
            "prep_exception",
            PREP,
            PREP_BODY,
            "    os.makedirs(artifacts_dir, exist_ok=True)\n    raise ValueError(\"scale mismatch\")\n",
            F,
            false,
        ),
        d("prep_missing_dependency", PREP, "import csv\n", "import csv\nimport fancyboost\n", F, true),
        d("model_missing_artifact", MODEL, "\"predictions.csv\"), \"w\"", "\"preds.csv\"), \"w\"", U, false),
        d(
            "model_wrong_dtype",
            MODEL,
            PRED_ROWS,
            "w.writerows((i, \"yes\" if p else \"no\") for i, p in zip(ids, _predict(final, T)))",
            U,
            false,
        ),
        d(
            "model_null_violation",
            MODEL,
            PRED_ROWS,
            "w.writerows((i, \"\" if n % 2 else p) for n, (i, p) in enumerate(zip(ids, _predict(final, T))))",
            U,
            false,
        ),
        d("model_row_relation", MODEL, PRED_ROWS, "w.writerows(zip(ids[:-1], _predict(final, T)))", U, false),
        d(
            "model_exception_clean_prep",
            MODEL,
            MODEL_BODY,
            "def train_and_predict(data_dir, artifacts_dir, sample_limit=None, seed=0):\n    raise RuntimeError(\"diverged\")\n",
            U,
            false,
        ),
        d("model_missing_dependency", MODEL, "import csv\n", "import csv\nimport fancyboost\n", U, true),
    ]
}

/// Classifications written for each repair attempt, in order.
pub fn classifications(layout: &RunLayout, track: &str) -> Vec<FaultClassification> {
    let mut out = Vec::new();
    for n in 0..64 {
        let p = layout.debug_attempt(track, n).join("classification.json");
        if let Ok(text) = std::fs::read_to_string(&p) {
            out.push(serde_json::from_str(&text).unwrap());
        }
    }
    out
}

pub fn track_run(layout: &RunLayout, track: &str) -> TrackRun {
    let text = std::fs::read_to_string(layout.track_dir(track).join("run.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}
