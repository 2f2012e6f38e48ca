//! Run directory layout (version 1).
//!
//! ```text
//! <run_dir>/
//!   layout.json                  {"layout_version": 1}
//!   config.json                  effective configuration
//!   summary.json  profile.json   perception outputs
//!   contract.json                shared interface contract
//!   blueprints/<track>.json
//!   tracks/<track>/stage_<n>_rev<r>.py
//!   tracks/<track>/logs/<label>/{stdout.txt,stderr.txt,result.json,contract_report.json}
//!   tracks/<track>/debug/attempt_<n>/
//!   tracks/<track>/run.json      final TrackRun
//!   artifacts/<track>/{stage,pipeline}/
//!   artifacts/ensemble/
//!   input/                       data root staged for the sandbox
//!   sample_data/                 head-sampled copy of the data root
//!   launcher.py  transcript.jsonl  report.json  submission.csv
//! ```

use std::path::{Path, PathBuf};

use crate::model::{GeneratedModule, TrackKind};

pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn blueprint(&self, track: TrackKind) -> PathBuf {
        self.root.join("blueprints").join(format!("{track}.json"))
    }

    pub fn track_dir(&self, track: &str) -> PathBuf {
        self.root.join("tracks").join(track)
    }

    pub fn module(&self, track: &str, m: &GeneratedModule) -> PathBuf {
        self.track_dir(track).join(m.file_name())
    }

    pub fn logs(&self, track: &str, label: &str) -> PathBuf {
        self.track_dir(track).join("logs").join(label)
    }

    pub fn debug_attempt(&self, track: &str, n: u32) -> PathBuf {
        self.track_dir(track).join("debug").join(format!("attempt_{n}"))
    }

    pub fn stage_artifacts(&self, track: &str) -> PathBuf {
        self.root.join("artifacts").join(track).join("stage")
    }

    pub fn pipeline_artifacts(&self, track: &str) -> PathBuf {
        self.root.join("artifacts").join(track).join("pipeline")
    }

    pub fn launcher(&self) -> PathBuf {
        self.root.join("launcher.py")
    }

    pub fn contract(&self) -> PathBuf {
        self.root.join("contract.json")
    }

    pub fn input(&self) -> PathBuf {
        self.root.join("input")
    }

    pub fn sample_data(&self) -> PathBuf {
        self.root.join("sample_data")
    }

    pub fn scratch(&self) -> PathBuf {
        self.root.join("scratch")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn transcript(&self) -> PathBuf {
        self.root.join("transcript.jsonl")
    }

    pub fn submission(&self) -> PathBuf {
        self.root.join("submission.csv")
    }
}
