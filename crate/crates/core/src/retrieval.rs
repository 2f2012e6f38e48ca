//! Model candidates for the pretrained and custom-neural tracks.
//!
//! The default retriever reads an offline catalog: a JSON object mapping a
//! modality (`tabular`, `vision`, `text`, `audio`) to a list of candidates.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Duration;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result};
use crate::model::{Dtype, MetaFeatures, TaskSummary};
use crate::par::{self, Exec};

/// In-flight cap for liveness checks.
pub const MAX_CONCURRENT_CHECKS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    PretrainedCheckpoint,
    Architecture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCandidate {
    pub kind: CandidateKind,
    pub name: String,
    /// URL or catalog id.
    pub reference: String,
    #[serde(default)]
    pub modalities: Vec<String>,
    #[serde(default)]
    pub validated: bool,
    #[serde(default)]
    pub notes: String,
}

impl ModelCandidate {
    pub fn is_url(&self) -> bool {
        self.reference.starts_with("http://") || self.reference.starts_with("https://")
    }
}

/// Supplies candidates to planning.
pub trait CandidateRetriever: Send + Sync {
    fn retrieve(&self, summary: &TaskSummary, f: &MetaFeatures, max_n: usize) -> Vec<ModelCandidate>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    entries: IndexMap<String, Vec<ModelCandidate>>,
}

impl Catalog {
    pub fn empty() -> Self {
        Catalog::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries: IndexMap<String, Vec<ModelCandidate>> = serde_json::from_str(text)?;
        Ok(Catalog { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).ctx(|| format!("reading catalog {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(Vec::is_empty)
    }
}

/// Modalities present in the data, from file extensions and text columns.
pub fn task_modalities(f: &MetaFeatures) -> BTreeSet<&'static str> {
    let mut out = BTreeSet::new();
    for e in &f.file_manifest {
        let m = match e.extension.to_ascii_lowercase().as_str() {
            "csv" | "tsv" | "parquet" | "jsonl" | "ndjson" => "tabular",
            "png" | "jpg" | "jpeg" | "bmp" | "gif" | "tif" | "tiff" | "webp" => "vision",
            "wav" | "mp3" | "flac" | "ogg" => "audio",
            "txt" if !e.path.to_ascii_lowercase().contains("description") => "text",
            _ => continue,
        };
        out.insert(m);
    }
    if f.columns.iter().any(|c| c.dtype == Dtype::Text) {
        out.insert("text");
    }
    out
}

impl CandidateRetriever for Catalog {
    fn retrieve(&self, _summary: &TaskSummary, f: &MetaFeatures, max_n: usize) -> Vec<ModelCandidate> {
        retrieve_candidates(self, f, max_n)
    }
}

/// Catalog entries whose modality matches the task, in catalog order (names
/// ordered within a modality), deduplicated, at most `max_n`.
pub fn retrieve_candidates(catalog: &Catalog, f: &MetaFeatures, max_n: usize) -> Vec<ModelCandidate> {
    let wanted = task_modalities(f);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (modality, list) in &catalog.entries {
        if !wanted.contains(modality.as_str()) {
            continue;
        }
        let mut list = list.clone();
        list.sort_by(|a, b| a.name.cmp(&b.name));
        for mut c in list {
            if !seen.insert((c.kind, c.name.clone())) {
                continue;
            }
            if !c.modalities.contains(modality) {
                c.modalities.push(modality.clone());
            }
            c.validated = false;
            out.push(c);
        }
    }
    out.truncate(max_n.max(1));
    out
}

/// HEAD-checks a URL reference. Network trouble marks the candidate
/// unvalidated with a note; catalog ids pass through untouched.
pub fn validate_reference(c: &ModelCandidate, timeout: Duration) -> ModelCandidate {
    let mut out = c.clone();
    if !c.is_url() {
        return out;
    }
    let cfg = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .max_redirects(0)
        .build();
    let agent = ureq::Agent::new_with_config(cfg);
    match agent.head(&c.reference).call() {
        Ok(resp) => {
            let status = resp.status().as_u16();
            out.validated = (200..400).contains(&status);
            if !out.validated {
                out.notes = format!("HEAD returned {status}");
            }
        }
        Err(e) => {
            out.validated = false;
            out.notes = format!("HEAD failed: {e}");
        }
    }
    out
}

pub fn validate_all(cands: &[ModelCandidate], timeout: Duration, exec: Exec) -> Vec<ModelCandidate> {
    par::map_capped(exec, MAX_CONCURRENT_CHECKS, cands, |c| validate_reference(c, timeout))
}

/// Drops unvalidated checkpoints when a validated one exists.
pub fn prefer_validated(cands: Vec<ModelCandidate>) -> Vec<ModelCandidate> {
    let any_valid = cands
        .iter()
        .any(|c| c.kind == CandidateKind::PretrainedCheckpoint && c.validated);
    cands
        .into_iter()
        .filter(|c| !(any_valid && c.kind == CandidateKind::PretrainedCheckpoint && !c.validated))
        .collect()
}
