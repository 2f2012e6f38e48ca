use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::metric::metric_info;

/// What the user hands us: free text, a data directory and a few limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub description_text: String,
    pub data_root: PathBuf,
    #[serde(default)]
    pub metric_spec: Option<MetricSpec>,
    #[serde(default)]
    pub submission_sample: Option<PathBuf>,
    /// Seconds.
    pub time_budget: f64,
    pub exec_interpreter: String,
}

impl TaskSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        match std::fs::read_dir(&self.data_root) {
            Ok(_) => {}
            Err(e) => out.push(format!(
                "data_root {} is not a readable directory: {e}",
                self.data_root.display()
            )),
        }
        if !(self.time_budget > 0.0) {
            out.push(format!("time_budget must be > 0, got {}", self.time_budget));
        }
        if self.exec_interpreter.trim().is_empty() {
            out.push("exec_interpreter is empty".into());
        }
        out
    }

    /// Empty descriptions get the same treatment as the zero-knowledge prompt.
    pub fn is_stripped(&self) -> bool {
        let d = self.description_text.trim();
        d.is_empty() || d == crate::perception::STRIPPED_DESCRIPTION
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    #[serde(default)]
    pub direction: Option<MetricDirection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Classification,
    Regression,
    Multilabel,
    Ranking,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricDirection {
    HigherBetter,
    LowerBetter,
    BoundedPm1,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionFormat {
    pub id_columns: Vec<String>,
    pub prediction_columns: Vec<String>,
}

impl SubmissionFormat {
    /// Header order of the submission file.
    pub fn columns(&self) -> Vec<String> {
        self.id_columns
            .iter()
            .chain(self.prediction_columns.iter())
            .cloned()
            .collect()
    }

    /// Treats the first header column as the id, the rest as predictions.
    pub fn from_header(header: &[String]) -> Option<Self> {
        if header.len() < 2 {
            return None;
        }
        Some(SubmissionFormat {
            id_columns: vec![header[0].clone()],
            prediction_columns: header[1..].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileRole {
    Train,
    Test,
    SampleSubmission,
    Labels,
    Description,
    Aux,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the data root.
    pub path: String,
    pub role: FileRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub objective_kind: ObjectiveKind,
    /// Registry id, or `unknown`.
    pub optimization_metric: String,
    #[serde(default)]
    pub metric_direction: Option<MetricDirection>,
    #[serde(default)]
    pub target_column: Option<String>,
    #[serde(default)]
    pub submission_format: Option<SubmissionFormat>,
    #[serde(default)]
    pub file_map: Vec<FileEntry>,
}

impl TaskSummary {
    pub const UNKNOWN_METRIC: &'static str = "unknown";

    pub fn unknown() -> Self {
        TaskSummary {
            objective_kind: ObjectiveKind::Unknown,
            optimization_metric: Self::UNKNOWN_METRIC.into(),
            metric_direction: None,
            target_column: None,
            submission_format: None,
            file_map: Vec::new(),
        }
    }

    pub fn metric_known(&self) -> bool {
        self.optimization_metric != Self::UNKNOWN_METRIC
    }

    pub fn files_with_role(&self, role: FileRole) -> impl Iterator<Item = &str> {
        self.file_map
            .iter()
            .filter(move |e| e.role == role)
            .map(|e| e.path.as_str())
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(fmt) = &self.submission_format {
            if fmt.id_columns.is_empty() {
                out.push("submission_format has no id column".into());
            }
            if fmt.prediction_columns.is_empty() {
                out.push("submission_format has no prediction column".into());
            }
        }
        if self.metric_known() && metric_info(&self.optimization_metric).is_none() {
            out.push(format!(
                "metric `{}` is not in the registry",
                self.optimization_metric
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn submission_from_header() {
        let f = SubmissionFormat::from_header(&["id".into(), "target".into()]).unwrap();
        assert_eq!(f.id_columns, vec!["id"]);
        assert_eq!(f.columns(), vec!["id", "target"]);
        assert!(SubmissionFormat::from_header(&["id".into()]).is_none());
    }

    #[test]
    fn summary_rejects_unregistered_metric() {
        let mut s = TaskSummary::unknown();
        assert!(s.validate().is_empty());
        s.optimization_metric = "bleu".into();
        assert_eq!(s.validate().len(), 1);
    }

    #[test]
    fn spec_validation() {
        let dir = tempfile::tempdir().unwrap();
        let spec = TaskSpec {
            description_text: String::new(),
            data_root: dir.path().into(),
            metric_spec: None,
            submission_sample: None,
            time_budget: 0.0,
            exec_interpreter: "python3".into(),
        };
        let v = spec.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(spec.is_stripped());
    }
}
