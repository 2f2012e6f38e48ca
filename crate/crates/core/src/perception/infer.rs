use serde::{Deserialize, Serialize};

use super::profile::{looks_like_submission, looks_like_test, looks_like_train};
use crate::error::{Error, Result};
use crate::model::{
    metric_info, FileEntry, FileRole, MetaFeatures, ObjectiveKind, SubmissionFormat, TaskSummary,
};
use crate::stats;

/// A target with at most `max(min, ratio * rows)` distinct values is a class label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThreshold {
    pub min: u64,
    pub ratio: f64,
}

impl Default for ClassThreshold {
    fn default() -> Self {
        ClassThreshold { min: 20, ratio: 0.05 }
    }
}

fn file_role(path: &str, extension: &str) -> FileRole {
    let lower = path.to_ascii_lowercase();
    if looks_like_submission(path) {
        FileRole::SampleSubmission
    } else if looks_like_train(path) {
        FileRole::Train
    } else if looks_like_test(path) {
        FileRole::Test
    } else if lower.contains("label") {
        FileRole::Labels
    } else if matches!(extension, "md" | "txt") && lower.contains("desc") {
        FileRole::Description
    } else {
        FileRole::Aux
    }
}

/// Fills the fields left unknown by description analysis from the measured
/// profile. Known fields are never overwritten, so the call is idempotent.
pub fn infer_semantics(summary: &TaskSummary, f: &MetaFeatures, th: ClassThreshold) -> Result<TaskSummary> {
    let mut out = summary.clone();

    if out.file_map.is_empty() {
        out.file_map = f
            .file_manifest
            .iter()
            .map(|e| FileEntry {
                path: e.path.clone(),
                role: if f.primary_table.as_deref() == Some(e.path.as_str()) {
                    FileRole::Train
                } else {
                    file_role(&e.path, &e.extension)
                },
            })
            .collect();
    }

    if out.target_column.is_none() {
        let t = f.target_candidates.first().ok_or_else(|| {
            Error::NoTarget(
                "every column of the training table also appears in the test table and none is named like a target"
                    .into(),
            )
        })?;
        out.target_column = Some(t.clone());
    }
    let target = out.target_column.clone().unwrap_or_default();

    if out.objective_kind == ObjectiveKind::Unknown {
        out.objective_kind = match f.columns.iter().find(|c| c.name == target) {
            Some(c) => {
                let cat_max = stats::class_threshold(f.row_count, th.min, th.ratio);
                if !c.dtype.is_numeric() || c.distinct_count <= cat_max {
                    ObjectiveKind::Classification
                } else {
                    ObjectiveKind::Regression
                }
            }
            None => ObjectiveKind::Unknown,
        };
    }

    if !out.metric_known() {
        let default = match out.objective_kind {
            ObjectiveKind::Regression => Some("rmse"),
            ObjectiveKind::Classification => Some("accuracy"),
            _ => None,
        };
        if let Some(m) = default {
            out.optimization_metric = m.into();
        }
    }
    if out.metric_direction.is_none() {
        out.metric_direction = metric_info(&out.optimization_metric).map(|m| m.direction);
    }

    if out.submission_format.is_none() {
        out.submission_format = submission_from_profile(f, &target);
    }
    Ok(out)
}

fn submission_from_profile(f: &MetaFeatures, target: &str) -> Option<SubmissionFormat> {
    if let Some(t) = f.tables.iter().find(|t| looks_like_submission(&t.file)) {
        let header: Vec<String> = t.columns.iter().map(|c| c.name.clone()).collect();
        if let Some(fmt) = SubmissionFormat::from_header(&header) {
            return Some(fmt);
        }
    }
    let test = f
        .tables
        .iter()
        .find(|t| looks_like_test(&t.file) && f.primary_table.as_deref() != Some(t.file.as_str()));
    let id = test
        .and_then(|t| t.columns.iter().find(|c| stats::is_id_like(&c.name)))
        .map(|c| c.name.clone())
        .unwrap_or_else(|| "row".to_string());
    Some(SubmissionFormat {
        id_columns: vec![id],
        prediction_columns: vec![target.to_string()],
    })
}
