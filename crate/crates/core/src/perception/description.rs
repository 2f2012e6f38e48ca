use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::llm::{extract_json, AgentRole, Gateway};
use crate::model::{metric_info, MetricDirection, ObjectiveKind, SubmissionFormat, TaskSpec, TaskSummary};

const SYSTEM: &str = "You read machine learning task descriptions and extract their constraints. \
Answer with one JSON object and nothing else.";

const SHAPE: &str = r#"{
  "objective_kind": "classification | regression | multilabel | ranking | unknown",
  "metric": "<metric id or unknown>",
  "metric_direction": "higher_better | lower_better | bounded_pm1 | null",
  "target_column": "<column name or null>",
  "submission_columns": ["<id column>", "<prediction column>", "..."]
}"#;

#[derive(Debug, Deserialize)]
struct AnalyzerReply {
    #[serde(default)]
    objective_kind: Option<ObjectiveKind>,
    #[serde(default)]
    metric: Option<String>,
    #[serde(default)]
    metric_direction: Option<MetricDirection>,
    #[serde(default)]
    target_column: Option<String>,
    #[serde(default)]
    submission_columns: Option<Vec<String>>,
}

fn read_header(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(crate::perception::delimiter_for(path))
        .from_path(path)?;
    Ok(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

/// Extracts the semantic constraints of the task.
///
/// In stripped mode (empty description or the zero-knowledge prompt) no call
/// is made and every semantic field stays unknown; they are filled from the
/// data by [`crate::perception::infer_semantics`].
pub fn analyze_description(spec: &TaskSpec, llm: &Gateway) -> Result<TaskSummary> {
    let mut summary = TaskSummary::unknown();
    if spec.is_stripped() {
        return Ok(summary);
    }

    let sample_header = match &spec.submission_sample {
        Some(p) => Some(read_header(p)?),
        None => None,
    };
    let mut user = format!(
        "Task description:\n{}\n\nReturn JSON of this shape:\n{SHAPE}\n",
        spec.description_text.trim()
    );
    if let Some(h) = &sample_header {
        user.push_str(&format!("\nSample submission header: {}\n", h.join(",")));
    }
    let resp = llm.complete(AgentRole::DescriptionAnalyzer, None, SYSTEM, &user)?;
    let malformed = |reason: &str| Error::AnalyzerMalformed {
        reason: reason.to_string(),
        raw: resp.text.clone(),
    };
    let value = extract_json(&resp.text).ok_or_else(|| malformed("no JSON object in response"))?;
    let reply: AnalyzerReply =
        serde_json::from_value(value).map_err(|e| malformed(&e.to_string()))?;

    summary.objective_kind = reply.objective_kind.unwrap_or(ObjectiveKind::Unknown);
    if let Some(m) = reply.metric.filter(|m| !m.trim().is_empty()) {
        match metric_info(&m) {
            Some(info) => {
                summary.optimization_metric = info.id.to_string();
                summary.metric_direction = Some(info.direction);
            }
            None if m.eq_ignore_ascii_case(TaskSummary::UNKNOWN_METRIC) => {}
            None => return Err(malformed(&format!("metric `{m}` is not in the registry"))),
        }
    }
    if summary.metric_direction.is_none() {
        summary.metric_direction = reply.metric_direction;
    }
    summary.target_column = reply.target_column.filter(|t| !t.trim().is_empty());
    // A declared metric or sample file outranks whatever the model read.
    if let Some(ms) = &spec.metric_spec {
        if let Some(info) = metric_info(&ms.name) {
            summary.optimization_metric = info.id.to_string();
            summary.metric_direction = Some(ms.direction.unwrap_or(info.direction));
        }
    }
    summary.submission_format = match sample_header {
        Some(h) => SubmissionFormat::from_header(&h),
        None => reply
            .submission_columns
            .and_then(|c| SubmissionFormat::from_header(&c)),
    };
    Ok(summary)
}
