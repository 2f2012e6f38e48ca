//! Failure classification. Deterministic: a failure is attributed from the
//! contract report, the traceback and the stage markers, never by asking a
//! model.

use std::collections::BTreeSet;

use crate::assemble::{localize_line, HANDOFF_MISSING};
use crate::model::{
    attributed_stage, ExecutionResult, FaultClass, FaultClassification, InterfaceContract, Stage,
    StrategicBlueprint,
};
use crate::verify::MISSING_ENTRYPOINT;

/// Supplies documentation snippets for a repair prompt.
pub trait DocRetriever: Send + Sync {
    fn lookup(&self, fault: &FaultClassification, res: &ExecutionResult) -> Vec<String>;
}

/// Retrieves nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoDocs;

impl DocRetriever for NoDocs {
    fn lookup(&self, _: &FaultClassification, _: &ExecutionResult) -> Vec<String> {
        Vec::new()
    }
}

const INFRA_MARKERS: &[&str] = &[
    "ModuleNotFoundError",
    "No module named",
    "cannot open shared object file",
    "DLL load failed",
];

/// Environment or dependency trouble rather than a logic error.
pub fn is_infra(res: &ExecutionResult) -> bool {
    res.exit_status.code == Some(127)
        || INFRA_MARKERS.iter().any(|m| res.stderr_tail.contains(m))
        || res
            .exception_message()
            .is_some_and(|m| m.starts_with("ImportError") && m.contains(".so"))
}

fn class_of(stage: Stage) -> FaultClass {
    match stage {
        Stage::Preprocessing => FaultClass::ContractFulfillmentFailure,
        _ => FaultClass::ContractUsageViolation,
    }
}

fn file_stage(file: &str, assembled: Option<&str>, line: u32) -> Option<Stage> {
    let base = file.rsplit('/').next().unwrap_or(file);
    if base.starts_with("stage_1_") {
        return Some(Stage::Preprocessing);
    }
    if base.starts_with("stage_2_") {
        return Some(Stage::Modeling);
    }
    if base.starts_with("stage_3_") {
        return assembled.and_then(|src| localize_line(src, line));
    }
    None
}

/// Stage a failed execution belongs to, with a note when the evidence was
/// indirect.
fn localize(
    res: &ExecutionResult,
    contract: &InterfaceContract,
    assembled: Option<&str>,
) -> (Stage, Option<String>) {
    if let Some(report) = &res.artifact_report {
        let stages: BTreeSet<Stage> = report
            .failures()
            .filter_map(|v| attributed_stage(contract, &v.subject))
            .collect();
        if let Some(&first) = stages.iter().next() {
            return (first, None);
        }
    }
    if res.stderr_tail.contains(HANDOFF_MISSING) {
        return (Stage::Preprocessing, None);
    }
    if let Some(frames) = &res.traceback {
        for f in frames.iter().rev() {
            if let Some(s) = file_stage(&f.file, assembled, f.line) {
                if matches!(s, Stage::Preprocessing | Stage::Modeling) {
                    return (s, None);
                }
            }
        }
    }
    if res.notes.iter().any(|n| n.starts_with(MISSING_ENTRYPOINT)) {
        if let Some(s) = res.stage.filter(|s| matches!(s, Stage::Preprocessing | Stage::Modeling)) {
            return (s, None);
        }
    }
    if let Some(s) = res
        .last_stage_started
        .filter(|s| matches!(s, Stage::Preprocessing | Stage::Modeling))
    {
        return (s, Some(format!("attributed to the last stage started ({s})")));
    }
    if let Some(s) = res.stage.filter(|s| matches!(s, Stage::Preprocessing | Stage::Modeling)) {
        return (s, Some(format!("attributed to the executing stage ({s})")));
    }
    (
        Stage::Preprocessing,
        Some("no evidence localizes the failure; defaulting to the producer".into()),
    )
}

fn missing_module(res: &ExecutionResult) -> Option<String> {
    let line = res
        .stderr_tail
        .lines()
        .rev()
        .find(|l| l.contains("No module named"))?;
    let name = line.split("No module named").nth(1)?.trim().trim_matches(|c| c == '\'' || c == '"');
    Some(name.to_string())
}

/// Classifies a failed execution into one of the two contract faults.
pub fn classify_failure(
    res: &ExecutionResult,
    contract: &InterfaceContract,
    b: &StrategicBlueprint,
    assembled: Option<&str>,
) -> FaultClassification {
    let infra_flag = is_infra(res);
    let (stage, note) = localize(res, contract, assembled);
    let class = class_of(stage);

    let mut violated = Vec::new();
    let mut hint = Vec::new();
    if let Some(report) = &res.artifact_report {
        for v in report.failures() {
            let owner = attributed_stage(contract, &v.subject);
            if owner.is_none() || owner == Some(stage) {
                violated.push(format!("{}.{}", v.subject, v.constraint));
                hint.push(format!("{} {}: {}", v.subject, v.constraint, v.detail));
                if v.constraint.ends_with(":nullable") && stage == Stage::Preprocessing {
                    let col = v.constraint.split(':').nth(1).unwrap_or_default();
                    for d in b.prep.iter().filter(|d| d.is_imputation() && d.columns.iter().any(|c| c == col)) {
                        hint.push(format!("planned directive for `{col}`: {}", d.render()));
                    }
                }
            }
        }
    }
    if res.timed_out {
        violated.push("execution.timeout".into());
        hint.push(format!("execution timed out after {:.1}s", res.wall_time));
    }
    if let Some(m) = res.exception_message() {
        let at = res
            .innermost_frame()
            .map(|f| format!(" at {}:{} in {}", f.file.rsplit('/').next().unwrap_or(&f.file), f.line, f.function))
            .unwrap_or_default();
        hint.push(format!("{m}{at}"));
    }
    for n in &res.notes {
        hint.push(n.clone());
    }
    if let Some(line) = res.stderr_tail.lines().find(|l| l.starts_with(HANDOFF_MISSING)) {
        violated.push(format!("{}.present", line.trim_start_matches(HANDOFF_MISSING).trim_start_matches(':').trim()));
        hint.push(line.to_string());
    }
    if infra_flag {
        match missing_module(res) {
            Some(m) => hint.push(format!("module `{m}` is not installed in the execution environment; use an installed package instead")),
            None => hint.push("a dependency failed to load in the execution environment".into()),
        }
    }
    if violated.is_empty() && !res.exit_ok() {
        violated.push(match res.exit_status.code {
            Some(c) => format!("execution.exit_code={c}"),
            None => "execution.killed".into(),
        });
    }
    if hint.is_empty() {
        hint.push(format!("stderr tail:\n{}", res.stderr_tail.trim()));
    }
    FaultClassification {
        class,
        infra_flag,
        localized_stage: stage,
        violated_constraints: violated,
        repair_hint: hint.join("\n"),
        note,
    }
}
