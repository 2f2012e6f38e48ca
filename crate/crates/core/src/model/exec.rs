use serde::{Deserialize, Serialize};

use super::contract::ContractReport;
use super::Stage;

/// One traceback frame. `message` is set on the innermost frame only and
/// carries the exception line (`TypeError: ...`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub file: String,
    pub line: u32,
    pub function: String,
    #[serde(default)]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitInfo {
    #[serde(default)]
    pub code: Option<i32>,
    #[serde(default)]
    pub signal: Option<i32>,
}

impl ExitInfo {
    pub fn ok(&self) -> bool {
        self.code == Some(0)
    }

    pub fn failed() -> Self {
        ExitInfo {
            code: None,
            signal: None,
        }
    }
}

/// Outcome of running generated code once in the sandbox.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    #[serde(default)]
    pub stage: Option<Stage>,
    pub exit_status: ExitInfo,
    pub wall_time: f64,
    pub stdout_tail: String,
    pub stderr_tail: String,
    #[serde(default)]
    pub traceback: Option<Vec<Frame>>,
    #[serde(default)]
    pub artifact_report: Option<ContractReport>,
    pub timed_out: bool,
    /// Last stage whose start marker the runtime harness printed.
    #[serde(default)]
    pub last_stage_started: Option<Stage>,
    /// Harness-level findings that are not in the report (missing entrypoint,
    /// submission problems, budget exhaustion).
    #[serde(default)]
    pub notes: Vec<String>,
    /// Set by the verifier: the run passed every check that applies to it.
    #[serde(default)]
    pub passed: bool,
}

impl ExecutionResult {
    pub fn exit_ok(&self) -> bool {
        self.exit_status.ok() && !self.timed_out
    }

    pub fn innermost_frame(&self) -> Option<&Frame> {
        self.traceback.as_ref().and_then(|t| t.last())
    }

    pub fn exception_message(&self) -> Option<&str> {
        self.innermost_frame().and_then(|f| f.message.as_deref())
    }

    /// Invariant: a timeout never reports a successful exit.
    pub fn is_consistent(&self) -> bool {
        !(self.timed_out && self.exit_status.ok())
    }
}
