use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::blueprint::TrackKind;
use super::exec::ExecutionResult;
use super::module::GeneratedModule;
use super::Stage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Planned,
    Coding,
    Verifying,
    Debugging,
    Validated,
    Failed,
}

impl TrackStatus {
    /// planned → coding → verifying → {validated | debugging | failed},
    /// debugging → {verifying | failed}. Coding may fail outright when the
    /// coder cannot produce a statically valid module.
    pub fn can_transition_to(self, next: TrackStatus) -> bool {
        use TrackStatus::*;
        matches!(
            (self, next),
            (Planned, Coding)
                | (Coding, Verifying)
                | (Coding, Failed)
                | (Verifying, Validated)
                | (Verifying, Debugging)
                | (Verifying, Failed)
                | (Debugging, Verifying)
                | (Debugging, Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, TrackStatus::Validated | TrackStatus::Failed)
    }
}

/// Per-track state. Owned and mutated by exactly one track worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRun {
    pub track: TrackKind,
    pub blueprint_hash: String,
    /// Every revision ever produced, per stage, oldest first.
    pub modules: BTreeMap<Stage, Vec<GeneratedModule>>,
    pub executions: Vec<ExecutionResult>,
    pub debug_budget: u32,
    pub debug_attempts_used: u32,
    status: TrackStatus,
    pub validation_score: Option<f64>,
    #[serde(default)]
    pub failure: Option<String>,
}

impl TrackRun {
    pub fn new(track: TrackKind, blueprint_hash: String, debug_budget: u32) -> Self {
        TrackRun {
            track,
            blueprint_hash,
            modules: BTreeMap::new(),
            executions: Vec::new(),
            debug_budget,
            debug_attempts_used: 0,
            status: TrackStatus::Planned,
            validation_score: None,
            failure: None,
        }
    }

    pub fn status(&self) -> TrackStatus {
        self.status
    }

    pub fn transition(&mut self, next: TrackStatus) -> Result<()> {
        if !self.status.can_transition_to(next) {
            return Err(Error::Invalid(format!(
                "track {}: illegal transition {:?} -> {:?}",
                self.track, self.status, next
            )));
        }
        if next == TrackStatus::Validated {
            let last_ok = self.executions.last().is_some_and(|e| e.passed);
            if self.validation_score.is_none() || !last_ok {
                return Err(Error::Invalid(format!(
                    "track {}: validated requires a score and a passing final execution",
                    self.track
                )));
            }
        }
        self.status = next;
        Ok(())
    }

    /// Records a failure reason and moves to `failed` when legal.
    pub fn fail(&mut self, reason: impl Into<String>) {
        self.failure = Some(reason.into());
        if self.status.can_transition_to(TrackStatus::Failed) {
            self.status = TrackStatus::Failed;
        }
    }

    pub fn push_module(&mut self, m: GeneratedModule) {
        self.modules.entry(m.stage).or_default().push(m);
    }

    pub fn latest(&self, stage: Stage) -> Option<&GeneratedModule> {
        self.modules.get(&stage).and_then(|v| v.last())
    }

    pub fn next_revision(&self, stage: Stage) -> u32 {
        self.modules.get(&stage).map_or(0, |v| v.len() as u32)
    }

    pub fn invariants_hold(&self) -> bool {
        let budget_ok = self.debug_attempts_used <= self.debug_budget;
        let validated_ok = self.status != TrackStatus::Validated
            || (self.validation_score.is_some()
                && self.executions.last().is_some_and(|e| e.passed));
        budget_ok && validated_ok
    }
}
