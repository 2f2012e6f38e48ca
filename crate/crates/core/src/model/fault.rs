use serde::{Deserialize, Serialize};

use super::Stage;

/// The two contract fault categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultClass {
    /// The producer (preprocessing) broke its post-condition.
    ContractFulfillmentFailure,
    /// The consumer (modeling) violated the pre-condition it may assume.
    ContractUsageViolation,
}

impl FaultClass {
    pub fn faulty_stage(self) -> Stage {
        match self {
            FaultClass::ContractFulfillmentFailure => Stage::Preprocessing,
            FaultClass::ContractUsageViolation => Stage::Modeling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultClassification {
    pub class: FaultClass,
    /// Environment or dependency failure; annotates, never replaces, `class`.
    pub infra_flag: bool,
    pub localized_stage: Stage,
    pub violated_constraints: Vec<String>,
    pub repair_hint: String,
    #[serde(default)]
    pub note: Option<String>,
}
