//! Domain types shared by every phase of a run.
//!
//! Nothing in here performs I/O or talks to a model provider. Every type
//! serializes to a canonical JSON form (sorted keys, pretty printed, trailing
//! newline) so reports written by different processes can be compared byte
//! for byte.

mod blueprint;
mod contract;
mod exec;
mod fault;
mod meta;
mod metric;
mod module;
mod score;
mod task;
mod telemetry;
mod track;

pub use blueprint::{
    validate_blueprint, EvalPlan, ImplementationTrack, ModelPlan, ParamRange, PrepDirective,
    StrategicBlueprint, TrackKind, TrainPlan, ValidationScheme, Violation,
};
pub use contract::{
    check_contract, ArtifactKind, ArtifactSpec, BatchDirectives, CmpOp, ColumnConstraint,
    ColumnRule, ContractReport, Dim, DtypeRule, Entrypoint, InterfaceContract, ObservedArtifact,
    ObservedColumn, ArtifactStatus, Operand, RowRelation, ValueRange, Verdict, BINDABLE_PARAMS,
};
pub use exec::{ExecutionResult, ExitInfo, Frame};
pub(crate) use contract::attributed_stage;
pub use fault::{FaultClass, FaultClassification};
pub use meta::{
    CategoryCount, ColumnProfile, CorrelationPair, Dtype, FileManifestEntry, MetaFeatures,
    NumericSummary, TableProfile,
};
pub use metric::{metric_info, MetricInfo, METRIC_REGISTRY};
pub use module::GeneratedModule;
pub use score::{NormalizationRule, NormalizedScore};
pub use task::{
    FileEntry, FileRole, MetricDirection, MetricSpec, ObjectiveKind, SubmissionFormat, TaskSpec,
    TaskSummary,
};
pub use telemetry::{Phase, PriceTable, RunTelemetry};
pub use track::{TrackRun, TrackStatus};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Version stamped into blueprints, contracts and contract reports.
pub const SCHEMA_VERSION: &str = "1.0";

/// Pipeline stage a module, artifact or failure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Preprocessing,
    Modeling,
    Assembled,
    Ensemble,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Preprocessing => "preprocessing",
            Stage::Modeling => "modeling",
            Stage::Assembled => "assembled",
            Stage::Ensemble => "ensemble",
        }
    }

    /// Index used in persisted source file names (`stage_<n>_rev<r>`).
    pub fn ordinal(self) -> u8 {
        match self {
            Stage::Preprocessing => 1,
            Stage::Modeling => 2,
            Stage::Assembled => 3,
            Stage::Ensemble => 4,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "preprocessing" => Ok(Stage::Preprocessing),
            "modeling" => Ok(Stage::Modeling),
            "assembled" => Ok(Stage::Assembled),
            "ensemble" => Ok(Stage::Ensemble),
            other => Err(format!("unknown stage `{other}`")),
        }
    }
}

/// Canonical JSON: keys sorted, two-space indentation, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    // Round-tripping through `Value` sorts object keys (BTreeMap backed).
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Hex SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 of the canonical JSON form.
pub fn canonical_hash<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let s = to_canonical_json(value)?;
    Ok(hex::encode(Sha256::digest(s.as_bytes())))
}

/// True when `s` is a valid identifier in the execution language.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}


#[cfg(test)]
pub(crate) use blueprint::tests::{blueprint as blueprint_fixture, meta as meta_fixture};
