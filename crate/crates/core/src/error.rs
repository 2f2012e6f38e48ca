use std::path::PathBuf;

use thiserror::Error;

use crate::llm::AgentRole;
use crate::model::Stage;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("provider unavailable after {attempts} attempt(s): {last_error}")]
    ProviderUnavailable { attempts: u32, last_error: String },

    #[error("no scripted fixture for role `{role}` call #{call}")]
    FixtureMiss { role: AgentRole, call: usize },

    #[error("completion was empty")]
    EmptyCompletion,

    #[error("description analyzer returned malformed output: {reason}")]
    AnalyzerMalformed { reason: String, raw: String },

    #[error("no readable files under {0}")]
    EmptyDataset(PathBuf),

    #[error("no target column could be inferred: {0}")]
    NoTarget(String),

    #[error("contract synthesis failed: {0}")]
    ContractSynthesisFailed(String),

    #[error("planning failed: {}", .violations.join("; "))]
    PlanningFailed { violations: Vec<String> },

    #[error("code generation failed for {stage}: {reason}")]
    CodegenFailed { stage: Stage, reason: String },

    #[error("assembly conflict on symbol(s): {}", .symbols.join(", "))]
    AssemblyConflict { symbols: Vec<String> },

    #[error("interpreter `{0}` not found")]
    InterpreterMissing(String),

    #[error("scoring failed: {0}")]
    ScoringFailed(String),

    #[error("no validated pipeline")]
    NoValidPipeline,

    #[error("raw score {raw} outside the [0, 1] domain of a higher-is-better metric")]
    NormalizationDomain { raw: f64 },

    #[error("cannot average an empty score list")]
    ApsEmpty,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code, used in failure records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ProviderUnavailable { .. } => "PROVIDER_UNAVAILABLE",
            Error::FixtureMiss { .. } => "FIXTURE_MISS",
            Error::EmptyCompletion => "EMPTY_COMPLETION",
            Error::AnalyzerMalformed { .. } => "ANALYZER_MALFORMED",
            Error::EmptyDataset(_) => "EMPTY_DATASET",
            Error::NoTarget(_) => "NO_TARGET",
            Error::ContractSynthesisFailed(_) => "CONTRACT_SYNTHESIS_FAILED",
            Error::PlanningFailed { .. } => "PLANNING_FAILED",
            Error::CodegenFailed { .. } => "CODEGEN_FAILED",
            Error::AssemblyConflict { .. } => "ASSEMBLY_CONFLICT",
            Error::InterpreterMissing(_) => "INTERPRETER_MISSING",
            Error::ScoringFailed(_) => "SCORING_FAILED",
            Error::NoValidPipeline => "NO_VALID_PIPELINE",
            Error::NormalizationDomain { .. } => "NORMALIZATION_DOMAIN",
            Error::ApsEmpty => "APS_EMPTY",
            Error::Invalid(_) => "INVALID_INPUT",
            Error::Usage(_) => "USAGE",
            Error::Io { .. } => "IO",
            Error::Json(_) => "JSON",
            Error::Csv(_) => "CSV",
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

/// Attach a path-bearing context to `std::io` results.
pub(crate) trait IoContext<T> {
    fn ctx(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn ctx(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| Error::io(what(), e))
    }
}
