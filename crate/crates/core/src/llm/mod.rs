//! Provider abstraction for every agent call.
//!
//! Agents never talk to a provider directly; they go through [`Gateway`],
//! which pins the sampling temperature for the run, appends each exchange to
//! the transcript and keeps token telemetry in step with it.

mod extract;
mod http;
mod scripted;
mod transcript;

pub use extract::{extract_code_block, extract_json, ExtractedCode};
pub use http::{HttpProvider, HttpProviderConfig, RetryPolicy};
pub use scripted::{FixtureEntry, FixtureManifest, ScriptedProvider};
pub use transcript::{read_transcript, Transcript, TranscriptRecord};

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{PriceTable, RunTelemetry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    DescriptionAnalyzer,
    Guideline,
    PrepCoder,
    ModelCoder,
    Assembler,
    ErrorAnalyzer,
    Debugger,
    Comparison,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::DescriptionAnalyzer => "description_analyzer",
            AgentRole::Guideline => "guideline",
            AgentRole::PrepCoder => "prep_coder",
            AgentRole::ModelCoder => "model_coder",
            AgentRole::Assembler => "assembler",
            AgentRole::ErrorAnalyzer => "error_analyzer",
            AgentRole::Debugger => "debugger",
            AgentRole::Comparison => "comparison",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub agent_role: AgentRole,
    /// Track name for per-track calls; keeps scripted call ordinals
    /// independent of how concurrent tracks interleave.
    #[serde(default)]
    pub scope: Option<String>,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub provider_id: String,
    pub latency: f64,
}

pub trait LlmProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse>;
}

/// Rough token estimate (4 chars per token) for providers that report none.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// The handle agents use. Cheap to clone; shareable across track workers.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn LlmProvider>,
    temperature: f64,
    max_tokens: u32,
    transcript: Option<Arc<Transcript>>,
    telemetry: Arc<Mutex<RunTelemetry>>,
    prices: Arc<PriceTable>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn LlmProvider>, temperature: f64, max_tokens: u32) -> Self {
        Gateway {
            provider,
            temperature,
            max_tokens,
            transcript: None,
            telemetry: Arc::new(Mutex::new(RunTelemetry::default())),
            prices: Arc::new(PriceTable::new()),
        }
    }

    pub fn with_transcript(mut self, t: Transcript) -> Self {
        self.transcript = Some(Arc::new(t));
        self
    }

    pub fn with_prices(mut self, prices: PriceTable) -> Self {
        self.prices = Arc::new(prices);
        self
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn telemetry(&self) -> Arc<Mutex<RunTelemetry>> {
        Arc::clone(&self.telemetry)
    }

    pub fn telemetry_snapshot(&self) -> RunTelemetry {
        self.telemetry.lock().expect("telemetry lock").clone()
    }

    pub fn complete(
        &self,
        role: AgentRole,
        scope: Option<&str>,
        system_prompt: &str,
        user_prompt: &str,
    ) -> Result<LlmResponse> {
        let req = LlmRequest {
            agent_role: role,
            scope: scope.map(str::to_string),
            system_prompt: system_prompt.to_string(),
            user_prompt: user_prompt.to_string(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let started = Instant::now();
        let mut resp = self.provider.complete(&req)?;
        if resp.latency <= 0.0 {
            resp.latency = started.elapsed().as_secs_f64();
        }
        {
            let mut t = self.telemetry.lock().expect("telemetry lock");
            t.record_call(
                role.as_str(),
                &resp.provider_id,
                resp.prompt_tokens,
                resp.completion_tokens,
                &self.prices,
            );
        }
        if let Some(tr) = &self.transcript {
            tr.append(&req, &resp)?;
        }
        log::debug!(
            "{role} call ({}): {} prompt / {} completion tokens",
            scope.unwrap_or("-"),
            resp.prompt_tokens,
            resp.completion_tokens
        );
        Ok(resp)
    }
}
