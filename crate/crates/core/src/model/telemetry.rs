use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Perception,
    Planning,
    Codegen,
    Verification,
    Evaluation,
}

/// provider id → (prompt, completion) price per 1K tokens.
pub type PriceTable = BTreeMap<String, (f64, f64)>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTelemetry {
    pub phase_seconds: BTreeMap<Phase, f64>,
    pub llm_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub estimated_cost: f64,
    pub calls_by_role: BTreeMap<String, u64>,
}

impl RunTelemetry {
    pub fn record_call(
        &mut self,
        role: &str,
        provider_id: &str,
        prompt_tokens: u64,
        completion_tokens: u64,
        prices: &PriceTable,
    ) {
        self.llm_calls += 1;
        self.prompt_tokens += prompt_tokens;
        self.completion_tokens += completion_tokens;
        *self.calls_by_role.entry(role.to_string()).or_default() += 1;
        if let Some((p, c)) = prices.get(provider_id) {
            self.estimated_cost +=
                prompt_tokens as f64 / 1000.0 * p + completion_tokens as f64 / 1000.0 * c;
        }
    }

    pub fn add_phase_time(&mut self, phase: Phase, seconds: f64) {
        *self.phase_seconds.entry(phase).or_default() += seconds;
    }

    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}
