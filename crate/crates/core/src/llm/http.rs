use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{estimate_tokens, LlmProvider, LlmRequest, LlmResponse};
use crate::error::{Error, Result};

/// Exponential backoff: `base * 2^(attempt-1)`, capped at `max_delay`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        let exp = attempt.saturating_sub(1).min(20);
        let ms = self.base_delay_ms.saturating_mul(1u64 << exp).min(self.max_delay_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    /// Full URL of the chat-completion endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub request_timeout_s: f64,
    pub retry: RetryPolicy,
}

/// Generic chat-completion client (`messages` in, `choices[0].message.content` out).
pub struct HttpProvider {
    id: String,
    config: HttpProviderConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(LlmResponse),
    Retry(String),
    Fatal(String),
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        let agent_cfg = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.request_timeout_s.max(0.1))))
            .http_status_as_error(false)
            .build();
        HttpProvider {
            id: format!("http:{}", config.model),
            agent: ureq::Agent::new_with_config(agent_cfg),
            config,
        }
    }

    fn attempt(&self, req: &LlmRequest, key: Option<&str>) -> Attempt {
        let body = json!({
            "model": self.config.model,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
        });
        let started = Instant::now();
        let mut builder = self.agent.post(&self.config.endpoint);
        if let Some(k) = key {
            builder = builder.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = match builder.send_json(&body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport: {e}")),
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Attempt::Fatal(format!("HTTP {status}: {}", truncate(&text, 300)));
        }
        let v: Value = match resp.body_mut().read_json() {
            Ok(v) => v,
            Err(e) => return Attempt::Retry(format!("bad body: {e}")),
        };
        let Some(text) = v["choices"][0]["message"]["content"].as_str() else {
            return Attempt::Fatal("response has no choices[0].message.content".into());
        };
        Attempt::Done(LlmResponse {
            prompt_tokens: v["usage"]["prompt_tokens"]
                .as_u64()
                .unwrap_or_else(|| estimate_tokens(&req.system_prompt) + estimate_tokens(&req.user_prompt)),
            completion_tokens: v["usage"]["completion_tokens"]
                .as_u64()
                .unwrap_or_else(|| estimate_tokens(text)),
            text: text.to_string(),
            provider_id: self.id.clone(),
            latency: started.elapsed().as_secs_f64(),
        })
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl LlmProvider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse> {
        let key = std::env::var(&self.config.api_key_env).ok();
        let max = self.config.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            match self.attempt(req, key.as_deref()) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fatal(e) => {
                    return Err(Error::ProviderUnavailable {
                        attempts: attempt,
                        last_error: e,
                    })
                }
                Attempt::Retry(e) => {
                    log::warn!("provider attempt {attempt}/{max} failed: {e}");
                    last = e;
                    if attempt < max {
                        std::thread::sleep(self.config.retry.delay_before(attempt));
                    }
                }
            }
        }
        Err(Error::ProviderUnavailable {
            attempts: max,
            last_error: last,
        })
    }
}
