use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{AgentRole, LlmRequest, LlmResponse};
use crate::error::{IoContext, Result};

/// One JSON line per provider call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub agent_role: AgentRole,
    #[serde(default)]
    pub scope: Option<String>,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub provider_id: String,
    pub latency: f64,
}

/// Append-only JSON-lines writer; appends are serialized by one lock.
pub struct Transcript {
    inner: Mutex<(u64, File)>,
}

impl Transcript {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).ctx(|| format!("creating transcript {}", path.display()))?;
        Ok(Transcript {
            inner: Mutex::new((0, f)),
        })
    }

    pub fn append(&self, req: &LlmRequest, resp: &LlmResponse) -> Result<()> {
        let mut guard = self.inner.lock().expect("transcript lock");
        let rec = TranscriptRecord {
            seq: guard.0,
            agent_role: req.agent_role,
            scope: req.scope.clone(),
            system_prompt: req.system_prompt.clone(),
            user_prompt: req.user_prompt.clone(),
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            response: resp.text.clone(),
            prompt_tokens: resp.prompt_tokens,
            completion_tokens: resp.completion_tokens,
            provider_id: resp.provider_id.clone(),
            latency: resp.latency,
        };
        let mut line = serde_json::to_string(&rec)?;
        line.push('\n');
        guard.1.write_all(line.as_bytes()).ctx(|| "writing transcript".into())?;
        guard.1.flush().ctx(|| "flushing transcript".into())?;
        guard.0 += 1;
        Ok(())
    }
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>> {
    let f = File::open(path).ctx(|| format!("opening transcript {}", path.display()))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.ctx(|| "reading transcript".into())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
