//! Layered run configuration: defaults < config file < environment < CLI.
//!
//! Environment variables are `PIPEWRIGHT_<KEY>` for top-level keys and
//! `PIPEWRIGHT_<SECTION>__<KEY>` for nested ones. Values parse as JSON when
//! they can (`5`, `true`, `["traditional"]`), otherwise as plain strings;
//! list-valued keys also accept comma-separated text.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, IoContext, Result};
use crate::evaluation::Aggregate;
use crate::llm::{HttpProviderConfig, RetryPolicy};
use crate::model::{PriceTable, TrackKind};
use crate::par::Exec;
use crate::sandbox::SandboxConfig;

pub const ENV_PREFIX: &str = "PIPEWRIGHT_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub request_timeout_s: f64,
    pub max_attempts: u32,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: "PIPEWRIGHT_API_KEY".into(),
            request_timeout_s: 120.0,
            max_attempts: 4,
        }
    }
}

impl HttpSettings {
    pub fn provider_config(&self) -> HttpProviderConfig {
        HttpProviderConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            request_timeout_s: self.request_timeout_s,
            retry: RetryPolicy {
                max_attempts: self.max_attempts,
                ..RetryPolicy::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub debug_budget: u32,
    pub tracks: Vec<TrackKind>,
    pub aggregate: Aggregate,
    pub strip_description: bool,
    /// Seconds for the whole run.
    pub time_budget: f64,
    pub provider: ProviderKind,
    pub fixtures: Option<PathBuf>,
    pub interpreter: String,
    pub seed: u64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sample_limit: usize,
    pub stage_timeout: f64,
    pub catalog: Option<PathBuf>,
    pub max_candidates: usize,
    pub head_timeout: f64,
    /// External runner replacing the built-in launcher.
    pub shim: Option<PathBuf>,
    pub exec: Exec,
    pub profile_rows: usize,
    pub class_threshold_min: u64,
    pub class_threshold_ratio: f64,
    pub prices: PriceTable,
    pub http: HttpSettings,
    pub sandbox: SandboxConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            debug_budget: 10,
            tracks: TrackKind::ALL.to_vec(),
            aggregate: Aggregate::Best,
            strip_description: false,
            time_budget: 18000.0,
            provider: ProviderKind::Http,
            fixtures: None,
            interpreter: "python3".into(),
            seed: 0,
            temperature: 0.2,
            max_tokens: 8192,
            sample_limit: 2000,
            stage_timeout: 600.0,
            catalog: None,
            max_candidates: 5,
            head_timeout: 5.0,
            shim: None,
            exec: Exec::Parallel,
            profile_rows: 50_000,
            class_threshold_min: 20,
            class_threshold_ratio: 0.05,
            prices: PriceTable::new(),
            http: HttpSettings::default(),
            sandbox: SandboxConfig::default(),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Parses an override value against the type of the default it replaces.
fn parse_value(raw: &str, like: Option<&Value>) -> Value {
    let trimmed = raw.trim();
    if let Ok(v) = serde_json::from_str::<Value>(trimmed) {
        if !matches!((like, &v), (Some(Value::String(_)), v) if !v.is_string()) {
            return v;
        }
    }
    match like {
        Some(Value::Array(_)) => Value::Array(
            trimmed
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| Value::String(s.to_string()))
                .collect(),
        ),
        _ => Value::String(trimmed.to_string()),
    }
}

fn env_overrides(defaults: &Value, vars: &[(String, String)]) -> Value {
    let mut out = Map::new();
    let Value::Object(top) = defaults else { return Value::Object(out) };
    for (name, raw) in vars {
        let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
        let key = key.to_ascii_lowercase();
        match key.split_once("__") {
            Some((section, field)) => {
                let Some(Value::Object(sec)) = top.get(section) else { continue };
                if !sec.contains_key(field) {
                    continue;
                }
                let v = parse_value(raw, sec.get(field));
                let entry = out.entry(section.to_string()).or_insert_with(|| Value::Object(Map::new()));
                if let Value::Object(m) = entry {
                    m.insert(field.to_string(), v);
                }
            }
            None => {
                if top.contains_key(&key) && !top[&key].is_object() {
                    out.insert(key.clone(), parse_value(raw, top.get(&key)));
                }
            }
        }
    }
    Value::Object(out)
}

/// One `key=value` override, `section.key` for nested keys.
pub fn parse_override(defaults: &Value, spec: &str) -> Result<(Vec<String>, Value)> {
    let (k, v) = spec
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override `{spec}` is not key=value")))?;
    let path: Vec<String> = k.trim().split('.').map(str::to_string).collect();
    let mut cur = defaults;
    for p in &path {
        cur = cur
            .get(p)
            .ok_or_else(|| Error::Usage(format!("unknown configuration key `{k}`")))?;
    }
    Ok((path, parse_value(v, Some(cur))))
}

fn set_path(target: &mut Value, path: &[String], v: Value) {
    let mut cur = target;
    for p in &path[..path.len() - 1] {
        if !cur.get(p).is_some_and(Value::is_object) {
            cur[p.as_str()] = Value::Object(Map::new());
        }
        cur = cur.get_mut(p).expect("just inserted");
    }
    cur[path[path.len() - 1].as_str()] = v;
}

/// Resolves the effective configuration.
pub fn resolve(
    file: Option<&Path>,
    env: &[(String, String)],
    cli: &[(Vec<String>, Value)],
) -> Result<RunConfig> {
    let defaults = serde_json::to_value(RunConfig::default())?;
    let mut v = defaults.clone();
    if let Some(p) = file {
        let text = std::fs::read_to_string(p).ctx(|| format!("reading config {}", p.display()))?;
        let t: toml::Value = toml::from_str(&text).map_err(|e| Error::Usage(format!("config {}: {e}", p.display())))?;
        merge(&mut v, serde_json::to_value(t)?);
    }
    merge(&mut v, env_overrides(&defaults, env));
    for (path, val) in cli {
        set_path(&mut v, path, val.clone());
    }
    let cfg: RunConfig = serde_json::from_value(v).map_err(|e| Error::Usage(format!("configuration: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Environment variables relevant to configuration.
pub fn process_env() -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    v.sort();
    v
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.tracks.is_empty() {
            problems.push("at least one track is required".to_string());
        }
        if !(self.time_budget > 0.0) {
            problems.push(format!("time_budget must be > 0, got {}", self.time_budget));
        }
        if !(self.stage_timeout > 0.0) {
            problems.push(format!("stage_timeout must be > 0, got {}", self.stage_timeout));
        }
        if self.sample_limit == 0 {
            problems.push("sample_limit must be > 0".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            problems.push(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.provider == ProviderKind::Scripted && self.fixtures.is_none() {
            problems.push("the scripted provider needs a fixture directory".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Usage(problems.join("; ")))
        }
    }

    /// Duplicate tracks removed, order fixed.
    pub fn track_set(&self) -> Vec<TrackKind> {
        let mut t = self.tracks.clone();
        t.sort();
        t.dedup();
        t
    }

    pub fn to_toml(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        toml::to_string(&strip_nulls(v)).unwrap_or_default()
    }
}

fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.into_iter().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k, strip_nulls(v))).collect()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(spec: &str) -> (Vec<String>, Value) {
        parse_override(&serde_json::to_value(RunConfig::default()).unwrap(), spec).unwrap()
    }

    #[test]
    fn precedence() {
        let d = tempfile::tempdir().unwrap();
        let f = d.path().join("c.toml");
        std::fs::write(&f, "debug_budget = 3\nseed = 9\n[sandbox]\nmax_concurrent = 2\n").unwrap();
        let env = vec![
            ("PIPEWRIGHT_DEBUG_BUDGET".to_string(), "5".to_string()),
            ("PIPEWRIGHT_TRACKS".to_string(), "traditional,pretrained".to_string()),
            ("PIPEWRIGHT_SANDBOX__DROP_PRIVILEGES".to_string(), "false".to_string()),
        ];
        let c = resolve(Some(&f), &env, &[cli("debug_budget=7")]).unwrap();
        assert_eq!(c.debug_budget, 7);
        assert_eq!(c.seed, 9);
        assert_eq!(c.tracks, vec![TrackKind::Traditional, TrackKind::Pretrained]);
        assert_eq!(c.sandbox.max_concurrent, 2);
        assert!(!c.sandbox.drop_privileges);
        let c = resolve(Some(&f), &env, &[]).unwrap();
        assert_eq!(c.debug_budget, 5);
        let c = resolve(None, &[], &[]).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = RunConfig::default().to_toml();
        assert!(text.contains("debug_budget = 10"));
        assert!(text.contains("temperature = 0.2"));
        let d = tempfile::tempdir().unwrap();
        let f = d.path().join("c.toml");
        std::fs::write(&f, &text).unwrap();
        assert_eq!(resolve(Some(&f), &[], &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn bad_values_are_usage_errors() {
        assert_eq!(resolve(None, &[], &[cli("tracks=[]")]).unwrap_err().code(), "USAGE");
        assert_eq!(resolve(None, &[], &[cli("provider=\"scripted\"")]).unwrap_err().code(), "USAGE");
        let defaults = serde_json::to_value(RunConfig::default()).unwrap();
        assert!(parse_override(&defaults, "nope=1").is_err());
        assert_eq!(cli("interpreter=python3.12").1, Value::String("python3.12".into()));
    }
}
