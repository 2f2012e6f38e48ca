use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, AgentRole, LlmProvider, LlmRequest, LlmResponse};
use crate::error::{Error, IoContext, Result};

/// One canned response. Fields left `None` match anything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub role: AgentRole,
    #[serde(default)]
    pub scope: Option<String>,
    /// Per-(scope, role) call ordinal, starting at 0.
    #[serde(default)]
    pub call: Option<usize>,
    /// Substring that must occur in the user prompt (e.g. a traceback line).
    #[serde(default, rename = "match")]
    pub matches: Option<String>,
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
}

impl FixtureEntry {
    pub fn inline(role: AgentRole, call: usize, text: impl Into<String>) -> Self {
        FixtureEntry {
            role,
            scope: None,
            call: Some(call),
            matches: None,
            file: None,
            text: Some(text.into()),
        }
    }

    pub fn scoped(mut self, scope: &str) -> Self {
        self.scope = Some(scope.to_string());
        self
    }

    fn specificity(&self) -> u8 {
        self.scope.is_some() as u8 + self.call.is_some() as u8 + self.matches.is_some() as u8
    }

    fn accepts(&self, req: &LlmRequest, ordinal: usize) -> bool {
        self.role == req.agent_role
            && self
                .scope
                .as_ref()
                .map_or(true, |s| req.scope.as_deref() == Some(s.as_str()))
            && self.call.map_or(true, |c| c == ordinal)
            && self
                .matches
                .as_ref()
                .map_or(true, |m| req.user_prompt.contains(m.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub fixtures: Vec<FixtureEntry>,
}

/// Deterministic provider answering from a fixture set.
///
/// Fixtures come from `fixtures.json` in the fixture directory and from files
/// named `<role>_<n>.<ext>` (optionally inside a `<scope>/` subdirectory).
pub struct ScriptedProvider {
    entries: Vec<FixtureEntry>,
    counters: Mutex<HashMap<(String, AgentRole), usize>>,
}

impl ScriptedProvider {
    pub const ID: &'static str = "scripted";

    pub fn new(entries: Vec<FixtureEntry>) -> Self {
        ScriptedProvider {
            entries,
            counters: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let manifest = dir.join("fixtures.json");
        if manifest.exists() {
            let text = std::fs::read_to_string(&manifest)
                .ctx(|| format!("reading {}", manifest.display()))?;
            let m: FixtureManifest = serde_json::from_str(&text)?;
            for mut e in m.fixtures {
                if e.text.is_none() {
                    let file = e.file.clone().ok_or_else(|| {
                        Error::Invalid(format!("fixture for {} has neither file nor text", e.role))
                    })?;
                    let p = dir.join(&file);
                    e.text = Some(
                        std::fs::read_to_string(&p).ctx(|| format!("reading fixture {}", p.display()))?,
                    );
                }
                entries.push(e);
            }
        }
        collect_convention_files(dir, None, &mut entries)?;
        Ok(Self::new(entries))
    }

    pub fn entries(&self) -> &[FixtureEntry] {
        &self.entries
    }
}

fn role_from_str(s: &str) -> Option<AgentRole> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
}

fn collect_convention_files(dir: &Path, scope: Option<&str>, out: &mut Vec<FixtureEntry>) -> Result<()> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .ctx(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    paths.sort();
    for p in paths {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if p.is_dir() {
            if scope.is_none() {
                collect_convention_files(&p, Some(&name), out)?;
            }
            continue;
        }
        let stem = name.split('.').next().unwrap_or_default();
        let Some((role, n)) = stem.rsplit_once('_') else { continue };
        let (Some(role), Ok(n)) = (role_from_str(role), n.parse::<usize>()) else { continue };
        let text = std::fs::read_to_string(&p).ctx(|| format!("reading fixture {}", p.display()))?;
        out.push(FixtureEntry {
            role,
            scope: scope.map(str::to_string),
            call: Some(n),
            matches: None,
            file: Some(name.clone()),
            text: Some(text),
        });
    }
    Ok(())
}

impl LlmProvider for ScriptedProvider {
    fn id(&self) -> &str {
        Self::ID
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse> {
        let ordinal = {
            let mut c = self.counters.lock().expect("fixture counters");
            let slot = c
                .entry((req.scope.clone().unwrap_or_default(), req.agent_role))
                .or_insert(0);
            let n = *slot;
            *slot += 1;
            n
        };
        let mut best: Option<&FixtureEntry> = None;
        for e in self.entries.iter().filter(|e| e.accepts(req, ordinal)) {
            if best.map_or(true, |b| e.specificity() > b.specificity()) {
                best = Some(e);
            }
        }
        let entry = best.ok_or(Error::FixtureMiss {
            role: req.agent_role,
            call: ordinal,
        })?;
        let text = entry.text.clone().unwrap_or_default();
        Ok(LlmResponse {
            prompt_tokens: estimate_tokens(&req.system_prompt) + estimate_tokens(&req.user_prompt),
            completion_tokens: estimate_tokens(&text),
            text,
            provider_id: Self::ID.into(),
            latency: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(role: AgentRole, scope: Option<&str>, prompt: &str) -> LlmRequest {
        LlmRequest {
            agent_role: role,
            scope: scope.map(str::to_string),
            system_prompt: String::new(),
            user_prompt: prompt.into(),
            temperature: 0.2,
            max_tokens: 100,
        }
    }

    #[test]
    fn manifest_lookup_then_miss() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("blueprint.json"), "{\"plan\": 1}").unwrap();
        std::fs::write(
            dir.path().join("fixtures.json"),
            r#"{"fixtures": [{"role": "guideline", "call": 0, "file": "blueprint.json"}]}"#,
        )
        .unwrap();
        let p = ScriptedProvider::from_dir(dir.path()).unwrap();
        let r = p.complete(&req(AgentRole::Guideline, None, "plan")).unwrap();
        assert_eq!(r.text, "{\"plan\": 1}");
        match p.complete(&req(AgentRole::Guideline, None, "plan")) {
            Err(Error::FixtureMiss { role, call }) => {
                assert_eq!(role, AgentRole::Guideline);
                assert_eq!(call, 1);
            }
            other => panic!("expected miss, got {other:?}"),
        }
    }

    #[test]
    fn convention_files_and_scopes() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("traditional")).unwrap();
        std::fs::write(dir.path().join("traditional/prep_coder_0.py"), "A").unwrap();
        std::fs::write(dir.path().join("prep_coder_0.py"), "B").unwrap();
        let p = ScriptedProvider::from_dir(dir.path()).unwrap();
        assert_eq!(p.complete(&req(AgentRole::PrepCoder, Some("traditional"), "")).unwrap().text, "A");
        // ordinals are counted per scope
        assert_eq!(p.complete(&req(AgentRole::PrepCoder, Some("pretrained"), "")).unwrap().text, "B");
    }

    #[test]
    fn traceback_match_is_more_specific() {
        let p = ScriptedProvider::new(vec![
            FixtureEntry {
                role: AgentRole::Debugger,
                scope: None,
                call: None,
                matches: None,
                file: None,
                text: Some("generic".into()),
            },
            FixtureEntry {
                role: AgentRole::Debugger,
                scope: None,
                call: None,
                matches: Some("ZeroDivisionError".into()),
                file: None,
                text: Some("targeted".into()),
            },
        ]);
        assert_eq!(p.complete(&req(AgentRole::Debugger, None, "KeyError")).unwrap().text, "generic");
        assert_eq!(
            p.complete(&req(AgentRole::Debugger, None, "ZeroDivisionError: x")).unwrap().text,
            "targeted"
        );
    }
}
