use serde::{Deserialize, Serialize};

use super::Stage;
use crate::source;

/// Generated source for one stage, plus what a static scan found in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedModule {
    pub stage: Stage,
    pub source_text: String,
    pub declared_imports: Vec<String>,
    pub entrypoint: String,
    pub revision: u32,
}

impl GeneratedModule {
    pub fn new(stage: Stage, source_text: String, entrypoint: &str, revision: u32) -> Self {
        let declared_imports = source::imported_modules(&source_text);
        GeneratedModule {
            stage,
            source_text,
            declared_imports,
            entrypoint: entrypoint.to_string(),
            revision,
        }
    }

    /// `Err` explains which static invariant failed.
    pub fn static_check(&self) -> Result<(), String> {
        if self.source_text.trim().is_empty() {
            return Err("source is empty".into());
        }
        if !source::defines_function(&self.source_text, &self.entrypoint) {
            let found = source::top_level_functions(&self.source_text);
            return Err(format!(
                "entrypoint `{}` is not defined at top level (found: {})",
                self.entrypoint,
                if found.is_empty() { "none".to_string() } else { found.join(", ") }
            ));
        }
        let main_guard = self
            .source_text
            .lines()
            .any(|l| l.starts_with("if __name__") && l.contains("__main__"));
        if main_guard && matches!(self.stage, Stage::Preprocessing | Stage::Modeling) {
            return Err("stage modules must not contain a top-level `__main__` block".into());
        }
        Ok(())
    }

    /// `def` line of the entrypoint, used where the body must not leak.
    pub fn signature(&self) -> Option<String> {
        source::function_signature(&self.source_text, &self.entrypoint)
    }

    pub fn file_name(&self) -> String {
        format!("stage_{}_rev{}.py", self.stage.ordinal(), self.revision)
    }
}
