//! Stage coders. Each coder sees only what its stage may rely on: the
//! preprocessing coder gets the plan and the data profile, the modeling
//! coder gets the contract, the observed preprocessing report and the
//! preprocessing signature.

use std::collections::BTreeSet;

use crate::error::{Error, IoContext, Result};
use crate::layout::RunLayout;
use crate::llm::{extract_code_block, AgentRole, Gateway};
use crate::model::{
    to_canonical_json, ContractReport, GeneratedModule, InterfaceContract, MetaFeatures, Stage,
    StrategicBlueprint, TaskSummary, TrackKind, ValidationScheme,
};
use crate::planning::{profile_digest, MAX_REPROMPTS, VALIDATION_ARTIFACT};

const CODER_SYSTEM: &str = "You write one self-contained Python module. Answer with a single fenced \
```python block and nothing else. Define the requested entrypoint at top level. Do not add an \
`if __name__ == \"__main__\"` block.";

/// Context a repair request adds to a coder prompt.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RepairRequest {
    /// Current source of the stage being repaired.
    pub previous_source: String,
    pub diagnosis: String,
    /// Documentation snippets, possibly empty.
    pub docs: Vec<String>,
}

fn artifact_specs(contract: &InterfaceContract, stage: Stage) -> String {
    let mut s = String::new();
    for a in contract.produced_by(stage) {
        s.push_str(&format!(
            "- {} -> <artifacts_dir>/{}: {}\n",
            a.name,
            a.file_name(),
            serde_json::to_string(a).unwrap_or_default()
        ));
    }
    s
}

fn file_map(summary: &TaskSummary) -> String {
    summary
        .file_map
        .iter()
        .map(|e| format!("- {} ({:?})\n", e.path, e.role))
        .collect()
}

fn entrypoint_line(contract: &InterfaceContract, stage: Stage) -> String {
    let e = match stage {
        Stage::Preprocessing => &contract.preprocessing_entrypoint,
        _ => &contract.modeling_entrypoint,
    };
    format!("def {}({}):", e.name, e.params.join(", "))
}

const IO_RULES: &str = "Artifact files: tables are CSV with a header row, dense arrays are .npy, \
loader configs are JSON. When `sample_limit` is not None read at most that many rows of each table. \
Keep the row order of the training table so that row i of every training artifact is training row i. \
Create `artifacts_dir` if it does not exist.";

pub fn prep_prompt(b: &StrategicBlueprint, summary: &TaskSummary, f: &MetaFeatures) -> String {
    let mut s = format!(
        "Write the preprocessing stage.\n\nEntrypoint:\n{}\n\nTask:\ntarget: {}\nfiles under data_dir:\n{}\n",
        entrypoint_line(&b.contract, Stage::Preprocessing),
        summary.target_column.as_deref().unwrap_or("unknown"),
        file_map(summary)
    );
    s.push_str(&format!("Data profile:\n{}\n", profile_digest(f)));
    s.push_str("Apply these directives in order:\n");
    for d in &b.prep {
        s.push_str(&format!("- {}\n", d.render()));
    }
    s.push_str(&format!(
        "\nWrite exactly these artifacts:\n{}\n{IO_RULES}\n",
        artifact_specs(&b.contract, Stage::Preprocessing)
    ));
    s
}

fn scheme_text(scheme: &ValidationScheme) -> String {
    match scheme {
        ValidationScheme::Holdout { fraction } => format!("random holdout of {fraction} of the training rows"),
        ValidationScheme::StratifiedHoldout { fraction } => {
            format!("stratified holdout of {fraction} of the training rows")
        }
        ValidationScheme::Kfold { k } => format!("{k}-fold cross validation (report out-of-fold predictions)"),
        ValidationScheme::StratifiedKfold { k } => {
            format!("stratified {k}-fold cross validation (report out-of-fold predictions)")
        }
    }
}

pub fn model_prompt(
    b: &StrategicBlueprint,
    prep_signature: &str,
    prep_report: &ContractReport,
    submission_columns: &[String],
) -> String {
    let contract = to_canonical_json(&b.contract).unwrap_or_default();
    let report = to_canonical_json(&prep_report.artifacts).unwrap_or_default();
    let search = serde_json::to_string(&b.train.search_space).unwrap_or_default();
    let mut s = format!(
        "Write the modeling stage.\n\nEntrypoint:\n{}\n\n\
         The preprocessing stage has already run. Its entrypoint is `{prep_signature}` and it wrote its \
         artifacts into the same artifacts_dir. Rely only on the contract and on what was observed.\n\n\
         Contract:\n{contract}\n\nObserved preprocessing artifacts:\n{report}\n\n",
        entrypoint_line(&b.contract, Stage::Modeling)
    );
    s.push_str(&format!("Track: {}\n", b.model.track.kind));
    if let Some(alg) = &b.model.algorithm {
        s.push_str(&format!("Algorithm: {alg}\n"));
    }
    if let Some(r) = &b.model.track.reference {
        let what = if b.model.track.kind == TrackKind::Pretrained { "checkpoint" } else { "architecture" };
        s.push_str(&format!("Use the {what} `{r}`.\n"));
    }
    s.push_str(&format!(
        "Hyperparameter search ({}): {search}\n",
        b.train.strategy
    ));
    if !b.train.loss.is_empty() {
        s.push_str(&format!("Loss: {}\n", b.train.loss));
    }
    s.push_str(&format!(
        "\nEvaluate with a {} using seed {} and metric {}.\n\
         Write <artifacts_dir>/predictions.csv with columns [{}] and one row per test row, ids taken from the test file.\n\
         Write <artifacts_dir>/{VALIDATION_ARTIFACT}.csv with columns row, y_true, y_pred and, for \
         classifiers with probabilities, one p_<class> column per class; `row` is the 0-based index of \
         the held-out row in train_target.\n\
         Write every other artifact the contract assigns to the modeling stage:\n{}\n{IO_RULES}\n",
        scheme_text(&b.eval.scheme),
        b.eval.seed,
        b.eval.metric,
        submission_columns.join(", "),
        artifact_specs(&b.contract, Stage::Modeling)
    ));
    s
}

fn with_repair(prompt: String, repair: Option<&RepairRequest>) -> String {
    let Some(r) = repair else { return prompt };
    let mut s = prompt;
    s.push_str(&format!(
        "\nThe current version of this module failed.\n\nDiagnosis:\n{}\n\nCurrent source:\n```python\n{}\n```\n",
        r.diagnosis, r.previous_source
    ));
    if !r.docs.is_empty() {
        s.push_str("\nReference notes:\n");
        for d in &r.docs {
            s.push_str(&format!("- {d}\n"));
        }
    }
    s.push_str("Return the complete corrected module.\n");
    s
}

/// Requests a module, re-prompting on extraction or static-check failures.
fn request_module(
    llm: &Gateway,
    role: AgentRole,
    scope: &str,
    user: &str,
    stage: Stage,
    entrypoint: &str,
    revision: u32,
) -> Result<GeneratedModule> {
    let mut problem: Option<String> = None;
    for _ in 0..=MAX_REPROMPTS {
        let prompt = match &problem {
            None => user.to_string(),
            Some(p) => format!("{user}\n\nYour previous answer was rejected: {p}\nAnswer again."),
        };
        let text = llm.complete(role, Some(scope), CODER_SYSTEM, &prompt)?.text;
        let code = match extract_code_block(&text) {
            Ok(c) => c,
            Err(e) => {
                problem = Some(e.to_string());
                continue;
            }
        };
        let m = GeneratedModule::new(stage, code.source, entrypoint, revision);
        match m.static_check() {
            Ok(()) => return Ok(m),
            Err(p) => problem = Some(p),
        }
    }
    Err(Error::CodegenFailed {
        stage,
        reason: problem.unwrap_or_else(|| "no answer".into()),
    })
}

pub fn generate_preprocessing(
    b: &StrategicBlueprint,
    summary: &TaskSummary,
    f: &MetaFeatures,
    llm: &Gateway,
    revision: u32,
    repair: Option<&RepairRequest>,
) -> Result<GeneratedModule> {
    let user = with_repair(prep_prompt(b, summary, f), repair);
    let role = if repair.is_some() { AgentRole::Debugger } else { AgentRole::PrepCoder };
    request_module(
        llm,
        role,
        b.model.track.kind.as_str(),
        &user,
        Stage::Preprocessing,
        &b.contract.preprocessing_entrypoint.name,
        revision,
    )
}

/// Refuses to run unless `prep_report` satisfies every preprocessing
/// post-condition.
pub fn generate_modeling(
    b: &StrategicBlueprint,
    prep: &GeneratedModule,
    prep_report: &ContractReport,
    submission_columns: &[String],
    llm: &Gateway,
    revision: u32,
    repair: Option<&RepairRequest>,
) -> Result<GeneratedModule> {
    if !prep_report.passes_for(&b.contract, Stage::Preprocessing) {
        let failed: BTreeSet<String> = prep_report
            .failures()
            .map(|v| format!("{}.{}", v.subject, v.constraint))
            .collect();
        return Err(Error::Invalid(format!(
            "preprocessing report does not satisfy the contract: {}",
            failed.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let signature = prep
        .signature()
        .unwrap_or_else(|| entrypoint_line(&b.contract, Stage::Preprocessing));
    let user = with_repair(model_prompt(b, &signature, prep_report, submission_columns), repair);
    let role = if repair.is_some() { AgentRole::Debugger } else { AgentRole::ModelCoder };
    request_module(
        llm,
        role,
        b.model.track.kind.as_str(),
        &user,
        Stage::Modeling,
        &b.contract.modeling_entrypoint.name,
        revision,
    )
}

pub fn persist_module(layout: &RunLayout, track: &str, m: &GeneratedModule) -> Result<std::path::PathBuf> {
    let p = layout.module(track, m);
    if let Some(d) = p.parent() {
        std::fs::create_dir_all(d).ctx(|| format!("creating {}", d.display()))?;
    }
    std::fs::write(&p, &m.source_text).ctx(|| format!("writing {}", p.display()))?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FixtureEntry, ScriptedProvider};
    use crate::model::{ArtifactKind, ArtifactStatus, ObservedArtifact, Verdict};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    const PREP: &str = "```python\nimport csv\n\ndef preprocess_data(data_dir, artifacts_dir):\n    SECRET_BODY = 1\n```";
    const MODEL: &str = "```python\ndef train_and_predict(data_dir, artifacts_dir, seed):\n    pass\n```";

    fn blueprint() -> StrategicBlueprint {
        let mut b = crate::model::blueprint_fixture();
        b.contract = serde_json::from_str(crate::planning::tests::CONTRACT_JSON).unwrap();
        b
    }

    fn gateway(entries: Vec<FixtureEntry>) -> (Gateway, Arc<ScriptedProvider>) {
        let p = Arc::new(ScriptedProvider::new(entries));
        (Gateway::new(p.clone(), 0.2, 1024), p)
    }

    fn passing_report() -> ContractReport {
        ContractReport {
            schema_version: crate::model::SCHEMA_VERSION.into(),
            stage: Stage::Preprocessing,
            artifacts: BTreeMap::new(),
            verdicts: vec![],
        }
    }

    #[test]
    fn prep_accepts_and_renders_directives() {
        let b = blueprint();
        let (llm, _) = gateway(vec![FixtureEntry::inline(AgentRole::PrepCoder, 0, PREP).scoped("traditional")]);
        let summary = TaskSummary::unknown();
        let f = crate::model::meta_fixture(&["age"]);
        let m = generate_preprocessing(&b, &summary, &f, &llm, 0, None).unwrap();
        assert_eq!(m.stage, Stage::Preprocessing);
        let prompt = prep_prompt(&b, &summary, &f);
        for d in &b.prep {
            assert!(prompt.contains(&d.render()));
        }
        assert!(prompt.contains("train_features.csv"));
    }

    #[test]
    fn wrong_entrypoint_fails_after_reprompts() {
        let b = blueprint();
        let bad = "```python\ndef prep(data_dir):\n    pass\n```";
        let (llm, _) = gateway(
            (0..3)
                .map(|i| FixtureEntry::inline(AgentRole::PrepCoder, i, bad).scoped("traditional"))
                .collect(),
        );
        let err = generate_preprocessing(&b, &TaskSummary::unknown(), &crate::model::meta_fixture(&[]), &llm, 0, None)
            .unwrap_err();
        match err {
            Error::CodegenFailed { stage, .. } => assert_eq!(stage, Stage::Preprocessing),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn model_prompt_hides_prep_body_and_keeps_search_space() {
        let b = blueprint();
        let prep = GeneratedModule::new(
            Stage::Preprocessing,
            extract_code_block(PREP).unwrap().source,
            "preprocess_data",
            0,
        );
        let cols = vec!["id".to_string(), "label".to_string()];
        let prompt = model_prompt(&b, &prep.signature().unwrap(), &passing_report(), &cols);
        assert!(!prompt.contains("SECRET_BODY"));
        assert!(prompt.contains("def preprocess_data(data_dir, artifacts_dir):"));
        assert!(prompt.contains(&serde_json::to_string(&b.train.search_space).unwrap()));
        let (llm, _) = gateway(vec![FixtureEntry::inline(AgentRole::ModelCoder, 0, MODEL).scoped("traditional")]);
        let m = generate_modeling(&b, &prep, &passing_report(), &cols, &llm, 0, None).unwrap();
        assert_eq!(m.entrypoint, "train_and_predict");
    }

    #[test]
    fn handoff_gate_blocks_modeling() {
        let b = blueprint();
        let prep = GeneratedModule::new(Stage::Preprocessing, "def preprocess_data(a, b):\n    pass\n".into(), "preprocess_data", 0);
        let mut report = passing_report();
        report.artifacts.insert(
            "train_features".into(),
            ObservedArtifact::absent(ArtifactKind::Table, ArtifactStatus::Missing, None),
        );
        report.verdicts.push(Verdict {
            subject: "train_features".into(),
            constraint: "present".into(),
            pass: false,
            detail: "missing".into(),
        });
        // No fixture: a call would fail with FIXTURE_MISS instead of INVALID_INPUT.
        let (llm, _) = gateway(vec![]);
        let err = generate_modeling(&b, &prep, &report, &[], &llm, 0, None).unwrap_err();
        assert_eq!(err.code(), "INVALID_INPUT");
    }

    #[test]
    fn pretrained_reference_in_prompt() {
        let mut b = blueprint();
        b.model.track = crate::model::ImplementationTrack {
            kind: TrackKind::Pretrained,
            reference: Some("hub:tabpfn".into()),
        };
        let prompt = model_prompt(&b, "def preprocess_data(a):", &passing_report(), &[]);
        assert!(prompt.contains("hub:tabpfn"));
    }
}
