//! Interface contract and per-track blueprint synthesis.

use std::collections::{BTreeMap, BTreeSet};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{Error, IoContext, Result};
use crate::layout::RunLayout;
use crate::llm::{extract_json, AgentRole, Gateway};
use crate::model::{
    to_canonical_json, validate_blueprint, ArtifactKind, ArtifactSpec, ColumnConstraint, DtypeRule,
    EvalPlan, ImplementationTrack, InterfaceContract, MetaFeatures, ModelPlan, PrepDirective,
    RowRelation, Stage, StrategicBlueprint, TaskSummary, TrackKind, TrainPlan, ValidationScheme,
    Violation, SCHEMA_VERSION,
};
use crate::retrieval::{prefer_validated, CandidateKind, ModelCandidate};

pub const PREP_ENTRYPOINT: &str = "preprocess_data";
pub const MODEL_ENTRYPOINT: &str = "train_and_predict";
/// Held-out predictions the modeling stage writes for scoring.
pub const VALIDATION_ARTIFACT: &str = "validation_predictions";
pub const REQUIRED_RELATION: &str = "predictions.rows == test_features.rows";
/// Corrective re-prompts after the first answer.
pub const MAX_REPROMPTS: usize = 2;

const GUIDELINE_SYSTEM: &str = "You are the planning agent of an automated machine learning system. \
You never write code. You answer with a single JSON object that follows the requested shape exactly.";

/// Compact, deterministic rendering of the profile for prompts.
pub fn profile_digest(f: &MetaFeatures) -> String {
    let mut s = String::new();
    if let Some(p) = &f.primary_table {
        s.push_str(&format!("primary table: {p} ({} rows)\n", f.row_count));
    }
    s.push_str("files:\n");
    for e in &f.file_manifest {
        s.push_str(&format!("  {} ({} bytes)\n", e.path, e.size_bytes));
    }
    s.push_str("columns (name, dtype, null_rate, distinct, samples):\n");
    for c in &f.columns {
        let samples: Vec<&str> = c.sample_values.iter().take(5).map(String::as_str).collect();
        s.push_str(&format!(
            "  {}: {} nulls={:.4} distinct={} [{}]\n",
            c.name,
            c.dtype,
            c.null_rate,
            c.distinct_count,
            samples.join(", ")
        ));
    }
    if !f.class_distribution.is_empty() {
        let parts: Vec<String> = f.class_distribution.iter().map(|(k, v)| format!("{k}={v}")).collect();
        s.push_str(&format!("class distribution: {}\n", parts.join(", ")));
    }
    if !f.correlation_pairs.is_empty() {
        s.push_str("strongest correlations:\n");
        for p in f.correlation_pairs.iter().take(5) {
            s.push_str(&format!("  {} ~ {}: {:.3}\n", p.a, p.b, p.r));
        }
    }
    s
}

fn summary_digest(summary: &TaskSummary) -> String {
    let mut s = format!(
        "objective: {:?}\nmetric: {}\ntarget: {}\n",
        summary.objective_kind,
        summary.optimization_metric,
        summary.target_column.as_deref().unwrap_or("unknown")
    );
    if let Some(f) = &summary.submission_format {
        s.push_str(&format!("submission columns: [{}]\n", f.columns().join(", ")));
    }
    for e in &summary.file_map {
        s.push_str(&format!("file {} role={:?}\n", e.path, e.role));
    }
    s
}

/// Asks for JSON, re-prompting with the problems of the previous answer.
/// `Err` carries the problems of the final attempt.
fn ask_json<T, R>(
    llm: &Gateway,
    scope: Option<&str>,
    user: &str,
    check: impl Fn(T) -> std::result::Result<R, Vec<String>>,
) -> Result<std::result::Result<R, Vec<String>>>
where
    T: DeserializeOwned,
{
    let mut problems: Vec<String> = Vec::new();
    for _ in 0..=MAX_REPROMPTS {
        let prompt = if problems.is_empty() {
            user.to_string()
        } else {
            format!(
                "{user}\n\nYour previous answer was rejected:\n- {}\nAnswer again with corrected JSON only.",
                problems.join("\n- ")
            )
        };
        let text = llm.complete(AgentRole::Guideline, scope, GUIDELINE_SYSTEM, &prompt)?.text;
        let Some(v) = extract_json(&text) else {
            problems = vec!["no JSON object found in the answer".into()];
            continue;
        };
        match serde_json::from_value::<T>(v) {
            Ok(t) => match check(t) {
                Ok(r) => return Ok(Ok(r)),
                Err(p) => problems = p,
            },
            Err(e) => problems = vec![format!("JSON does not match the requested shape: {e}")],
        }
    }
    Ok(Err(problems))
}

const CONTRACT_SHAPE: &str = r#"{
  "artifacts": [
    {"name": "train_features", "kind": "table | dense_array", "producer": "preprocessing",
     "columns": [{"name": "...", "dtype": "int | real | bool | text | datetime | categorical | numeric | any", "nullable": false}],
     "all_columns": {"dtype": "numeric", "nullable": false},
     "shape": [null, null], "value_ranges": {"<column or *>": {"min": 0, "max": 1}}},
    {"name": "train_target", "kind": "table", "producer": "preprocessing", "columns": [...]},
    {"name": "test_features", "kind": "table | dense_array", "producer": "preprocessing"},
    {"name": "predictions", "kind": "table", "producer": "modeling", "columns": [<submission columns>]}
  ],
  "relations": ["predictions.rows == test_features.rows", "train_features.rows == train_target.rows"],
  "preprocessing_entrypoint": {"name": "preprocess_data", "params": ["data_dir", "artifacts_dir", "sample_limit", "seed"]},
  "modeling_entrypoint": {"name": "train_and_predict", "params": ["data_dir", "artifacts_dir", "sample_limit", "seed"]},
  "batch_directives": null
}"#;

/// Problems keeping `c` from being the run contract.
pub fn contract_problems(c: &InterfaceContract, summary: &TaskSummary) -> Vec<String> {
    let mut out = c.validate();
    for (name, producer) in [
        ("train_features", Stage::Preprocessing),
        ("train_target", Stage::Preprocessing),
        ("test_features", Stage::Preprocessing),
        ("predictions", Stage::Modeling),
    ] {
        match c.artifact(name) {
            None => out.push(format!("required artifact `{name}` is missing")),
            Some(a) if a.producer != producer => {
                out.push(format!("artifact `{name}` must be produced by {producer}"))
            }
            Some(_) => {}
        }
    }
    if let Some(p) = c.artifact("predictions") {
        if p.kind != ArtifactKind::Table {
            out.push("artifact `predictions` must be a table".into());
        }
        if let Some(f) = &summary.submission_format {
            let declared: BTreeSet<&str> = p.columns.iter().map(|c| c.name.as_str()).collect();
            for col in f.columns() {
                if !declared.contains(col.as_str()) {
                    out.push(format!("`predictions` must carry submission column `{col}`"));
                }
            }
        }
    }
    let want = RowRelation::parse(REQUIRED_RELATION).expect("static relation").to_string();
    let has = c
        .relations
        .iter()
        .filter_map(|r| RowRelation::parse(r).ok())
        .any(|r| r.to_string() == want);
    if !has {
        out.push(format!("relation `{REQUIRED_RELATION}` is required"));
    }
    if c.preprocessing_entrypoint.name != PREP_ENTRYPOINT {
        out.push(format!("preprocessing entrypoint must be `{PREP_ENTRYPOINT}`"));
    }
    if c.modeling_entrypoint.name != MODEL_ENTRYPOINT {
        out.push(format!("modeling entrypoint must be `{MODEL_ENTRYPOINT}`"));
    }
    out
}

/// The held-out prediction table the orchestrator scores.
pub fn validation_artifact() -> ArtifactSpec {
    ArtifactSpec::table(
        VALIDATION_ARTIFACT,
        Stage::Modeling,
        vec![
            ColumnConstraint {
                name: "row".into(),
                dtype: DtypeRule::Int,
                nullable: false,
            },
            ColumnConstraint {
                name: "y_pred".into(),
                dtype: DtypeRule::Any,
                nullable: false,
            },
        ],
    )
}

/// Synthesizes the run's shared contract.
pub fn define_contract(summary: &TaskSummary, f: &MetaFeatures, llm: &Gateway) -> Result<InterfaceContract> {
    let user = format!(
        "Define the interface contract between the preprocessing stage and the modeling stage.\n\n\
         Task:\n{}\nData profile:\n{}\n\
         Requirements: declare artifacts train_features, train_target and test_features (producer preprocessing) \
         and predictions (producer modeling) whose columns are exactly the submission columns; \
         include the relation `{REQUIRED_RELATION}`; use entrypoints `{PREP_ENTRYPOINT}` and `{MODEL_ENTRYPOINT}` \
         with parameters drawn from data_dir, artifacts_dir, sample_limit, seed.\n\n\
         Return JSON of this shape:\n{CONTRACT_SHAPE}\n",
        summary_digest(summary),
        profile_digest(f)
    );
    let outcome = ask_json::<InterfaceContract, _>(llm, None, &user, |mut c| {
        c.schema_version = SCHEMA_VERSION.into();
        let p = contract_problems(&c, summary);
        if p.is_empty() {
            Ok(c)
        } else {
            Err(p)
        }
    })?;
    let mut c = outcome.map_err(|p| Error::ContractSynthesisFailed(p.join("; ")))?;
    if c.artifact(VALIDATION_ARTIFACT).is_none() {
        c.artifacts.push(validation_artifact());
    }
    Ok(c)
}

#[derive(Debug, Deserialize)]
struct ModelReply {
    #[serde(default)]
    algorithm: Option<String>,
    #[serde(default)]
    reference: Option<String>,
    #[serde(default)]
    notes: String,
}

#[derive(Debug, Default, Deserialize)]
struct EvalReply {
    #[serde(default)]
    scheme: Option<ValidationScheme>,
    #[serde(default)]
    metric: Option<String>,
}

#[derive(Debug, Deserialize)]
struct BlueprintReply {
    #[serde(default)]
    prep: Vec<PrepDirective>,
    model: ModelReply,
    train: TrainPlan,
    #[serde(default)]
    eval: EvalReply,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

const BLUEPRINT_SHAPE: &str = r#"{
  "prep": [{"transform": "impute_median | one_hot | standardize | drop_column | ...", "columns": ["..."],
            "params": {}, "derived_columns": [], "rationale": "..."}],
  "model": {"algorithm": "...", "reference": "<candidate reference, omitted for traditional>", "notes": "..."},
  "train": {"search_space": {"<param>": {"type": "continuous", "low": 0.0, "high": 1.0, "log": false}
                                        | {"type": "integer", "low": 1, "high": 10}
                                        | {"type": "choices", "values": [...]}},
            "strategy": "grid_search | random_search | bayesian", "loss": "..."},
  "eval": {"scheme": {"type": "stratified_holdout", "fraction": 0.2}, "metric": "<task metric>"},
  "provenance": {"<directive or section>": "<profile fact that justifies it>"}
}"#;

/// Default validation scheme: stratified 80/20 holdout.
pub fn default_scheme() -> ValidationScheme {
    ValidationScheme::StratifiedHoldout { fraction: 0.2 }
}

fn candidate_kind(track: TrackKind) -> Option<CandidateKind> {
    match track {
        TrackKind::Traditional => None,
        TrackKind::Pretrained => Some(CandidateKind::PretrainedCheckpoint),
        TrackKind::CustomNeural => Some(CandidateKind::Architecture),
    }
}

/// Candidates a track may reference.
pub fn candidates_for(track: TrackKind, candidates: &[ModelCandidate]) -> Vec<ModelCandidate> {
    let Some(kind) = candidate_kind(track) else { return Vec::new() };
    prefer_validated(candidates.iter().filter(|c| c.kind == kind).cloned().collect())
}

/// Columns with missing values that no imputation or drop directive covers.
pub fn uncovered_null_columns(prep: &[PrepDirective], f: &MetaFeatures, target: Option<&str>) -> Vec<String> {
    let covered: BTreeSet<&str> = prep
        .iter()
        .filter(|d| d.is_imputation())
        .flat_map(|d| d.columns.iter().map(String::as_str))
        .collect();
    f.columns
        .iter()
        .filter(|c| c.null_rate > 0.0 && Some(c.name.as_str()) != target && !covered.contains(c.name.as_str()))
        .map(|c| c.name.clone())
        .collect()
}

/// Every blueprint problem, including the run-level ones the model-level
/// validator cannot see.
pub fn blueprint_problems(
    b: &StrategicBlueprint,
    f: &MetaFeatures,
    summary: &TaskSummary,
    allowed: &[ModelCandidate],
) -> Vec<Violation> {
    let mut out = validate_blueprint(b, f);
    for col in uncovered_null_columns(&b.prep, f, summary.target_column.as_deref()) {
        out.push(Violation {
            section: "prep".into(),
            message: format!("column `{col}` has missing values but no imputation or drop directive"),
        });
    }
    if let Some(r) = &b.model.track.reference {
        if b.model.track.kind != TrackKind::Traditional
            && !allowed.iter().any(|c| &c.reference == r || &c.name == r)
        {
            out.push(Violation {
                section: "model".into(),
                message: format!("reference `{r}` is not one of the offered candidates"),
            });
        }
    }
    if summary.metric_known() && b.eval.metric != summary.optimization_metric {
        out.push(Violation {
            section: "eval".into(),
            message: format!(
                "evaluation metric `{}` differs from the task metric `{}`",
                b.eval.metric, summary.optimization_metric
            ),
        });
    }
    out
}

fn blueprint_prompt(summary: &TaskSummary, f: &MetaFeatures, track: TrackKind, allowed: &[ModelCandidate], contract: &InterfaceContract) -> String {
    let mut s = format!(
        "Plan the {track} implementation track.\n\nTask:\n{}\nData profile:\n{}\n",
        summary_digest(summary),
        profile_digest(f)
    );
    if !allowed.is_empty() {
        s.push_str("Candidates (use one reference verbatim):\n");
        for c in allowed {
            s.push_str(&format!("  {} -> {}\n", c.name, c.reference));
        }
    }
    s.push_str(&format!(
        "The interface contract is fixed (hash {}). Artifacts: {}.\n\
         Every column with missing values needs an imputation or drop directive. \
         Name an optimization strategy and a non-empty search space. The evaluation metric is the task metric.\n\n\
         Return JSON of this shape:\n{BLUEPRINT_SHAPE}\n",
        contract.hash(),
        contract.artifacts.iter().map(|a| a.name.as_str()).collect::<Vec<_>>().join(", ")
    ));
    s
}

/// One blueprint per requested track, each bound to `contract`.
pub fn synthesize_blueprint(
    summary: &TaskSummary,
    f: &MetaFeatures,
    candidates: &[ModelCandidate],
    contract: &InterfaceContract,
    llm: &Gateway,
    tracks: &[TrackKind],
    seed: u64,
) -> Result<Vec<StrategicBlueprint>> {
    if tracks.is_empty() {
        return Err(Error::PlanningFailed {
            violations: vec!["no implementation track requested".into()],
        });
    }
    let hash = contract.hash();
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for &track in tracks {
        let allowed = candidates_for(track, candidates);
        if candidate_kind(track).is_some() && allowed.is_empty() {
            failures.push(format!("[{track}] [model] no candidate available for this track"));
            continue;
        }
        let user = blueprint_prompt(summary, f, track, &allowed, contract);
        let outcome = ask_json::<BlueprintReply, _>(llm, Some(track.as_str()), &user, |r| {
            let b = StrategicBlueprint {
                schema_version: SCHEMA_VERSION.into(),
                prep: r.prep,
                model: ModelPlan {
                    track: ImplementationTrack {
                        kind: track,
                        reference: r.model.reference.filter(|s| !s.trim().is_empty()),
                    },
                    algorithm: r.model.algorithm,
                    candidates: allowed.iter().map(|c| c.reference.clone()).collect(),
                    notes: r.model.notes,
                },
                train: r.train,
                eval: EvalPlan {
                    scheme: r.eval.scheme.unwrap_or_else(default_scheme),
                    seed,
                    metric: r.eval.metric.unwrap_or_else(|| summary.optimization_metric.clone()),
                },
                contract: contract.clone(),
                contract_hash: hash.clone(),
                provenance: r.provenance,
            };
            let v = blueprint_problems(&b, f, summary, &allowed);
            if v.is_empty() {
                Ok(b)
            } else {
                Err(v.iter().map(ToString::to_string).collect())
            }
        })?;
        match outcome {
            Ok(b) => out.push(b),
            Err(p) => failures.extend(p.into_iter().map(|m| format!("[{track}] {m}"))),
        }
    }
    if !failures.is_empty() {
        return Err(Error::PlanningFailed { violations: failures });
    }
    Ok(out)
}

pub fn persist_contract(layout: &RunLayout, contract: &InterfaceContract) -> Result<()> {
    let p = layout.contract();
    std::fs::write(&p, to_canonical_json(contract)?).ctx(|| format!("writing {}", p.display()))
}

pub fn persist_blueprint(layout: &RunLayout, b: &StrategicBlueprint) -> Result<()> {
    let p = layout.blueprint(b.model.track.kind);
    if let Some(d) = p.parent() {
        std::fs::create_dir_all(d).ctx(|| format!("creating {}", d.display()))?;
    }
    std::fs::write(&p, to_canonical_json(b)?).ctx(|| format!("writing {}", p.display()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::llm::{FixtureEntry, ScriptedProvider};
    use crate::model::{ColumnProfile, Dtype, FileManifestEntry, ObjectiveKind, SubmissionFormat};
    use std::sync::Arc;

    pub(crate) const CONTRACT_JSON: &str = r#"{
      "artifacts": [
        {"name": "train_features", "kind": "table", "producer": "preprocessing", "all_columns": {"dtype": "numeric"}},
        {"name": "train_target", "kind": "table", "producer": "preprocessing", "columns": [{"name": "label", "dtype": "int"}]},
        {"name": "test_features", "kind": "table", "producer": "preprocessing", "all_columns": {"dtype": "numeric"}},
        {"name": "predictions", "kind": "table", "producer": "modeling",
         "columns": [{"name": "id", "dtype": "int"}, {"name": "label", "dtype": "int"}]}
      ],
      "relations": ["predictions.rows == test_features.rows"],
      "preprocessing_entrypoint": {"name": "preprocess_data", "params": ["data_dir", "artifacts_dir"]},
      "modeling_entrypoint": {"name": "train_and_predict", "params": ["data_dir", "artifacts_dir", "seed"]}
    }"#;

    const BLUEPRINT_JSON: &str = r#"{
      "prep": [{"transform": "impute_median", "columns": ["age"]}],
      "model": {"algorithm": "logistic_regression"},
      "train": {"search_space": {"C": {"type": "continuous", "low": 0.01, "high": 10.0, "log": true}}, "strategy": "grid_search"},
      "eval": {"metric": "accuracy"}
    }"#;

    fn summary() -> TaskSummary {
        TaskSummary {
            objective_kind: ObjectiveKind::Classification,
            optimization_metric: "accuracy".into(),
            metric_direction: None,
            target_column: Some("label".into()),
            submission_format: Some(SubmissionFormat {
                id_columns: vec!["id".into()],
                prediction_columns: vec!["label".into()],
            }),
            file_map: vec![],
        }
    }

    fn meta() -> MetaFeatures {
        let col = |n: &str, null_rate: f64| ColumnProfile {
            name: n.into(),
            dtype: Dtype::Real,
            null_count: (null_rate * 10.0) as u64,
            null_rate,
            distinct_count: 5,
            sample_values: vec![],
            numeric: None,
            top_categories: vec![],
        };
        MetaFeatures {
            primary_table: Some("train.csv".into()),
            row_count: 10,
            columns: vec![col("id", 0.0), col("age", 0.2), col("label", 0.0)],
            tables: vec![],
            target_candidates: vec!["label".into()],
            class_distribution: Default::default(),
            correlation_pairs: vec![],
            file_manifest: vec![FileManifestEntry {
                path: "train.csv".into(),
                size_bytes: 10,
                extension: "csv".into(),
                records: Some(10),
            }],
            sample_values_cap: 10,
        }
    }

    fn gateway(entries: Vec<FixtureEntry>) -> Gateway {
        Gateway::new(Arc::new(ScriptedProvider::new(entries)), 0.2, 1024)
    }

    #[test]
    fn contract_accepts_and_adds_validation_table() {
        let llm = gateway(vec![FixtureEntry::inline(AgentRole::Guideline, 0, CONTRACT_JSON)]);
        let c = define_contract(&summary(), &meta(), &llm).unwrap();
        assert!(c.artifact(VALIDATION_ARTIFACT).is_some());
        let text = to_canonical_json(&c).unwrap();
        let back: InterfaceContract = serde_json::from_str(&text).unwrap();
        assert_eq!(to_canonical_json(&back).unwrap(), text);
    }

    #[test]
    fn missing_predictions_reprompts_then_fails() {
        let bad = CONTRACT_JSON.replace("\"predictions\"", "\"preds\"").replace("predictions.rows", "preds.rows");
        let llm = gateway(vec![
            FixtureEntry::inline(AgentRole::Guideline, 0, bad.clone()),
            FixtureEntry::inline(AgentRole::Guideline, 1, CONTRACT_JSON),
        ]);
        assert!(define_contract(&summary(), &meta(), &llm).is_ok());
        let llm = gateway((0..3).map(|i| FixtureEntry::inline(AgentRole::Guideline, i, bad.clone())).collect());
        match define_contract(&summary(), &meta(), &llm) {
            Err(Error::ContractSynthesisFailed(m)) => assert!(m.contains("predictions")),
            other => panic!("{other:?}"),
        }
    }

    fn contract() -> InterfaceContract {
        let llm = gateway(vec![FixtureEntry::inline(AgentRole::Guideline, 0, CONTRACT_JSON)]);
        define_contract(&summary(), &meta(), &llm).unwrap()
    }

    #[test]
    fn traditional_only_blueprint() {
        let c = contract();
        let llm = gateway(vec![FixtureEntry::inline(AgentRole::Guideline, 0, BLUEPRINT_JSON).scoped("traditional")]);
        let bs = synthesize_blueprint(&summary(), &meta(), &[], &c, &llm, &[TrackKind::Traditional], 7).unwrap();
        assert_eq!(bs.len(), 1);
        assert_eq!(bs[0].model.track, ImplementationTrack::traditional());
        assert_eq!(bs[0].contract_hash, c.hash());
        assert_eq!(bs[0].eval.seed, 7);
        assert_eq!(bs[0].eval.scheme, default_scheme());
    }

    #[test]
    fn imputation_required_for_null_columns() {
        let c = contract();
        let no_impute = BLUEPRINT_JSON.replace("impute_median", "standardize");
        let llm = gateway((0..3).map(|i| FixtureEntry::inline(AgentRole::Guideline, i, no_impute.clone()).scoped("traditional")).collect());
        match synthesize_blueprint(&summary(), &meta(), &[], &c, &llm, &[TrackKind::Traditional], 0) {
            Err(Error::PlanningFailed { violations }) => assert!(violations.iter().any(|v| v.contains("`age`"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_tracks_without_candidates_fail() {
        let c = contract();
        let llm = gateway(vec![FixtureEntry::inline(AgentRole::Guideline, 0, BLUEPRINT_JSON).scoped("traditional")]);
        let err = synthesize_blueprint(&summary(), &meta(), &[], &c, &llm, &TrackKind::ALL, 0).unwrap_err();
        assert_eq!(err.code(), "PLANNING_FAILED");
    }
}
