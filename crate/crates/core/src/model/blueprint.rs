use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::contract::InterfaceContract;
use super::meta::MetaFeatures;
use super::metric::metric_info;
use super::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackKind {
    Traditional,
    Pretrained,
    CustomNeural,
}

impl TrackKind {
    pub const ALL: [TrackKind; 3] = [
        TrackKind::Traditional,
        TrackKind::Pretrained,
        TrackKind::CustomNeural,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrackKind::Traditional => "traditional",
            TrackKind::Pretrained => "pretrained",
            TrackKind::CustomNeural => "custom_neural",
        }
    }
}

impl fmt::Display for TrackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrackKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "traditional" | "traditional_ml" => Ok(TrackKind::Traditional),
            "pretrained" | "pretrained_model" => Ok(TrackKind::Pretrained),
            "custom_neural" | "custom" | "custom_nn" => Ok(TrackKind::CustomNeural),
            other => Err(format!("unknown track `{other}`")),
        }
    }
}

/// Track plus its payload: a checkpoint reference for `pretrained`, a
/// topology reference for `custom_neural`, nothing for `traditional`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplementationTrack {
    pub kind: TrackKind,
    #[serde(default)]
    pub reference: Option<String>,
}

impl ImplementationTrack {
    pub fn traditional() -> Self {
        ImplementationTrack {
            kind: TrackKind::Traditional,
            reference: None,
        }
    }

    pub fn payload_ok(&self) -> bool {
        match self.kind {
            TrackKind::Traditional => self.reference.is_none(),
            _ => self.reference.as_deref().is_some_and(|r| !r.trim().is_empty()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepDirective {
    pub transform: String,
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    /// New columns this directive creates; later directives may target them.
    #[serde(default)]
    pub derived_columns: Vec<String>,
    #[serde(default)]
    pub rationale: String,
}

impl PrepDirective {
    pub fn is_imputation(&self) -> bool {
        let t = self.transform.to_ascii_lowercase();
        t.contains("impute") || t.contains("fillna") || t == "drop_column" || t == "drop_columns"
    }

    /// One-line rendering used verbatim in coder prompts.
    pub fn render(&self) -> String {
        let params = serde_json::to_string(&self.params).unwrap_or_default();
        let mut s = format!(
            "{} columns=[{}] params={}",
            self.transform,
            self.columns.join(", "),
            params
        );
        if !self.derived_columns.is_empty() {
            s.push_str(&format!(" derives=[{}]", self.derived_columns.join(", ")));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPlan {
    pub track: ImplementationTrack,
    #[serde(default)]
    pub algorithm: Option<String>,
    /// Candidate references the plan considered.
    #[serde(default)]
    pub candidates: Vec<String>,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamRange {
    Continuous {
        low: f64,
        high: f64,
        #[serde(default)]
        log: bool,
    },
    Integer {
        low: i64,
        high: i64,
    },
    Choices {
        values: Vec<serde_json::Value>,
    },
}

impl ParamRange {
    pub fn is_empty(&self) -> bool {
        match self {
            ParamRange::Continuous { low, high, log } => {
                !(low.is_finite() && high.is_finite() && low <= high) || (*log && *low <= 0.0)
            }
            ParamRange::Integer { low, high } => low > high,
            ParamRange::Choices { values } => values.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub search_space: BTreeMap<String, ParamRange>,
    /// Optimization strategy id, e.g. `grid_search` or `bayesian`.
    pub strategy: String,
    #[serde(default)]
    pub loss: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ValidationScheme {
    Holdout { fraction: f64 },
    StratifiedHoldout { fraction: f64 },
    Kfold { k: u32 },
    StratifiedKfold { k: u32 },
}

impl ValidationScheme {
    fn problem(&self) -> Option<String> {
        match self {
            ValidationScheme::Holdout { fraction } | ValidationScheme::StratifiedHoldout { fraction }
                if !(*fraction > 0.0 && *fraction < 1.0) =>
            {
                Some(format!("holdout fraction {fraction} not in (0, 1)"))
            }
            ValidationScheme::Kfold { k } | ValidationScheme::StratifiedKfold { k } if *k < 2 => {
                Some(format!("k-fold needs k >= 2, got {k}"))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPlan {
    pub scheme: ValidationScheme,
    pub seed: u64,
    pub metric: String,
}

/// The four-part plan that constrains all code generation for one track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategicBlueprint {
    #[serde(default = "default_schema_version")]
    pub schema_version: String,
    pub prep: Vec<PrepDirective>,
    pub model: ModelPlan,
    pub train: TrainPlan,
    pub eval: EvalPlan,
    pub contract: InterfaceContract,
    /// Canonical hash of `contract`; must equal the run's contract hash.
    #[serde(default)]
    pub contract_hash: String,
    /// Directive or section → the meta-feature or justification behind it.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

fn default_schema_version() -> String {
    SCHEMA_VERSION.to_string()
}

/// One broken blueprint invariant. `section` is `prep`, `model`, `train`,
/// `eval` or `contract`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub section: String,
    pub message: String,
}

impl Violation {
    fn new(section: &str, message: String) -> Self {
        Violation {
            section: section.into(),
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.section, self.message)
    }
}

/// Checks every blueprint invariant against the measured data. Violations are
/// data; an empty list means the blueprint is admissible.
pub fn validate_blueprint(b: &StrategicBlueprint, f: &MetaFeatures) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut known: BTreeSet<&str> = f
        .columns
        .iter()
        .chain(f.tables.iter().flat_map(|t| t.columns.iter()))
        .map(|c| c.name.as_str())
        .collect();
    for (i, d) in b.prep.iter().enumerate() {
        if d.transform.trim().is_empty() {
            out.push(Violation::new("prep", format!("directive #{i} has no transform")));
        }
        for col in &d.columns {
            if !known.contains(col.as_str()) {
                out.push(Violation::new(
                    "prep",
                    format!(
                        "directive #{i} ({}) targets column `{col}` which is neither profiled nor derived",
                        d.transform
                    ),
                ));
            }
        }
        known.extend(d.derived_columns.iter().map(String::as_str));
    }

    if !b.model.track.payload_ok() {
        out.push(Violation::new(
            "model",
            match b.model.track.kind {
                TrackKind::Traditional => "traditional track must not carry a candidate reference".into(),
                k => format!("{k} track requires a candidate reference"),
            },
        ));
    }

    if b.train.search_space.is_empty() {
        out.push(Violation::new("train", "hyperparameter search space is empty".into()));
    }
    for (param, range) in &b.train.search_space {
        if range.is_empty() {
            out.push(Violation::new(
                "train",
                format!("hyperparameter `{param}` has an empty range"),
            ));
        }
    }
    if b.train.strategy.trim().is_empty() {
        out.push(Violation::new("train", "no optimization strategy named".into()));
    }

    if let Some(p) = b.eval.scheme.problem() {
        out.push(Violation::new("eval", p));
    }
    if metric_info(&b.eval.metric).is_none() {
        out.push(Violation::new(
            "eval",
            format!("metric `{}` is not in the registry", b.eval.metric),
        ));
    }

    for problem in b.contract.validate() {
        out.push(Violation::new("contract", problem));
    }
    if !b.contract_hash.is_empty() && b.contract_hash != b.contract.hash() {
        out.push(Violation::new(
            "contract",
            "contract_hash does not match the embedded contract".into(),
        ));
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{
        ArtifactSpec, ColumnProfile, Dtype, Entrypoint, Stage,
    };

    pub(crate) fn meta(cols: &[&str]) -> MetaFeatures {
        MetaFeatures {
            primary_table: Some("train.csv".into()),
            row_count: 4,
            columns: cols
                .iter()
                .map(|c| ColumnProfile {
                    name: c.to_string(),
                    dtype: Dtype::Real,
                    null_count: 0,
                    null_rate: 0.0,
                    distinct_count: 4,
                    sample_values: vec![],
                    numeric: None,
                    top_categories: vec![],
                })
                .collect(),
            tables: vec![],
            target_candidates: vec![],
            class_distribution: BTreeMap::new(),
            correlation_pairs: vec![],
            file_manifest: vec![],
            sample_values_cap: 10,
        }
    }

    pub(crate) fn blueprint() -> StrategicBlueprint {
        let contract = InterfaceContract {
            schema_version: SCHEMA_VERSION.into(),
            artifacts: vec![ArtifactSpec::table("train_features", Stage::Preprocessing, vec![])],
            relations: vec![],
            preprocessing_entrypoint: Entrypoint {
                name: "preprocess_data".into(),
                params: vec!["data_dir".into(), "artifacts_dir".into()],
            },
            modeling_entrypoint: Entrypoint {
                name: "train_and_predict".into(),
                params: vec!["artifacts_dir".into()],
            },
            batch_directives: None,
        };
        let mut space = BTreeMap::new();
        space.insert(
            "lr".into(),
            ParamRange::Continuous {
                low: 1e-4,
                high: 1e-1,
                log: true,
            },
        );
        StrategicBlueprint {
            schema_version: SCHEMA_VERSION.into(),
            prep: vec![PrepDirective {
                transform: "impute_median".into(),
                columns: vec!["age".into()],
                params: BTreeMap::new(),
                derived_columns: vec!["age_bucket".into()],
                rationale: "age has nulls".into(),
            }],
            model: ModelPlan {
                track: ImplementationTrack::traditional(),
                algorithm: Some("logistic_regression".into()),
                candidates: vec![],
                notes: String::new(),
            },
            train: TrainPlan {
                search_space: space,
                strategy: "grid_search".into(),
                loss: "log_loss".into(),
            },
            eval: EvalPlan {
                scheme: ValidationScheme::StratifiedHoldout { fraction: 0.2 },
                seed: 7,
                metric: "accuracy".into(),
            },
            contract_hash: contract.hash(),
            contract,
            provenance: BTreeMap::new(),
        }
    }

    #[test]
    fn valid_blueprint_has_no_violations() {
        assert_eq!(validate_blueprint(&blueprint(), &meta(&["age", "y"])), vec![]);
    }

    #[test]
    fn ghost_column_is_named() {
        let mut b = blueprint();
        b.prep[0].columns.push("ghost".into());
        let v = validate_blueprint(&b, &meta(&["age"]));
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("`ghost`"));
    }

    #[test]
    fn derived_columns_are_targetable_later() {
        let mut b = blueprint();
        b.prep.push(PrepDirective {
            transform: "one_hot".into(),
            columns: vec!["age_bucket".into()],
            params: BTreeMap::new(),
            derived_columns: vec![],
            rationale: String::new(),
        });
        assert!(validate_blueprint(&b, &meta(&["age"])).is_empty());
    }

    #[test]
    fn pretrained_without_reference() {
        let mut b = blueprint();
        b.model.track = ImplementationTrack {
            kind: TrackKind::Pretrained,
            reference: None,
        };
        let v = validate_blueprint(&b, &meta(&["age"]));
        assert_eq!(v[0].section, "model");
    }

    #[test]
    fn track_parsing() {
        assert_eq!("custom-neural".parse::<TrackKind>().unwrap(), TrackKind::CustomNeural);
        assert!("deep".parse::<TrackKind>().is_err());
    }
}
