use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::meta::Dtype;
use super::{canonical_hash, is_identifier, Stage, SCHEMA_VERSION};

/// Parameter names the runtime harness knows how to bind when it calls an
/// entrypoint. Contracts may only declare parameters from this list.
pub const BINDABLE_PARAMS: &[&str] = &["data_dir", "artifacts_dir", "sample_limit", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Table,
    DenseArray,
    LoaderConfig,
    FilePath,
}

impl ArtifactKind {
    pub fn extension(self) -> &'static str {
        match self {
            ArtifactKind::Table => "csv",
            ArtifactKind::DenseArray => "npy",
            ArtifactKind::LoaderConfig => "json",
            ArtifactKind::FilePath => "path",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtypeRule {
    Int,
    Real,
    Bool,
    Text,
    Datetime,
    Categorical,
    Numeric,
    Any,
}

impl DtypeRule {
    pub fn accepts(self, observed: Dtype) -> bool {
        match self {
            DtypeRule::Any => true,
            DtypeRule::Numeric | DtypeRule::Real => observed.is_numeric(),
            DtypeRule::Int => observed == Dtype::Int,
            DtypeRule::Bool => observed == Dtype::Bool,
            DtypeRule::Datetime => observed == Dtype::Datetime,
            // The text/categorical split is a cardinality heuristic, not storage.
            DtypeRule::Text | DtypeRule::Categorical => {
                matches!(observed, Dtype::Text | Dtype::Categorical)
            }
        }
    }
}

impl fmt::Display for DtypeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnConstraint {
    pub name: String,
    pub dtype: DtypeRule,
    #[serde(default)]
    pub nullable: bool,
}

/// Applies to every column of a table (typical for model-ready features).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRule {
    pub dtype: DtypeRule,
    #[serde(default)]
    pub nullable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSpec {
    pub name: String,
    pub kind: ArtifactKind,
    /// Which stage must write it. Only `preprocessing` or `modeling`.
    pub producer: Stage,
    #[serde(default)]
    pub columns: Vec<ColumnConstraint>,
    #[serde(default)]
    pub all_columns: Option<ColumnRule>,
    /// `null` entries are wildcards. Tables are `[rows, cols]`.
    #[serde(default)]
    pub shape: Option<Vec<Option<u64>>>,
    /// Keyed by column name; `*` addresses all values of a dense array.
    #[serde(default)]
    pub value_ranges: BTreeMap<String, ValueRange>,
}

impl ArtifactSpec {
    pub fn file_name(&self) -> String {
        format!("{}.{}", self.name, self.kind.extension())
    }

    pub fn table(name: &str, producer: Stage, columns: Vec<ColumnConstraint>) -> Self {
        ArtifactSpec {
            name: name.into(),
            kind: ArtifactKind::Table,
            producer,
            columns,
            all_columns: None,
            shape: None,
            value_ranges: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entrypoint {
    pub name: String,
    pub params: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct BatchDirectives {
    #[serde(default)]
    pub batch_size: Option<u64>,
    #[serde(default)]
    pub notes: Option<String>,
}

/// Machine-checkable schema binding preprocessing outputs to modeling inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceContract {
    #[serde(default = "default_schema_version")]
    pub schema_version: String,
    pub artifacts: Vec<ArtifactSpec>,
    #[serde(default)]
    pub relations: Vec<String>,
    pub preprocessing_entrypoint: Entrypoint,
    pub modeling_entrypoint: Entrypoint,
    #[serde(default)]
    pub batch_directives: Option<BatchDirectives>,
}

fn default_schema_version() -> String {
    SCHEMA_VERSION.to_string()
}

impl InterfaceContract {
    pub fn artifact(&self, name: &str) -> Option<&ArtifactSpec> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    pub fn produced_by(&self, stage: Stage) -> impl Iterator<Item = &ArtifactSpec> {
        self.artifacts.iter().filter(move |a| a.producer == stage)
    }

    pub fn hash(&self) -> String {
        canonical_hash(self).expect("contract serializes")
    }

    pub fn parsed_relations(&self) -> Vec<Result<RowRelation, String>> {
        self.relations.iter().map(|r| RowRelation::parse(r)).collect()
    }

    /// Structural invariants; empty when the contract is well formed.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut names = BTreeSet::new();
        for a in &self.artifacts {
            if !names.insert(a.name.as_str()) {
                out.push(format!("artifact name `{}` declared twice", a.name));
            }
            if !is_identifier(&a.name) {
                out.push(format!("artifact name `{}` is not an identifier", a.name));
            }
            if !matches!(a.producer, Stage::Preprocessing | Stage::Modeling) {
                out.push(format!(
                    "artifact `{}` producer must be preprocessing or modeling",
                    a.name
                ));
            }
            let mut cols = BTreeSet::new();
            for c in &a.columns {
                if !cols.insert(c.name.as_str()) {
                    out.push(format!("artifact `{}` column `{}` declared twice", a.name, c.name));
                }
            }
            for (key, r) in &a.value_ranges {
                if let (Some(lo), Some(hi)) = (r.min, r.max) {
                    if lo > hi {
                        out.push(format!("artifact `{}` range for `{key}` is empty", a.name));
                    }
                }
            }
        }
        for rel in &self.relations {
            match RowRelation::parse(rel) {
                Ok(r) => {
                    for name in r.artifacts() {
                        if !names.contains(name) {
                            out.push(format!(
                                "relation `{rel}` references undeclared artifact `{name}`"
                            ));
                        }
                    }
                }
                Err(e) => out.push(format!("relation `{rel}`: {e}")),
            }
        }
        for (label, ep) in [
            ("preprocessing", &self.preprocessing_entrypoint),
            ("modeling", &self.modeling_entrypoint),
        ] {
            if !is_identifier(&ep.name) {
                out.push(format!("{label} entrypoint `{}` is not an identifier", ep.name));
            }
            for p in &ep.params {
                if !BINDABLE_PARAMS.contains(&p.as_str()) {
                    out.push(format!(
                        "{label} entrypoint parameter `{p}` is not bindable (allowed: {})",
                        BINDABLE_PARAMS.join(", ")
                    ));
                }
            }
        }
        if self.preprocessing_entrypoint.name == self.modeling_entrypoint.name {
            out.push("preprocessing and modeling entrypoints share a name".into());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dim {
    Rows,
    Cols,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Measure { artifact: String, dim: Dim },
    Const(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Le,
    Ge,
    Lt,
    Gt,
}

impl CmpOp {
    fn holds(self, a: u64, b: u64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Le => a <= b,
            CmpOp::Ge => a >= b,
            CmpOp::Lt => a < b,
            CmpOp::Gt => a > b,
        }
    }
}

/// `<artifact>.rows|cols <op> <artifact>.rows|cols|<int>`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowRelation {
    pub lhs: Operand,
    pub op: CmpOp,
    pub rhs: Operand,
}

impl RowRelation {
    pub fn parse(text: &str) -> Result<Self, String> {
        let ops = [
            ("==", CmpOp::Eq),
            ("!=", CmpOp::Ne),
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ];
        let (pos, tok, op) = ops
            .iter()
            .find_map(|(tok, op)| text.find(tok).map(|p| (p, *tok, *op)))
            .ok_or_else(|| "no comparison operator".to_string())?;
        let lhs = parse_operand(text[..pos].trim())?;
        let rhs = parse_operand(text[pos + tok.len()..].trim())?;
        if matches!(lhs, Operand::Const(_)) {
            return Err("left-hand side must reference an artifact".into());
        }
        Ok(RowRelation { lhs, op, rhs })
    }

    pub fn artifacts(&self) -> Vec<&str> {
        [&self.lhs, &self.rhs]
            .into_iter()
            .filter_map(|o| match o {
                Operand::Measure { artifact, .. } => Some(artifact.as_str()),
                Operand::Const(_) => None,
            })
            .collect()
    }

    /// `Err` names the operand that could not be measured.
    pub fn evaluate(&self, observed: &BTreeMap<String, ObservedArtifact>) -> Result<(bool, u64, u64), String> {
        let a = measure(&self.lhs, observed)?;
        let b = measure(&self.rhs, observed)?;
        Ok((self.op.holds(a, b), a, b))
    }
}

fn parse_operand(s: &str) -> Result<Operand, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(Operand::Const(n));
    }
    let (artifact, dim) = s
        .rsplit_once('.')
        .ok_or_else(|| format!("operand `{s}` is not `<artifact>.rows` or an integer"))?;
    let dim = match dim {
        "rows" => Dim::Rows,
        "cols" => Dim::Cols,
        other => return Err(format!("unknown dimension `{other}`")),
    };
    if !is_identifier(artifact) {
        return Err(format!("`{artifact}` is not an artifact name"));
    }
    Ok(Operand::Measure {
        artifact: artifact.into(),
        dim,
    })
}

fn measure(op: &Operand, observed: &BTreeMap<String, ObservedArtifact>) -> Result<u64, String> {
    match op {
        Operand::Const(n) => Ok(*n),
        Operand::Measure { artifact, dim } => {
            let o = observed
                .get(artifact)
                .filter(|o| o.status == ArtifactStatus::Present)
                .ok_or_else(|| format!("`{artifact}` not available"))?;
            let v = match dim {
                Dim::Rows => o.row_count.or_else(|| o.shape.first().copied()),
                Dim::Cols => o.shape.get(1).copied(),
            };
            v.ok_or_else(|| format!("`{artifact}` has no {dim:?} measurement"))
        }
    }
}

impl fmt::Display for RowRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = |o: &Operand| match o {
            Operand::Const(n) => n.to_string(),
            Operand::Measure { artifact, dim } => format!(
                "{artifact}.{}",
                if *dim == Dim::Rows { "rows" } else { "cols" }
            ),
        };
        let sym = match self.op {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        };
        write!(f, "{} {sym} {}", op(&self.lhs), op(&self.rhs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactStatus {
    Present,
    Missing,
    Unreadable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedColumn {
    pub name: String,
    pub dtype: Dtype,
    pub null_count: u64,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

/// What was physically found on disk for one declared artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedArtifact {
    pub status: ArtifactStatus,
    pub kind: ArtifactKind,
    #[serde(default)]
    pub columns: Vec<ObservedColumn>,
    #[serde(default)]
    pub shape: Vec<u64>,
    #[serde(default)]
    pub row_count: Option<u64>,
    #[serde(default)]
    pub value_min: Option<f64>,
    #[serde(default)]
    pub value_max: Option<f64>,
    #[serde(default)]
    pub null_count: Option<u64>,
    #[serde(default)]
    pub batch_size: Option<u64>,
    #[serde(default)]
    pub target_exists: Option<bool>,
    #[serde(default)]
    pub reason: Option<String>,
}

impl ObservedArtifact {
    pub fn absent(kind: ArtifactKind, status: ArtifactStatus, reason: Option<String>) -> Self {
        ObservedArtifact {
            status,
            kind,
            columns: Vec::new(),
            shape: Vec::new(),
            row_count: None,
            value_min: None,
            value_max: None,
            null_count: None,
            batch_size: None,
            target_exists: None,
            reason,
        }
    }

    pub fn column(&self, name: &str) -> Option<&ObservedColumn> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    /// Artifact name, or the relation text for cross-artifact checks.
    pub subject: String,
    pub constraint: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractReport {
    #[serde(default = "default_schema_version")]
    pub schema_version: String,
    pub stage: Stage,
    pub artifacts: BTreeMap<String, ObservedArtifact>,
    pub verdicts: Vec<Verdict>,
}

impl ContractReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.pass)
    }

    /// True when every verdict touching a `stage`-produced artifact passed.
    pub fn passes_for(&self, contract: &InterfaceContract, stage: Stage) -> bool {
        self.failures()
            .all(|v| attributed_stage(contract, &v.subject) != Some(stage))
    }
}

/// Stage responsible for a verdict subject: the artifact's producer, or for a
/// relation the latest producer among the artifacts it references.
pub(crate) fn attributed_stage(contract: &InterfaceContract, subject: &str) -> Option<Stage> {
    if let Some(a) = contract.artifact(subject) {
        return Some(a.producer);
    }
    if subject == "submission" {
        return Some(Stage::Modeling);
    }
    let rel = RowRelation::parse(subject).ok()?;
    rel.artifacts()
        .into_iter()
        .filter_map(|n| contract.artifact(n).map(|a| a.producer))
        .max()
}

/// Computes verdicts for every artifact selected by `in_scope` and for every
/// relation whose artifacts are all in scope.
pub fn check_contract(
    contract: &InterfaceContract,
    observed: &BTreeMap<String, ObservedArtifact>,
    in_scope: impl Fn(&ArtifactSpec) -> bool,
) -> Vec<Verdict> {
    let mut out = Vec::new();
    let mut scoped = BTreeSet::new();
    for spec in contract.artifacts.iter().filter(|a| in_scope(a)) {
        scoped.insert(spec.name.as_str());
        match observed.get(&spec.name) {
            Some(o) if o.status == ArtifactStatus::Present => check_artifact(spec, o, &mut out),
            Some(o) => out.push(fail(
                &spec.name,
                "present",
                format!(
                    "{}{}",
                    if o.status == ArtifactStatus::Missing { "missing" } else { "unreadable" },
                    o.reason.as_deref().map(|r| format!(": {r}")).unwrap_or_default()
                ),
            )),
            None => out.push(fail(&spec.name, "present", "missing".into())),
        }
    }
    for rel_text in &contract.relations {
        let Ok(rel) = RowRelation::parse(rel_text) else { continue };
        if !rel.artifacts().iter().all(|a| scoped.contains(a)) {
            continue;
        }
        let canonical = rel.to_string();
        match rel.evaluate(observed) {
            Ok((true, a, b)) => out.push(pass(&canonical, "relation", format!("{a} vs {b}"))),
            Ok((false, a, b)) => out.push(fail(
                &canonical,
                "relation",
                format!("{canonical} violated: {a} vs {b}"),
            )),
            Err(e) => out.push(fail(&canonical, "relation", format!("cannot evaluate: {e}"))),
        }
    }
    out
}

fn pass(subject: &str, constraint: &str, detail: String) -> Verdict {
    Verdict {
        subject: subject.into(),
        constraint: constraint.into(),
        pass: true,
        detail,
    }
}

fn fail(subject: &str, constraint: &str, detail: String) -> Verdict {
    Verdict {
        subject: subject.into(),
        constraint: constraint.into(),
        pass: false,
        detail,
    }
}

fn verdict(subject: &str, constraint: String, ok: bool, detail: String) -> Verdict {
    Verdict {
        subject: subject.into(),
        constraint,
        pass: ok,
        detail,
    }
}

fn check_artifact(spec: &ArtifactSpec, o: &ObservedArtifact, out: &mut Vec<Verdict>) {
    let name = spec.name.as_str();
    if o.kind != spec.kind {
        out.push(fail(
            name,
            "kind",
            format!("expected {:?}, found {:?}", spec.kind, o.kind),
        ));
        return;
    }
    for c in &spec.columns {
        match o.column(&c.name) {
            None => out.push(fail(name, &format!("column:{}:exists", c.name), "column absent".into())),
            Some(oc) => {
                out.push(verdict(
                    name,
                    format!("column:{}:dtype", c.name),
                    c.dtype.accepts(oc.dtype),
                    format!("expected {}, observed {}", c.dtype, oc.dtype),
                ));
                if !c.nullable {
                    out.push(verdict(
                        name,
                        format!("column:{}:nullable", c.name),
                        oc.null_count == 0,
                        format!("{} null(s) in non-nullable column `{}`", oc.null_count, c.name),
                    ));
                }
            }
        }
    }
    if let Some(rule) = &spec.all_columns {
        let bad: Vec<String> = o
            .columns
            .iter()
            .filter(|c| !rule.dtype.accepts(c.dtype))
            .map(|c| format!("{}:{}", c.name, c.dtype))
            .collect();
        out.push(verdict(
            name,
            "all_columns:dtype".into(),
            bad.is_empty(),
            if bad.is_empty() {
                format!("all columns {}", rule.dtype)
            } else {
                format!("expected {} but found {}", rule.dtype, bad.join(", "))
            },
        ));
        if !rule.nullable {
            let nulls: Vec<String> = o
                .columns
                .iter()
                .filter(|c| c.null_count > 0)
                .map(|c| format!("{}={}", c.name, c.null_count))
                .collect();
            let array_nulls = o.null_count.unwrap_or(0);
            out.push(verdict(
                name,
                "all_columns:nullable".into(),
                nulls.is_empty() && array_nulls == 0,
                if nulls.is_empty() && array_nulls == 0 {
                    "no nulls".into()
                } else if nulls.is_empty() {
                    format!("{array_nulls} NaN value(s)")
                } else {
                    format!("nulls in {}", nulls.join(", "))
                },
            ));
        }
    }
    if let Some(shape) = &spec.shape {
        let observed_shape = if spec.kind == ArtifactKind::Table {
            vec![o.row_count.unwrap_or(0), o.columns.len() as u64]
        } else {
            o.shape.clone()
        };
        let ok = shape.len() == observed_shape.len()
            && shape
                .iter()
                .zip(&observed_shape)
                .all(|(want, got)| want.map_or(true, |w| w == *got));
        out.push(verdict(
            name,
            "shape".into(),
            ok,
            format!("expected {}, observed {:?}", fmt_shape(shape), observed_shape),
        ));
    }
    for (key, range) in &spec.value_ranges {
        let (lo, hi) = if key == "*" {
            (o.value_min, o.value_max)
        } else {
            match o.column(key) {
                Some(c) => (c.min, c.max),
                None => {
                    out.push(fail(name, &format!("range:{key}"), "column absent".into()));
                    continue;
                }
            }
        };
        let ok = match (lo, hi) {
            (Some(lo), Some(hi)) => {
                range.min.map_or(true, |m| lo >= m) && range.max.map_or(true, |m| hi <= m)
            }
            // Non-numeric or empty: nothing to violate.
            _ => true,
        };
        out.push(verdict(
            name,
            format!("range:{key}"),
            ok,
            format!("observed [{lo:?}, {hi:?}], allowed [{:?}, {:?}]", range.min, range.max),
        ));
    }
    match spec.kind {
        ArtifactKind::LoaderConfig => {
            out.push(verdict(
                name,
                "loader:batch_size".into(),
                o.batch_size.is_some_and(|b| b > 0),
                format!("batch_size {:?}", o.batch_size),
            ));
            out.push(verdict(
                name,
                "loader:dataset_path".into(),
                o.target_exists == Some(true),
                "declared dataset path must exist".into(),
            ));
        }
        ArtifactKind::FilePath => out.push(verdict(
            name,
            "file_path:exists".into(),
            o.target_exists == Some(true),
            "referenced path must exist".into(),
        )),
        _ => {}
    }
}

fn fmt_shape(shape: &[Option<u64>]) -> String {
    let parts: Vec<String> = shape
        .iter()
        .map(|d| d.map_or("*".to_string(), |v| v.to_string()))
        .collect();
    format!("[{}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn observed_table(rows: u64, cols: &[(&str, Dtype, u64)]) -> ObservedArtifact {
        ObservedArtifact {
            row_count: Some(rows),
            shape: vec![rows, cols.len() as u64],
            columns: cols
                .iter()
                .map(|(n, d, nulls)| ObservedColumn {
                    name: n.to_string(),
                    dtype: *d,
                    null_count: *nulls,
                    min: None,
                    max: None,
                })
                .collect(),
            ..ObservedArtifact::absent(ArtifactKind::Table, ArtifactStatus::Present, None)
        }
    }

    fn contract() -> InterfaceContract {
        InterfaceContract {
            schema_version: SCHEMA_VERSION.into(),
            artifacts: vec![
                ArtifactSpec::table(
                    "train_target",
                    Stage::Preprocessing,
                    vec![ColumnConstraint {
                        name: "y".into(),
                        dtype: DtypeRule::Int,
                        nullable: false,
                    }],
                ),
                ArtifactSpec::table("test_features", Stage::Preprocessing, vec![]),
                ArtifactSpec::table("predictions", Stage::Modeling, vec![]),
            ],
            relations: vec!["predictions.rows == test_features.rows".into()],
            preprocessing_entrypoint: Entrypoint {
                name: "preprocess_data".into(),
                params: vec!["data_dir".into(), "artifacts_dir".into()],
            },
            modeling_entrypoint: Entrypoint {
                name: "train_and_predict".into(),
                params: vec!["artifacts_dir".into()],
            },
            batch_directives: None,
        }
    }

    #[test]
    fn relation_parsing() {
        let r = RowRelation::parse("predictions.rows == test_features.rows").unwrap();
        assert_eq!(r.artifacts(), vec!["predictions", "test_features"]);
        assert_eq!(r.to_string(), "predictions.rows == test_features.rows");
        assert!(RowRelation::parse("a.rows <= 10").is_ok());
        assert!(RowRelation::parse("10 == a.rows").is_err());
        assert!(RowRelation::parse("a.depth == b.rows").is_err());
        assert!(RowRelation::parse("a.rows b.rows").is_err());
    }

    #[test]
    fn validate_flags_bad_relation_and_duplicate() {
        let mut c = contract();
        assert!(c.validate().is_empty(), "{:?}", c.validate());
        c.relations.push("ghost.rows == predictions.rows".into());
        c.artifacts.push(ArtifactSpec::table("predictions", Stage::Modeling, vec![]));
        let v = c.validate();
        assert!(v.iter().any(|m| m.contains("ghost")));
        assert!(v.iter().any(|m| m.contains("declared twice")));
    }

    #[test]
    fn validate_rejects_unbindable_param() {
        let mut c = contract();
        c.modeling_entrypoint.params.push("model".into());
        assert!(c.validate().iter().any(|m| m.contains("not bindable")));
    }

    #[test]
    fn missing_artifact_fails_present() {
        let c = contract();
        let mut obs = BTreeMap::new();
        obs.insert(
            "train_target".into(),
            ObservedArtifact::absent(ArtifactKind::Table, ArtifactStatus::Missing, None),
        );
        let v = check_contract(&c, &obs, |a| a.producer == Stage::Preprocessing);
        assert!(v.iter().any(|v| v.subject == "train_target" && !v.pass && v.detail == "missing"));
        // relation references a modeling artifact, so it is out of scope here
        assert!(v.iter().all(|v| v.constraint != "relation"));
    }

    #[test]
    fn dtype_null_and_relation_verdicts() {
        let c = contract();
        let mut obs = BTreeMap::new();
        obs.insert("train_target".into(), observed_table(4, &[("y", Dtype::Real, 1)]));
        obs.insert("test_features".into(), observed_table(3, &[("x", Dtype::Real, 0)]));
        obs.insert("predictions".into(), observed_table(2, &[("id", Dtype::Int, 0)]));
        let v = check_contract(&c, &obs, |_| true);
        let failed: Vec<_> = v.iter().filter(|v| !v.pass).map(|v| v.constraint.as_str()).collect();
        assert_eq!(failed, vec!["column:y:dtype", "column:y:nullable", "relation"]);
        let report = ContractReport {
            schema_version: SCHEMA_VERSION.into(),
            stage: Stage::Modeling,
            artifacts: obs,
            verdicts: v,
        };
        assert!(!report.passes_for(&c, Stage::Preprocessing));
        assert!(!report.passes_for(&c, Stage::Modeling));
    }

    #[test]
    fn attribution_of_relations() {
        let c = contract();
        assert_eq!(
            attributed_stage(&c, "predictions.rows == test_features.rows"),
            Some(Stage::Modeling)
        );
        assert_eq!(attributed_stage(&c, "train_target"), Some(Stage::Preprocessing));
    }

    #[test]
    fn dtype_rule_widening() {
        assert!(DtypeRule::Real.accepts(Dtype::Int));
        assert!(!DtypeRule::Int.accepts(Dtype::Real));
        assert!(DtypeRule::Categorical.accepts(Dtype::Text));
        assert!(DtypeRule::Any.accepts(Dtype::Datetime));
    }
}
