use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Canonical dtype vocabulary shared by the profiler and artifact measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    Int,
    Real,
    Bool,
    Text,
    Datetime,
    Categorical,
}

impl Dtype {
    pub fn is_numeric(self) -> bool {
        matches!(self, Dtype::Int | Dtype::Real)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::Int => "int",
            Dtype::Real => "real",
            Dtype::Bool => "bool",
            Dtype::Text => "text",
            Dtype::Datetime => "datetime",
            Dtype::Categorical => "categorical",
        }
    }
}

impl std::fmt::Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero for a single value.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub value: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub dtype: Dtype,
    pub null_count: u64,
    pub null_rate: f64,
    pub distinct_count: u64,
    pub sample_values: Vec<String>,
    #[serde(default)]
    pub numeric: Option<NumericSummary>,
    #[serde(default)]
    pub top_categories: Vec<CategoryCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPair {
    pub a: String,
    pub b: String,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableProfile {
    /// Relative to the data root.
    pub file: String,
    /// Exact count from a full scan.
    pub row_count: u64,
    /// Rows held for statistics; never above the configured sample size.
    pub sampled_rows: u64,
    pub malformed_rows: u64,
    pub columns: Vec<ColumnProfile>,
    pub correlation_pairs: Vec<CorrelationPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileManifestEntry {
    pub path: String,
    pub size_bytes: u64,
    pub extension: String,
    #[serde(default)]
    pub records: Option<u64>,
}

/// Empirical profile of a dataset directory.
///
/// `columns`, `row_count` and `correlation_pairs` describe the primary
/// (training) table; every table is listed in `tables`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatures {
    #[serde(default)]
    pub primary_table: Option<String>,
    pub row_count: u64,
    pub columns: Vec<ColumnProfile>,
    pub tables: Vec<TableProfile>,
    pub target_candidates: Vec<String>,
    pub class_distribution: BTreeMap<String, u64>,
    pub correlation_pairs: Vec<CorrelationPair>,
    pub file_manifest: Vec<FileManifestEntry>,
    /// Cap used for `sample_values`, recorded for invariant checks.
    pub sample_values_cap: usize,
}

impl MetaFeatures {
    pub fn is_empty(&self) -> bool {
        self.file_manifest.is_empty()
    }

    pub fn table(&self, file: &str) -> Option<&TableProfile> {
        self.tables.iter().find(|t| t.file == file)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnProfile> {
        self.columns
            .iter()
            .chain(self.tables.iter().flat_map(|t| t.columns.iter()))
            .find(|c| c.name == name)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column(name).is_some()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let all = self
            .columns
            .iter()
            .map(|c| ("primary", c))
            .chain(
                self.tables
                    .iter()
                    .flat_map(|t| t.columns.iter().map(move |c| (t.file.as_str(), c))),
            );
        for (file, c) in all {
            if !(0.0..=1.0).contains(&c.null_rate) {
                out.push(format!("{file}:{} null_rate {} outside [0,1]", c.name, c.null_rate));
            }
            if c.sample_values.len() > self.sample_values_cap {
                out.push(format!(
                    "{file}:{} has {} sample values (cap {})",
                    c.name,
                    c.sample_values.len(),
                    self.sample_values_cap
                ));
            }
        }
        let total: u64 = self.class_distribution.values().sum();
        if total > self.row_count {
            out.push(format!(
                "class distribution total {total} exceeds row count {}",
                self.row_count
            ));
        }
        out
    }
}
