//! `split`: turns one labeled table into a benchmark task with a sealed
//! answer key.
//!
//! ```text
//! <out>/task/data/{train.csv, test.csv, sample_submission.csv}
//! <out>/task/description.md      copied when given
//! <out>/sealed/truth.csv         id,target   (dir 0700, file 0600)
//! <out>/manifest.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::evaluation::canonical_label;
use crate::model::to_canonical_json;
use crate::perception::delimiter_for;

pub const TRUTH_FILE: &str = "truth.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_ID: &str = "id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    Stratified,
    Random,
}

#[derive(Debug, Clone)]
pub struct SplitOptions {
    /// Fraction of rows kept for training.
    pub ratio: f64,
    pub seed: u64,
    /// Defaults to the last column.
    pub target: Option<String>,
    /// Defaults to an `id` column when present, else one is added.
    pub id_column: Option<String>,
    pub description: Option<PathBuf>,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            ratio: 0.8,
            seed: 0,
            target: None,
            id_column: None,
            description: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub source: String,
    pub ratio: f64,
    pub seed: u64,
    pub strategy: SplitStrategy,
    pub warnings: Vec<String>,
    pub target: String,
    pub id_column: String,
    pub id_added: bool,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// class → (train, test) counts; empty for non-stratified splits.
    pub class_counts: BTreeMap<String, (usize, usize)>,
}

impl SplitManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).ctx(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Row indices going to training, ascending. Per class (stratified) or over
/// all rows, `round(n * ratio)` rows are drawn by a seeded shuffle.
pub fn split_indices(labels: &[String], ratio: f64, seed: u64, stratify: bool) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    if stratify {
        for (i, l) in labels.iter().enumerate() {
            groups.entry(canonical_label(l)).or_default().push(i);
        }
    } else {
        groups.insert(String::new(), (0..labels.len()).collect());
    }
    let mut train = Vec::new();
    for idx in groups.values_mut() {
        let take = (idx.len() as f64 * ratio).round() as usize;
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..take.min(idx.len())]);
    }
    train.sort_unstable();
    train
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))
}

#[cfg(unix)]
fn restrict(path: &Path, mode: u32) -> Result<()> {
    use std::os::unix::fs::PermissionsExt;
    std::fs::set_permissions(path, std::fs::Permissions::from_mode(mode)).ctx(|| format!("chmod {}", path.display()))
}

#[cfg(not(unix))]
fn restrict(_: &Path, _: u32) -> Result<()> {
    Ok(())
}

pub fn cmd_split(dataset: &Path, opts: &SplitOptions, out: &Path) -> Result<SplitManifest> {
    if !(opts.ratio > 0.0 && opts.ratio < 1.0) {
        return Err(Error::Usage(format!("ratio must be in (0, 1), got {}", opts.ratio)));
    }
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter_for(dataset)).from_path(dataset)?;
    let mut header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    if rows.len() < 2 {
        return Err(Error::Invalid(format!("{} has {} row(s); a split needs at least 2", dataset.display(), rows.len())));
    }
    let target = opts.target.clone().unwrap_or_else(|| header.last().cloned().unwrap_or_default());
    let ti = header
        .iter()
        .position(|h| *h == target)
        .ok_or_else(|| Error::Usage(format!("target `{target}` not in {}", dataset.display())))?;

    let wanted_id = opts.id_column.clone();
    let found = match &wanted_id {
        Some(c) => Some(
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::Usage(format!("id column `{c}` not in {}", dataset.display())))?,
        ),
        None => header.iter().position(|h| h.eq_ignore_ascii_case(DEFAULT_ID)),
    };
    let (ii, ti, id_added) = match found {
        Some(i) => (i, ti, false),
        None => {
            header.insert(0, DEFAULT_ID.into());
            for (n, r) in rows.iter_mut().enumerate() {
                r.insert(0, n.to_string());
            }
            (0, ti + 1, true)
        }
    };
    let id_column = header[ii].clone();
    if ii == ti {
        return Err(Error::Usage("the id column cannot be the target".into()));
    }

    let labels: Vec<String> = rows.iter().map(|r| r.get(ti).cloned().unwrap_or_default()).collect();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for l in &labels {
        *counts.entry(canonical_label(l)).or_default() += 1;
    }
    let mut warnings = Vec::new();
    let singletons: Vec<&String> = counts.iter().filter(|(_, &n)| n == 1).map(|(c, _)| c).collect();
    let strategy = if singletons.is_empty() {
        SplitStrategy::Stratified
    } else {
        let w = format!(
            "class(es) {} have a single row; falling back to a random split",
            singletons.iter().map(|s| format!("`{s}`")).collect::<Vec<_>>().join(", ")
        );
        log::warn!("{w}");
        warnings.push(w);
        SplitStrategy::Random
    };
    let train_idx = split_indices(&labels, opts.ratio, opts.seed, strategy == SplitStrategy::Stratified);
    let mut is_train = vec![false; rows.len()];
    for &i in &train_idx {
        is_train[i] = true;
    }

    let data = out.join("task").join("data");
    let sealed = out.join("sealed");
    for d in [&data, &sealed] {
        std::fs::create_dir_all(d).ctx(|| format!("creating {}", d.display()))?;
    }
    restrict(&sealed, 0o700)?;

    let test_header: Vec<String> = header.iter().enumerate().filter(|(i, _)| *i != ti).map(|(_, h)| h.clone()).collect();
    let drop_target = |r: &Vec<String>| r.iter().enumerate().filter(|(i, _)| *i != ti).map(|(_, v)| v.clone()).collect();
    write_csv(&data.join("train.csv"), &header, rows.iter().zip(&is_train).filter(|(_, &t)| t).map(|(r, _)| r.clone()))?;
    write_csv(&data.join("test.csv"), &test_header, rows.iter().zip(&is_train).filter(|(_, &t)| !t).map(|(r, _)| drop_target(r)))?;

    let placeholder = train_idx.first().map(|&i| labels[i].clone()).unwrap_or_default();
    let sub_header = vec![id_column.clone(), target.clone()];
    write_csv(
        &data.join("sample_submission.csv"),
        &sub_header,
        rows.iter().zip(&is_train).filter(|(_, &t)| !t).map(|(r, _)| vec![r[ii].clone(), placeholder.clone()]),
    )?;
    let truth = sealed.join(TRUTH_FILE);
    write_csv(
        &truth,
        &sub_header,
        rows.iter().zip(&is_train).filter(|(_, &t)| !t).map(|(r, _)| vec![r[ii].clone(), r[ti].clone()]),
    )?;
    restrict(&truth, 0o600)?;
    if let Some(d) = &opts.description {
        std::fs::copy(d, out.join("task").join("description.md")).ctx(|| format!("copying {}", d.display()))?;
    }

    let mut class_counts = BTreeMap::new();
    if strategy == SplitStrategy::Stratified {
        for (i, l) in labels.iter().enumerate() {
            let e: &mut (usize, usize) = class_counts.entry(canonical_label(l)).or_default();
            if is_train[i] {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    let ids = |want: bool| -> Vec<String> {
        rows.iter().zip(&is_train).filter(|(_, &t)| t == want).map(|(r, _)| r[ii].clone()).collect()
    };
    let manifest = SplitManifest {
        source: dataset.display().to_string(),
        ratio: opts.ratio,
        seed: opts.seed,
        strategy,
        warnings,
        target,
        id_column,
        id_added,
        train_ids: ids(true),
        test_ids: ids(false),
        class_counts,
    };
    let mp = out.join(MANIFEST_FILE);
    std::fs::write(&mp, to_canonical_json(&manifest)?).ctx(|| format!("writing {}", mp.display()))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn per_class_sizes(counts in proptest::collection::vec(2usize..40, 1..6), seed in any::<u64>(), ratio in 0.1f64..0.9) {
            let labels: Vec<String> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(format!("c{c}"), n)).collect();
            let train = split_indices(&labels, ratio, seed, true);
            prop_assert!(train.windows(2).all(|w| w[0] < w[1]));
            for (c, &n) in counts.iter().enumerate() {
                let got = train.iter().filter(|&&i| labels[i] == format!("c{c}")).count();
                prop_assert_eq!(got, (n as f64 * ratio).round() as usize);
            }
            prop_assert_eq!(train, split_indices(&labels, ratio, seed, true));
        }
    }

    #[test]
    fn singleton_class_falls_back() {
        let d = tempfile::tempdir().unwrap();
        let src = d.path().join("all.csv");
        let mut text = String::from("x,label\n");
        for i in 0..9 {
            text.push_str(&format!("{i},{}\n", if i == 0 { "rare" } else { "common" }));
        }
        std::fs::write(&src, text).unwrap();
        let m = cmd_split(&src, &SplitOptions::default(), &d.path().join("out")).unwrap();
        assert_eq!(m.strategy, SplitStrategy::Random);
        assert_eq!(m.warnings.len(), 1);
        assert!(m.id_added);
        assert_eq!(m.train_ids.len() + m.test_ids.len(), 9);
        let test = std::fs::read_to_string(d.path().join("out/task/data/test.csv")).unwrap();
        assert_eq!(test.lines().next(), Some("id,x"));
    }

    #[test]
    fn bad_ratio_is_usage() {
        let d = tempfile::tempdir().unwrap();
        let opts = SplitOptions { ratio: 1.0, ..Default::default() };
        assert_eq!(cmd_split(&d.path().join("x.csv"), &opts, d.path()).unwrap_err().code(), "USAGE");
    }
}
