use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::model::{
    ColumnProfile, CorrelationPair, Dtype, FileManifestEntry, MetaFeatures, TableProfile,
};
use crate::par::{self, Exec};
use crate::stats;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub sample_rows: usize,
    pub seed: u64,
    pub sample_values_cap: usize,
    pub top_k_categories: usize,
    pub top_correlations: usize,
    pub class_threshold_min: u64,
    pub class_threshold_ratio: f64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            sample_rows: 50_000,
            seed: 0,
            sample_values_cap: 10,
            top_k_categories: 10,
            top_correlations: 20,
            class_threshold_min: 20,
            class_threshold_ratio: 0.05,
            exec: Exec::Parallel,
        }
    }
}

const TABULAR: &[&str] = &["csv", "tsv"];
const LINE_RECORDS: &[&str] = &["jsonl", "txt", "ndjson"];

fn list_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .ctx(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        let hidden = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if hidden {
            continue;
        }
        if p.is_dir() {
            list_files(root, &p, out)?;
        } else if p.is_file() {
            out.push(p);
        }
    }
    Ok(())
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn extension(p: &Path) -> String {
    p.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

/// Profiles every file under `data_root`. Tabular files get full column
/// statistics over a seeded reservoir sample of at most `sample_rows` rows;
/// row counts are always exact. Other files only get manifest entries.
pub fn profile_dataset(data_root: &Path, opts: &ProfileOptions) -> Result<MetaFeatures> {
    if opts.sample_rows == 0 {
        return Err(Error::Invalid("sample_rows must be > 0".into()));
    }
    let mut files = Vec::new();
    list_files(data_root, data_root, &mut files)?;
    let readable: Vec<PathBuf> = files
        .into_iter()
        .filter(|p| File::open(p).is_ok())
        .collect();
    if readable.is_empty() {
        return Err(Error::EmptyDataset(data_root.to_path_buf()));
    }

    let results: Vec<Result<(FileManifestEntry, Option<TableProfile>)>> =
        par::map(opts.exec, &readable, |p| profile_file(data_root, p, opts));
    let mut manifest = Vec::new();
    let mut tables = Vec::new();
    for r in results {
        let (entry, table) = r?;
        manifest.push(entry);
        tables.extend(table);
    }

    let primary = choose_primary(&tables);
    let (columns, row_count, correlation_pairs) = match primary.and_then(|f| tables.iter().find(|t| &t.file == f)) {
        Some(t) => (t.columns.clone(), t.row_count, t.correlation_pairs.clone()),
        None => (Vec::new(), 0, Vec::new()),
    };
    let target_candidates = rank_target_candidates(&tables, primary, opts);
    let class_distribution = match (primary, target_candidates.first()) {
        (Some(file), Some(target)) => class_distribution(data_root, file, target, &tables, opts)?,
        _ => BTreeMap::new(),
    };

    Ok(MetaFeatures {
        primary_table: primary.cloned(),
        row_count,
        columns,
        tables,
        target_candidates,
        class_distribution,
        correlation_pairs,
        file_manifest: manifest,
        sample_values_cap: opts.sample_values_cap,
    })
}

fn profile_file(root: &Path, p: &Path, opts: &ProfileOptions) -> Result<(FileManifestEntry, Option<TableProfile>)> {
    let ext = extension(p);
    let size = std::fs::metadata(p).map(|m| m.len()).unwrap_or(0);
    let rel = relative(root, p);
    let (records, table) = if TABULAR.contains(&ext.as_str()) {
        let t = profile_table(p, &rel, opts)?;
        (Some(t.row_count), Some(t))
    } else if LINE_RECORDS.contains(&ext.as_str()) {
        let f = File::open(p).ctx(|| format!("opening {}", p.display()))?;
        (Some(BufReader::new(f).lines().count() as u64), None)
    } else {
        (None, None)
    };
    Ok((
        FileManifestEntry {
            path: rel,
            size_bytes: size,
            extension: ext,
            records,
        },
        table,
    ))
}

/// Fixed-capacity seeded reservoir (Algorithm R).
pub(crate) struct Reservoir<T> {
    cap: usize,
    seen: u64,
    items: Vec<(u64, T)>,
    rng: ChaCha8Rng,
    peak: usize,
}

impl<T> Reservoir<T> {
    pub(crate) fn new(cap: usize, seed: u64) -> Self {
        Reservoir {
            cap,
            seen: 0,
            items: Vec::with_capacity(cap.min(4096)),
            rng: ChaCha8Rng::seed_from_u64(seed),
            peak: 0,
        }
    }

    pub(crate) fn offer(&mut self, item: T) {
        let idx = self.seen;
        self.seen += 1;
        if self.items.len() < self.cap {
            self.items.push((idx, item));
        } else {
            let j = self.rng.random_range(0..self.seen);
            if (j as usize) < self.cap {
                self.items[j as usize] = (idx, item);
            }
        }
        self.peak = self.peak.max(self.items.len());
    }

    /// Items in original stream order.
    pub(crate) fn into_ordered(mut self) -> (Vec<T>, usize) {
        self.items.sort_by_key(|(i, _)| *i);
        let peak = self.peak;
        (self.items.into_iter().map(|(_, t)| t).collect(), peak)
    }
}

pub(crate) fn delimiter_for(p: &Path) -> u8 {
    if extension(p) == "tsv" {
        b'\t'
    } else {
        b','
    }
}

/// Reads a delimited file: header, exact record count, malformed count and a
/// reservoir of at most `cap` well-formed rows.
pub(crate) struct TableSample {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub row_count: u64,
    pub malformed: u64,
    pub peak_held: usize,
}

pub(crate) fn sample_table(p: &Path, cap: usize, seed: u64) -> Result<TableSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter_for(p))
        .has_headers(true)
        .flexible(true)
        .from_path(p)?;
    let header: Vec<String> = rdr
        .byte_headers()?
        .iter()
        .map(|h| String::from_utf8_lossy(h).trim().to_string())
        .collect();
    let mut res = Reservoir::new(cap, seed);
    let mut row_count = 0u64;
    let mut malformed = 0u64;
    let mut rec = csv::ByteRecord::new();
    loop {
        match rdr.read_byte_record(&mut rec) {
            Ok(true) => {
                row_count += 1;
                if rec.len() != header.len() {
                    malformed += 1;
                    continue;
                }
                res.offer(
                    rec.iter()
                        .map(|f| String::from_utf8_lossy(f).into_owned())
                        .collect::<Vec<String>>(),
                );
            }
            Ok(false) => break,
            Err(_) => {
                row_count += 1;
                malformed += 1;
            }
        }
    }
    let (rows, peak_held) = res.into_ordered();
    Ok(TableSample {
        header,
        rows,
        row_count,
        malformed,
        peak_held,
    })
}

fn profile_table(p: &Path, rel: &str, opts: &ProfileOptions) -> Result<TableProfile> {
    let sample = sample_table(p, opts.sample_rows, opts.seed)?;
    let n = sample.rows.len() as u64;
    let cat_max = stats::class_threshold(sample.row_count, opts.class_threshold_min, opts.class_threshold_ratio);
    let col_idx: Vec<usize> = (0..sample.header.len()).collect();
    let columns: Vec<ColumnProfile> = par::map(opts.exec, &col_idx, |&i| {
        profile_column(&sample.header[i], sample.rows.iter().map(|r| r[i].as_str()), n, cat_max, opts)
    });
    let correlation_pairs = correlations(&sample, &columns, opts);
    Ok(TableProfile {
        file: rel.to_string(),
        row_count: sample.row_count,
        sampled_rows: sample.peak_held as u64,
        malformed_rows: sample.malformed,
        columns,
        correlation_pairs,
    })
}

fn profile_column<'a>(
    name: &str,
    values: impl Iterator<Item = &'a str> + Clone,
    n: u64,
    cat_max: u64,
    opts: &ProfileOptions,
) -> ColumnProfile {
    let non_null: Vec<&str> = values.filter(|v| !stats::is_null(v)).collect();
    let null_count = n - non_null.len() as u64;
    let distinct: HashSet<&str> = non_null.iter().copied().collect();
    let distinct_count = distinct.len() as u64;
    let dtype = stats::infer_dtype(non_null.iter().copied(), distinct_count, cat_max);

    let mut sample_values = Vec::new();
    let mut seen = HashSet::new();
    for v in &non_null {
        if sample_values.len() >= opts.sample_values_cap {
            break;
        }
        if seen.insert(*v) {
            sample_values.push(v.to_string());
        }
    }
    let numeric = if dtype.is_numeric() {
        let vals: Vec<f64> = non_null.iter().filter_map(|v| stats::parse_real(v)).collect();
        stats::numeric_summary(&vals)
    } else {
        None
    };
    let top_categories = if !dtype.is_numeric() || distinct_count <= cat_max {
        let mut c = stats::value_counts(non_null.iter().copied());
        c.truncate(opts.top_k_categories);
        c
    } else {
        Vec::new()
    };
    ColumnProfile {
        name: name.to_string(),
        dtype,
        null_count,
        null_rate: if n == 0 { 0.0 } else { null_count as f64 / n as f64 },
        distinct_count,
        sample_values,
        numeric,
        top_categories,
    }
}

fn correlations(sample: &TableSample, columns: &[ColumnProfile], opts: &ProfileOptions) -> Vec<CorrelationPair> {
    let numeric: Vec<usize> = columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.dtype.is_numeric())
        .map(|(i, _)| i)
        .collect();
    let mut pairs = Vec::new();
    for (a_pos, &a) in numeric.iter().enumerate() {
        for &b in &numeric[a_pos + 1..] {
            pairs.push((a, b));
        }
    }
    let mut out: Vec<CorrelationPair> = par::map(opts.exec, &pairs, |&(a, b)| {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in &sample.rows {
            if let (Some(x), Some(y)) = (stats::parse_real(&r[a]), stats::parse_real(&r[b])) {
                xs.push(x);
                ys.push(y);
            }
        }
        stats::pearson(&xs, &ys).map(|r| CorrelationPair {
            a: columns[a].name.clone(),
            b: columns[b].name.clone(),
            r,
        })
    })
    .into_iter()
    .flatten()
    .collect();
    out.sort_by(|x, y| {
        y.r.abs()
            .total_cmp(&x.r.abs())
            .then_with(|| x.a.cmp(&y.a))
            .then_with(|| x.b.cmp(&y.b))
    });
    out.truncate(opts.top_correlations);
    out
}

pub(crate) fn file_stem_lower(file: &str) -> String {
    Path::new(file)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

pub(crate) fn looks_like_submission(file: &str) -> bool {
    file_stem_lower(file).contains("submission")
}

pub(crate) fn looks_like_train(file: &str) -> bool {
    file_stem_lower(file).contains("train")
}

pub(crate) fn looks_like_test(file: &str) -> bool {
    let s = file_stem_lower(file);
    s.contains("test") && !looks_like_submission(file)
}

/// The training table: a file named like `train*`, else the largest table
/// that is neither a test nor a submission file.
fn choose_primary(tables: &[TableProfile]) -> Option<&String> {
    tables
        .iter()
        .find(|t| looks_like_train(&t.file) && !looks_like_submission(&t.file))
        .or_else(|| {
            tables
                .iter()
                .filter(|t| !looks_like_submission(&t.file) && !looks_like_test(&t.file))
                .max_by_key(|t| t.row_count)
        })
        .map(|t| &t.file)
}

const TARGET_NAMES: &[&str] = &[
    "target", "label", "labels", "y", "class", "outcome", "response", "survived", "price",
];

/// Ranks columns of the primary table by how likely they are the target.
///
/// With a test table present only columns absent from it qualify. Otherwise
/// sample-submission prediction columns and conventional names qualify.
/// Ties break on name signal, then low cardinality, then column order.
fn rank_target_candidates(tables: &[TableProfile], primary: Option<&String>, opts: &ProfileOptions) -> Vec<String> {
    let Some(primary) = primary.and_then(|f| tables.iter().find(|t| &t.file == f)) else {
        return Vec::new();
    };
    let test = tables.iter().find(|t| looks_like_test(&t.file) && t.file != primary.file);
    let submission_cols: HashSet<&str> = tables
        .iter()
        .filter(|t| looks_like_submission(&t.file))
        .flat_map(|t| t.columns.iter().skip(1).map(|c| c.name.as_str()))
        .collect();
    let cat_max = stats::class_threshold(primary.row_count, opts.class_threshold_min, opts.class_threshold_ratio);

    let mut scored: Vec<(u32, usize, &str)> = Vec::new();
    for (pos, c) in primary.columns.iter().enumerate() {
        if stats::is_id_like(&c.name) {
            continue;
        }
        let lname = c.name.to_ascii_lowercase();
        let name_signal = TARGET_NAMES.contains(&lname.as_str())
            || lname.contains("target")
            || lname.contains("label");
        let in_submission = submission_cols.contains(c.name.as_str());
        let qualifies = match test {
            Some(t) => !t.columns.iter().any(|tc| tc.name == c.name),
            None => name_signal || in_submission,
        };
        if !qualifies {
            continue;
        }
        let mut score = 0u32;
        if in_submission {
            score += 4;
        }
        if name_signal {
            score += 2;
        }
        if c.distinct_count <= cat_max {
            score += 1;
        }
        scored.push((score, pos, c.name.as_str()));
    }
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, _, n)| n.to_string()).collect()
}

fn class_distribution(
    root: &Path,
    file: &str,
    target: &str,
    tables: &[TableProfile],
    opts: &ProfileOptions,
) -> Result<BTreeMap<String, u64>> {
    let Some(t) = tables.iter().find(|t| t.file == file) else {
        return Ok(BTreeMap::new());
    };
    let Some(col) = t.columns.iter().find(|c| c.name == target) else {
        return Ok(BTreeMap::new());
    };
    let cat_max = stats::class_threshold(t.row_count, opts.class_threshold_min, opts.class_threshold_ratio);
    if col.dtype.is_numeric() && col.distinct_count > cat_max || col.dtype == Dtype::Text {
        return Ok(BTreeMap::new());
    }
    // Same seed and cap as the profile pass, so this is the same sample.
    let sample = sample_table(&root.join(file), opts.sample_rows, opts.seed)?;
    let Some(idx) = sample.header.iter().position(|h| h == target) else {
        return Ok(BTreeMap::new());
    };
    let mut out = BTreeMap::new();
    for r in &sample.rows {
        let v = r[idx].trim();
        if !stats::is_null(v) {
            *out.entry(v.to_string()).or_insert(0u64) += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn tiny_table_exhaustive() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "data.csv", "x,y\n1,a\n2,a\n3,b\n4,b\n");
        let f = profile_dataset(d.path(), &ProfileOptions::default()).unwrap();
        let y = f.columns.iter().find(|c| c.name == "y").unwrap();
        assert_eq!(y.distinct_count, 2);
        assert_eq!(y.null_rate, 0.0);
        assert_eq!(f.target_candidates, vec!["y"]);
        let want: BTreeMap<String, u64> = [("a".to_string(), 2), ("b".to_string(), 2)].into();
        assert_eq!(f.class_distribution, want);
        assert!(f.validate().is_empty());
    }

    #[test]
    fn null_rate_and_mean() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "t.csv", "v\n1\n2\n\n4\n");
        let f = profile_dataset(d.path(), &ProfileOptions::default()).unwrap();
        let v = &f.columns[0];
        // a blank line is skipped by the csv reader, so use an explicit NA
        assert_eq!(f.row_count, 3);
        assert_eq!(v.null_count, 0);
        write(d.path(), "t.csv", "v\n1\n2\nNA\n4\n");
        let f = profile_dataset(d.path(), &ProfileOptions::default()).unwrap();
        let v = &f.columns[0];
        assert_eq!(v.null_rate, 0.25);
        assert!((v.numeric.as_ref().unwrap().mean - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn images_get_manifest_only() {
        let d = tempfile::tempdir().unwrap();
        for i in 0..3 {
            write(d.path(), &format!("img{i}.png"), "\u{89}PNG");
        }
        write(d.path(), "labels.csv", "file,label\nimg0.png,cat\n");
        let f = profile_dataset(d.path(), &ProfileOptions::default()).unwrap();
        assert_eq!(f.file_manifest.len(), 4);
        assert_eq!(f.tables.len(), 1);
        assert!(f.file_manifest.iter().filter(|e| e.extension == "png").all(|e| e.records.is_none()));
    }

    #[test]
    fn empty_dir_is_error() {
        let d = tempfile::tempdir().unwrap();
        assert!(matches!(
            profile_dataset(d.path(), &ProfileOptions::default()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn malformed_rows_are_counted() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "t.csv", "a,b\n1,2\n3\n4,5,6\n7,8\n");
        let f = profile_dataset(d.path(), &ProfileOptions::default()).unwrap();
        assert_eq!(f.tables[0].malformed_rows, 2);
        assert_eq!(f.tables[0].row_count, 4);
        assert_eq!(f.tables[0].sampled_rows, 2);
    }

    #[test]
    fn reservoir_never_exceeds_cap_and_is_seeded() {
        let d = tempfile::tempdir().unwrap();
        let mut body = String::from("a,b\n");
        for i in 0..5000 {
            body.push_str(&format!("{i},{}\n", i % 7));
        }
        write(d.path(), "big.csv", &body);
        let opts = ProfileOptions {
            sample_rows: 100,
            ..Default::default()
        };
        let f1 = profile_dataset(d.path(), &opts).unwrap();
        let f2 = profile_dataset(d.path(), &ProfileOptions { exec: Exec::Sequential, ..opts.clone() }).unwrap();
        assert_eq!(f1.row_count, 5000);
        assert_eq!(f1.tables[0].sampled_rows, 100);
        assert_eq!(f1, f2);
    }

    #[test]
    fn train_test_difference_ranks_target() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "train.csv", "id,f,label\n1,0.5,x\n2,0.1,y\n3,0.3,z\n");
        write(d.path(), "test.csv", "id,f\n4,0.2\n");
        let f = profile_dataset(d.path(), &ProfileOptions::default()).unwrap();
        assert_eq!(f.primary_table.as_deref(), Some("train.csv"));
        assert_eq!(f.target_candidates, vec!["label"]);
    }
}
