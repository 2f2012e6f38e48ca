//! Physical measurement of declared artifacts.
//!
//! File formats per kind: tables are comma-delimited with a header row,
//! dense arrays are `.npy` (version 1-3, little-endian numeric dtypes),
//! loader configs are JSON objects and file-path artifacts are a text file
//! holding one path. Relative paths resolve against the artifacts directory.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;

use crate::model::{
    ArtifactKind, ArtifactSpec, ArtifactStatus, Dtype, InterfaceContract, ObservedArtifact,
    ObservedColumn,
};
use crate::stats;

/// Measures every artifact of `contract` selected by `in_scope`.
pub fn measure_all(
    contract: &InterfaceContract,
    artifacts_dir: &Path,
    sample_limit: usize,
    in_scope: impl Fn(&ArtifactSpec) -> bool,
) -> BTreeMap<String, ObservedArtifact> {
    contract
        .artifacts
        .iter()
        .filter(|a| in_scope(a))
        .map(|a| (a.name.clone(), measure_artifact(&artifacts_dir.join(a.file_name()), a.kind, sample_limit)))
        .collect()
}

pub fn measure_artifact(path: &Path, kind: ArtifactKind, sample_limit: usize) -> ObservedArtifact {
    if !path.exists() {
        return ObservedArtifact::absent(kind, ArtifactStatus::Missing, Some(format!("{} not found", file_label(path))));
    }
    let res = match kind {
        ArtifactKind::Table => measure_table(path, sample_limit),
        ArtifactKind::DenseArray => measure_npy(path, sample_limit),
        ArtifactKind::LoaderConfig => measure_loader(path),
        ArtifactKind::FilePath => measure_file_path(path),
    };
    res.unwrap_or_else(|reason| ObservedArtifact::absent(kind, ArtifactStatus::Unreadable, Some(reason)))
}

fn file_label(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn present(kind: ArtifactKind) -> ObservedArtifact {
    ObservedArtifact::absent(kind, ArtifactStatus::Present, None)
}

/// Per-column accumulator: dtype from the first `sample_limit` rows, null
/// counts and numeric bounds from every row.
#[derive(Default)]
struct ColumnAcc {
    sample: Vec<String>,
    nulls: u64,
    min: Option<f64>,
    max: Option<f64>,
}

pub(crate) fn measure_table(path: &Path, sample_limit: usize) -> Result<ObservedArtifact, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| e.to_string())?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut cols: Vec<ColumnAcc> = header.iter().map(|_| ColumnAcc::default()).collect();
    let mut rows = 0u64;
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(format!("row {}: {e}", rows + 1)),
        }
        rows += 1;
        for (i, acc) in cols.iter_mut().enumerate() {
            let v = rec.get(i).unwrap_or("");
            if stats::is_null(v) {
                acc.nulls += 1;
                continue;
            }
            if acc.sample.len() < sample_limit {
                acc.sample.push(v.to_string());
            }
            if let Some(x) = stats::parse_real(v) {
                acc.min = Some(acc.min.map_or(x, |m: f64| m.min(x)));
                acc.max = Some(acc.max.map_or(x, |m: f64| m.max(x)));
            }
        }
    }
    let cat_max = stats::class_threshold(rows, 20, 0.05);
    let columns: Vec<ObservedColumn> = header
        .iter()
        .zip(cols)
        .map(|(name, acc)| {
            let distinct = acc.sample.iter().collect::<std::collections::HashSet<_>>().len() as u64;
            let dtype = stats::infer_dtype(acc.sample.iter().map(String::as_str), distinct, cat_max);
            let numeric = dtype.is_numeric();
            ObservedColumn {
                name: name.clone(),
                dtype,
                null_count: acc.nulls,
                min: if numeric { acc.min } else { None },
                max: if numeric { acc.max } else { None },
            }
        })
        .collect();
    let mut o = present(ArtifactKind::Table);
    o.shape = vec![rows, columns.len() as u64];
    o.row_count = Some(rows);
    o.null_count = Some(columns.iter().map(|c| c.null_count).sum());
    let nums: Vec<&ObservedColumn> = columns.iter().filter(|c| c.min.is_some()).collect();
    o.value_min = nums.iter().filter_map(|c| c.min).reduce(f64::min);
    o.value_max = nums.iter().filter_map(|c| c.max).reduce(f64::max);
    o.columns = columns;
    Ok(o)
}

static NPY_DESCR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"'descr'\s*:\s*'([<>|=]?)([a-zA-Z])(\d*)'"#).expect("descr"));
static NPY_ORDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"'fortran_order'\s*:\s*(True|False)").expect("order"));
static NPY_SHAPE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"'shape'\s*:\s*\(([^)]*)\)").expect("shape"));

pub(crate) struct NpyHeader {
    pub kind: char,
    pub width: usize,
    pub big_endian: bool,
    pub fortran: bool,
    pub shape: Vec<u64>,
    pub data_offset: usize,
}

pub(crate) fn parse_npy_header(bytes: &[u8]) -> Result<NpyHeader, String> {
    if bytes.len() < 10 || &bytes[..6] != b"\x93NUMPY" {
        return Err("not an .npy file (bad magic)".into());
    }
    let major = bytes[6];
    let (len, start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err("truncated .npy header".into());
            }
            (u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize, 12)
        }
        v => return Err(format!("unsupported .npy version {v}")),
    };
    let header = bytes
        .get(start..start + len)
        .ok_or("truncated .npy header")?;
    let header = String::from_utf8_lossy(header);
    let d = NPY_DESCR.captures(&header).ok_or("no descr in .npy header")?;
    let kind = d[2].chars().next().unwrap_or('?');
    let width = d[3].parse().unwrap_or(0);
    let fortran = NPY_ORDER
        .captures(&header)
        .is_some_and(|c| &c[1] == "True");
    let shape_txt = NPY_SHAPE.captures(&header).ok_or("no shape in .npy header")?;
    let shape = shape_txt[1]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.trim_end_matches('L').parse::<u64>().map_err(|e| format!("shape: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NpyHeader {
        kind,
        width,
        big_endian: &d[1] == ">",
        fortran,
        shape,
        data_offset: start + len,
    })
}

fn npy_dtype(kind: char) -> Dtype {
    match kind {
        'f' => Dtype::Real,
        'i' | 'u' => Dtype::Int,
        'b' => Dtype::Bool,
        'M' => Dtype::Datetime,
        _ => Dtype::Text,
    }
}

fn decode(kind: char, width: usize, big: bool, b: &[u8]) -> Option<f64> {
    macro_rules! num {
        ($t:ty) => {{
            let arr = b.try_into().ok()?;
            Some(if big { <$t>::from_be_bytes(arr) } else { <$t>::from_le_bytes(arr) } as f64)
        }};
    }
    match (kind, width) {
        ('f', 4) => num!(f32),
        ('f', 8) => num!(f64),
        ('i', 1) => num!(i8),
        ('i', 2) => num!(i16),
        ('i', 4) => num!(i32),
        ('i', 8) => num!(i64),
        ('u', 1) => num!(u8),
        ('u', 2) => num!(u16),
        ('u', 4) => num!(u32),
        ('u', 8) => num!(u64),
        ('b', 1) => Some(b[0] as f64),
        _ => None,
    }
}

pub(crate) fn measure_npy(path: &Path, sample_limit: usize) -> Result<ObservedArtifact, String> {
    let mut f = std::fs::File::open(path).map_err(|e| e.to_string())?;
    let mut head = vec![0u8; 4096];
    let n = f.read(&mut head).map_err(|e| e.to_string())?;
    head.truncate(n);
    let h = parse_npy_header(&head)?;
    let mut o = present(ArtifactKind::DenseArray);
    o.shape = h.shape.clone();
    o.row_count = h.shape.first().copied().or(Some(1));
    let dtype = npy_dtype(h.kind);
    let numeric_ok = decode(h.kind, h.width, h.big_endian, &vec![0u8; h.width]).is_some();
    if numeric_ok {
        let per_row: u64 = h.shape.iter().skip(1).product();
        let rows = h.shape.first().copied().unwrap_or(1);
        let take_rows = if h.fortran { rows } else { rows.min(sample_limit as u64) };
        let count = (take_rows * per_row) as usize;
        let mut data = head[h.data_offset.min(head.len())..].to_vec();
        let want = count * h.width;
        if data.len() < want {
            let mut rest = Vec::new();
            f.take((want - data.len()) as u64)
                .read_to_end(&mut rest)
                .map_err(|e| e.to_string())?;
            data.extend(rest);
        }
        if data.len() < want {
            return Err(format!("data truncated: expected {want} bytes, found {}", data.len()));
        }
        let (mut lo, mut hi, mut nan) = (f64::INFINITY, f64::NEG_INFINITY, 0u64);
        for chunk in data[..want].chunks_exact(h.width) {
            let Some(v) = decode(h.kind, h.width, h.big_endian, chunk) else { continue };
            if v.is_nan() {
                nan += 1;
            } else {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        o.null_count = Some(nan);
        if lo <= hi {
            o.value_min = Some(lo);
            o.value_max = Some(hi);
        }
    }
    o.columns = vec![ObservedColumn {
        name: "*".into(),
        dtype,
        null_count: o.null_count.unwrap_or(0),
        min: o.value_min,
        max: o.value_max,
    }];
    Ok(o)
}

fn resolve(base: &Path, p: &str) -> std::path::PathBuf {
    let p = Path::new(p.trim());
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn measure_loader(path: &Path) -> Result<ObservedArtifact, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let obj = v.as_object().ok_or("loader config is not a JSON object")?;
    let mut o = present(ArtifactKind::LoaderConfig);
    o.batch_size = obj.get("batch_size").and_then(Value::as_u64);
    let base = path.parent().unwrap_or(Path::new("."));
    let dataset = ["dataset_path", "data_path", "path"]
        .iter()
        .find_map(|k| obj.get(*k).and_then(Value::as_str));
    o.target_exists = Some(dataset.is_some_and(|p| resolve(base, p).exists()));
    if dataset.is_none() {
        o.reason = Some("no dataset_path field".into());
    }
    Ok(o)
}

fn measure_file_path(path: &Path) -> Result<ObservedArtifact, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let target = text.lines().next().unwrap_or("").trim();
    let mut o = present(ArtifactKind::FilePath);
    let base = path.parent().unwrap_or(Path::new("."));
    o.target_exists = Some(!target.is_empty() && resolve(base, target).exists());
    Ok(o)
}

/// Writes a little-endian `<f8` array; used by tests and benches.
pub fn write_npy_f64(path: &Path, shape: &[u64], data: &[f64]) -> std::io::Result<()> {
    let dims: Vec<String> = shape.iter().map(u64::to_string).collect();
    let shape_txt = if dims.len() == 1 { format!("({},)", dims[0]) } else { format!("({})", dims.join(", ")) };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape_txt}, }}");
    let total = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - total % 64) % 64));
    header.push('\n');
    let mut out = Vec::with_capacity(10 + header.len() + data.len() * 8);
    out.extend_from_slice(b"\x93NUMPY\x01\x00");
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_array_shape_and_bounds() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("x.npy");
        write_npy_f64(&p, &[3, 2], &[1.0, 2.0, f64::NAN, 4.0, -1.0, 0.5]).unwrap();
        let o = measure_artifact(&p, ArtifactKind::DenseArray, 100);
        assert_eq!(o.status, ArtifactStatus::Present);
        assert_eq!(o.shape, vec![3, 2]);
        assert_eq!(o.null_count, Some(1));
        assert_eq!((o.value_min, o.value_max), (Some(-1.0), Some(4.0)));
    }

    #[test]
    fn empty_table_has_columns() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        std::fs::write(&p, "a,b\n").unwrap();
        let o = measure_artifact(&p, ArtifactKind::Table, 10);
        assert_eq!(o.row_count, Some(0));
        assert_eq!(o.columns.len(), 2);
    }

    #[test]
    fn table_nulls_counted_over_all_rows() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        std::fs::write(&p, "a,b\n1,x\n2,\n3,y\n,z\n").unwrap();
        let o = measure_artifact(&p, ArtifactKind::Table, 1);
        assert_eq!(o.row_count, Some(4));
        assert_eq!(o.column("a").unwrap().null_count, 1);
        assert_eq!(o.column("b").unwrap().null_count, 1);
        assert_eq!(o.column("a").unwrap().max, Some(3.0));
    }

    #[test]
    fn missing_and_unreadable() {
        let d = tempfile::tempdir().unwrap();
        let o = measure_artifact(&d.path().join("nope.csv"), ArtifactKind::Table, 10);
        assert_eq!(o.status, ArtifactStatus::Missing);
        let p = d.path().join("bad.npy");
        std::fs::write(&p, "not numpy").unwrap();
        let o = measure_artifact(&p, ArtifactKind::DenseArray, 10);
        assert_eq!(o.status, ArtifactStatus::Unreadable);
        assert!(o.reason.unwrap().contains("magic"));
    }

    #[test]
    fn loader_and_path_targets() {
        let d = tempfile::tempdir().unwrap();
        std::fs::write(d.path().join("data.bin"), "x").unwrap();
        let l = d.path().join("loader.json");
        std::fs::write(&l, r#"{"batch_size": 32, "dataset_path": "data.bin"}"#).unwrap();
        let o = measure_artifact(&l, ArtifactKind::LoaderConfig, 10);
        assert_eq!(o.batch_size, Some(32));
        assert_eq!(o.target_exists, Some(true));
        let fp = d.path().join("model.path");
        std::fs::write(&fp, "missing.bin\n").unwrap();
        assert_eq!(measure_artifact(&fp, ArtifactKind::FilePath, 10).target_exists, Some(false));
    }
}
