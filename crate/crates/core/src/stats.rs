//! Value-level helpers shared by the profiler and artifact measurement.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;

use crate::model::{CategoryCount, Dtype, NumericSummary};

const NULL_TOKENS: &[&str] = &["", "na", "n/a", "nan", "null", "none", "nil", "?"];

pub fn is_null(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || NULL_TOKENS.iter().any(|n| t.eq_ignore_ascii_case(n))
}

static ISO_DATETIME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(\d{4})-(\d{2})-(\d{2})([T ](\d{2}):(\d{2})(:(\d{2})(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?$",
    )
    .expect("datetime regex")
});

pub fn is_iso_datetime(s: &str) -> bool {
    let Some(c) = ISO_DATETIME.captures(s.trim()) else { return false };
    let num = |i: usize| c.get(i).and_then(|m| m.as_str().parse::<u32>().ok());
    let (Some(m), Some(d)) = (num(2), num(3)) else { return false };
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
        return false;
    }
    match (num(5), num(6)) {
        (Some(h), Some(mi)) => h < 24 && mi < 60 && num(8).map_or(true, |s| s < 61),
        _ => true,
    }
}

pub fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

pub fn parse_real(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Threshold below which a column counts as low-cardinality (categorical).
pub fn class_threshold(row_count: u64, min: u64, ratio: f64) -> u64 {
    min.max((ratio * row_count as f64).floor() as u64)
}

/// Inference order: int, real, bool, ISO-8601 datetime, then categorical
/// when `distinct <= categorical_max`, otherwise text.
pub fn infer_dtype<'a>(non_null: impl Iterator<Item = &'a str> + Clone, distinct: u64, categorical_max: u64) -> Dtype {
    let mut any = false;
    let (mut int, mut real, mut boolean, mut dt) = (true, true, true, true);
    for v in non_null {
        any = true;
        let t = v.trim();
        if int && t.parse::<i64>().is_err() {
            int = false;
        }
        if real && parse_real(t).is_none() {
            real = false;
        }
        if boolean && parse_bool(t).is_none() {
            boolean = false;
        }
        if dt && !is_iso_datetime(t) {
            dt = false;
        }
        if !(int || real || boolean || dt) {
            break;
        }
    }
    if !any {
        return Dtype::Text;
    }
    if int {
        Dtype::Int
    } else if real {
        Dtype::Real
    } else if boolean {
        Dtype::Bool
    } else if dt {
        Dtype::Datetime
    } else if distinct <= categorical_max {
        Dtype::Categorical
    } else {
        Dtype::Text
    }
}

/// Mean and sample standard deviation; `None` for an empty slice.
pub fn numeric_summary(values: &[f64]) -> Option<NumericSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some(NumericSummary {
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std: var.sqrt(),
    })
}

/// Pearson correlation over paired observations; `None` when undefined.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Value counts sorted by count desc, then value.
pub fn value_counts<'a>(values: impl Iterator<Item = &'a str>) -> Vec<CategoryCount> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let mut out: Vec<CategoryCount> = counts
        .into_iter()
        .map(|(value, count)| CategoryCount {
            value: value.to_string(),
            count,
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.value.cmp(&b.value)));
    out
}

pub fn is_id_like(name: &str) -> bool {
    let n = name.to_ascii_lowercase();
    n == "id" || n.ends_with("_id") || name.ends_with("Id") || name.ends_with("ID") || n == "index"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nulls() {
        for s in ["", " ", "NA", "nan", "NULL", "None"] {
            assert!(is_null(s), "{s:?}");
        }
        assert!(!is_null("0"));
    }

    #[test]
    fn dtype_order() {
        let inf = |vals: &[&str]| infer_dtype(vals.iter().copied(), vals.len() as u64, 20);
        assert_eq!(inf(&["1", "2", "-3"]), Dtype::Int);
        assert_eq!(inf(&["1", "2.5"]), Dtype::Real);
        assert_eq!(inf(&["true", "False"]), Dtype::Bool);
        assert_eq!(inf(&["2024-01-02", "2024-02-03T10:00:00Z"]), Dtype::Datetime);
        assert_eq!(inf(&["a", "b"]), Dtype::Categorical);
        assert_eq!(infer_dtype(["a", "b", "c"].into_iter(), 3, 2), Dtype::Text);
        assert!(!is_iso_datetime("2024-13-01"));
    }

    #[test]
    fn summary_and_correlation() {
        let s = numeric_summary(&[1.0, 2.0, 4.0]).unwrap();
        assert!((s.mean - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!((s.min, s.max), (1.0, 4.0));
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn thresholds_and_ids() {
        assert_eq!(class_threshold(100, 20, 0.05), 20);
        assert_eq!(class_threshold(10_000, 20, 0.05), 500);
        assert!(is_id_like("PassengerId"));
        assert!(is_id_like("id"));
        assert!(!is_id_like("width"));
    }
}
