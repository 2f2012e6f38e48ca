//! Registry metric implementations.
//!
//! Classification labels are compared as strings. Probability inputs are
//! row-major with one column per entry of `classes`.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Probabilities are clipped to `[EPS, 1 - EPS]` before the log.
pub const LOGLOSS_EPS: f64 = 1e-15;

fn same_len<A, B>(a: &[A], b: &[B]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ScoringFailed(format!("length mismatch: {} truths vs {} predictions", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::ScoringFailed("no validation rows".into()));
    }
    Ok(())
}

pub fn accuracy(y_true: &[String], y_pred: &[String]) -> Result<f64> {
    same_len(y_true, y_pred)?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Macro-averaged F1 over the union of observed labels. A label with no
/// true and no predicted positives cannot occur in the union; a label with
/// zero precision and recall contributes 0.
pub fn f1_macro(y_true: &[String], y_pred: &[String]) -> Result<f64> {
    same_len(y_true, y_pred)?;
    let labels: BTreeSet<&String> = y_true.iter().chain(y_pred).collect();
    let mut total = 0.0;
    for l in &labels {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fneg = 0u64;
        for (t, p) in y_true.iter().zip(y_pred) {
            match (t == *l, p == *l) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fneg;
        if denom > 0 {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(total / labels.len() as f64)
}

/// Multiclass log loss. Each probability row is renormalized after clipping.
pub fn logloss(y_true: &[String], classes: &[String], proba: &[Vec<f64>]) -> Result<f64> {
    same_len(y_true, proba)?;
    let index: BTreeMap<&String, usize> = classes.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut sum = 0.0;
    for (t, row) in y_true.iter().zip(proba) {
        if row.len() != classes.len() {
            return Err(Error::ScoringFailed(format!("probability row has {} values for {} classes", row.len(), classes.len())));
        }
        let Some(&k) = index.get(t) else {
            return Err(Error::ScoringFailed(format!("label `{t}` has no probability column")));
        };
        let clipped: Vec<f64> = row.iter().map(|p| p.clamp(LOGLOSS_EPS, 1.0 - LOGLOSS_EPS)).collect();
        let z: f64 = clipped.iter().sum();
        sum -= (clipped[k] / z).ln();
    }
    Ok(sum / y_true.len() as f64)
}

/// Binary ROC AUC via the rank statistic (ties count one half).
pub fn auc_binary(positive: &[bool], score: &[f64]) -> Result<f64> {
    same_len(positive, score)?;
    let mut idx: Vec<usize> = (0..score.len()).collect();
    idx.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    let mut ranks = vec![0.0; score.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && score[idx[j + 1]] == score[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    let n_pos = positive.iter().filter(|p| **p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::ScoringFailed("AUC needs both classes in the validation split".into()));
    }
    let rank_sum: f64 = positive.iter().zip(&ranks).filter(|(p, _)| **p).map(|(_, r)| r).sum();
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// One-vs-rest macro AUC over the classes present in `y_true`.
pub fn auc(y_true: &[String], classes: &[String], proba: &[Vec<f64>]) -> Result<f64> {
    same_len(y_true, proba)?;
    let present: BTreeSet<&String> = y_true.iter().collect();
    if classes.len() == 2 {
        let pos: Vec<bool> = y_true.iter().map(|t| *t == classes[1]).collect();
        let s: Vec<f64> = proba.iter().map(|r| r[1]).collect();
        return auc_binary(&pos, &s);
    }
    let mut total = 0.0;
    let mut n = 0;
    for (k, c) in classes.iter().enumerate() {
        if !present.contains(c) || present.len() < 2 {
            continue;
        }
        let pos: Vec<bool> = y_true.iter().map(|t| t == c).collect();
        let s: Vec<f64> = proba.iter().map(|r| r[k]).collect();
        total += auc_binary(&pos, &s)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::ScoringFailed("AUC needs at least two classes".into()));
    }
    Ok(total / n as f64)
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    same_len(y_true, y_pred)?;
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y_true.len() as f64)
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    same_len(y_true, y_pred)?;
    let mse = y_true.iter().zip(y_pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y_true.len() as f64;
    Ok(mse.sqrt())
}

/// Quadratic weighted kappa over the integer rating range spanned by both
/// inputs. When expected disagreement is zero (a single rating) the score
/// is 1 for perfect agreement.
pub fn qwk(y_true: &[i64], y_pred: &[i64]) -> Result<f64> {
    same_len(y_true, y_pred)?;
    let lo = *y_true.iter().chain(y_pred).min().expect("non-empty");
    let hi = *y_true.iter().chain(y_pred).max().expect("non-empty");
    let k = (hi - lo + 1) as usize;
    if k > 10_000 {
        return Err(Error::ScoringFailed(format!("rating range {lo}..={hi} too wide for kappa")));
    }
    let n = y_true.len() as f64;
    let mut observed = vec![0.0; k * k];
    let mut hist_t = vec![0.0; k];
    let mut hist_p = vec![0.0; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let (i, j) = ((t - lo) as usize, (p - lo) as usize);
        observed[i * k + j] += 1.0;
        hist_t[i] += 1.0;
        hist_p[j] += 1.0;
    }
    let denom_w = if k > 1 { ((k - 1) * (k - 1)) as f64 } else { 1.0 };
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = ((i as f64) - (j as f64)).powi(2) / denom_w;
            num += w * observed[i * k + j];
            den += w * hist_t[i] * hist_p[j] / n;
        }
    }
    if den == 0.0 {
        return Ok(if num == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(1.0 - num / den)
}

/// Multiclass Matthews correlation; 0 when either marginal is constant.
pub fn mcc(y_true: &[String], y_pred: &[String]) -> Result<f64> {
    same_len(y_true, y_pred)?;
    let labels: Vec<&String> = y_true.iter().chain(y_pred).collect::<BTreeSet<_>>().into_iter().collect();
    let pos = |s: &String| labels.binary_search(&s).expect("label present");
    let k = labels.len();
    let mut t_k = vec![0.0; k];
    let mut p_k = vec![0.0; k];
    let mut c = 0.0;
    for (t, p) in y_true.iter().zip(y_pred) {
        t_k[pos(t)] += 1.0;
        p_k[pos(p)] += 1.0;
        if t == p {
            c += 1.0;
        }
    }
    let s = y_true.len() as f64;
    let tp: f64 = t_k.iter().zip(&p_k).map(|(a, b)| a * b).sum();
    let num = c * s - tp;
    let den = ((s * s - p_k.iter().map(|x| x * x).sum::<f64>()) * (s * s - t_k.iter().map(|x| x * x).sum::<f64>())).sqrt();
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn accuracy_anchors() {
        assert_eq!(accuracy(&s(&["a", "b"]), &s(&["a", "b"])).unwrap(), 1.0);
        assert_eq!(accuracy(&s(&["a", "b", "a", "b"]), &s(&["a", "a", "a", "a"])).unwrap(), 0.5);
        assert!(accuracy(&s(&["a"]), &s(&[])).is_err());
    }

    #[test]
    fn auc_perfect_and_ties() {
        assert_eq!(auc_binary(&[false, true], &[0.1, 0.9]).unwrap(), 1.0);
        assert_eq!(auc_binary(&[false, true], &[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn regression() {
        assert_eq!(mae(&[1.0, 2.0], &[2.0, 2.0]).unwrap(), 0.5);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn qwk_perfect_and_reversed() {
        assert_eq!(qwk(&[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap(), 1.0);
        assert!(qwk(&[0, 1, 2, 3], &[3, 2, 1, 0]).unwrap() < 0.0);
        assert_eq!(qwk(&[2, 2], &[2, 2]).unwrap(), 1.0);
    }

    #[test]
    fn mcc_binary() {
        assert_eq!(mcc(&s(&["a", "b"]), &s(&["a", "b"])).unwrap(), 1.0);
        assert_eq!(mcc(&s(&["a", "b"]), &s(&["b", "a"])).unwrap(), -1.0);
        assert_eq!(mcc(&s(&["a", "b"]), &s(&["a", "a"])).unwrap(), 0.0);
    }
}
