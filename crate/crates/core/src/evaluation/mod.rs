//! Validation scoring, track selection, ensembling and score normalization.

mod ensemble;
pub mod metrics;

pub use ensemble::{build_ensemble, Aggregate, EnsembleMember};

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    metric_info, MetricDirection, NormalizationRule, NormalizedScore, TrackRun, TrackStatus,
};
use crate::stats;

/// Maps a raw score into [0, 1]. `failed` or a missing score yields the
/// failure rule. Scores outside the domain of their rule are rejected.
pub fn normalize_score(raw: Option<f64>, rule: NormalizationRule, failed: bool) -> Result<NormalizedScore> {
    let Some(raw) = raw.filter(|_| !failed && rule != NormalizationRule::FailureZero) else {
        return Ok(NormalizedScore::failure());
    };
    NormalizedScore::from_rule(raw, rule).ok_or(Error::NormalizationDomain { raw })
}

/// Normalizes against the registry rule of `metric_id`.
pub fn normalize_for_metric(raw: Option<f64>, metric_id: &str, failed: bool) -> Result<NormalizedScore> {
    let info = metric_info(metric_id)
        .ok_or_else(|| Error::Invalid(format!("metric `{metric_id}` is not in the registry")))?;
    normalize_score(raw, info.rule, failed)
}

/// Mean of the normalized values.
pub fn aps(scores: &[NormalizedScore]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::ApsEmpty);
    }
    Ok(scores.iter().map(NormalizedScore::value).sum::<f64>() / scores.len() as f64)
}

fn better(direction: MetricDirection, a: f64, b: f64) -> bool {
    match direction {
        MetricDirection::LowerBetter => a < b,
        MetricDirection::HigherBetter | MetricDirection::BoundedPm1 => a > b,
    }
}

/// Best validated run by score; ties go to the earlier track kind.
pub fn select_best(runs: &[TrackRun], direction: MetricDirection) -> Result<&TrackRun> {
    let mut best: Option<(&TrackRun, f64)> = None;
    for r in runs {
        let (TrackStatus::Validated, Some(s)) = (r.status(), r.validation_score) else { continue };
        best = match best {
            None => Some((r, s)),
            Some((b, bs)) if better(direction, s, bs) || (s == bs && r.track < b.track) => Some((r, s)),
            keep => keep,
        };
    }
    best.map(|(r, _)| r).ok_or(Error::NoValidPipeline)
}

/// Integral numbers compare equal regardless of spelling (`1`, `1.0`).
pub fn canonical_label(s: &str) -> String {
    let t = s.trim();
    match stats::parse_real(t) {
        Some(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 => format!("{}", v as i64),
        _ => t.to_string(),
    }
}

/// Validation rows joined with the orchestrator's own truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    pub rows: Vec<usize>,
    pub y_true: Vec<String>,
    pub y_pred: Vec<String>,
    /// Class names (canonical) and row-major probabilities, when given.
    pub proba: Option<(Vec<String>, Vec<Vec<f64>>)>,
}

/// Reads `validation_predictions` (`row, y_pred[, p_<class>...]`) and takes
/// the truth for each `row` from `truth`, ignoring any `y_true` column.
pub fn read_validation(path: &Path, truth: &[String]) -> Result<ValidationSet> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::ScoringFailed(format!("validation predictions unreadable: {e}")))?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |n: &str| header.iter().position(|h| h == n);
    let (Some(ri), Some(pi)) = (col("row"), col("y_pred")) else {
        return Err(Error::ScoringFailed(format!(
            "validation predictions need `row` and `y_pred` columns, found [{}]",
            header.join(", ")
        )));
    };
    let prob_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("p_").map(|c| (i, canonical_label(c))))
        .collect();
    let mut seen = BTreeSet::new();
    let mut set = ValidationSet {
        rows: Vec::new(),
        y_true: Vec::new(),
        y_pred: Vec::new(),
        proba: None,
    };
    let mut probs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row: usize = rec
            .get(ri)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::ScoringFailed(format!("bad row index {:?}", rec.get(ri))))?;
        if row >= truth.len() {
            return Err(Error::ScoringFailed(format!("row index {row} outside the {} training rows", truth.len())));
        }
        if !seen.insert(row) {
            return Err(Error::ScoringFailed(format!("row index {row} appears twice")));
        }
        set.rows.push(row);
        set.y_true.push(truth[row].clone());
        set.y_pred.push(rec.get(pi).unwrap_or_default().trim().to_string());
        if !prob_cols.is_empty() {
            let p: Option<Vec<f64>> = prob_cols.iter().map(|(i, _)| rec.get(*i).and_then(stats::parse_real)).collect();
            probs.push(p.ok_or_else(|| Error::ScoringFailed(format!("non-numeric probability in row {row}")))?);
        }
    }
    if set.rows.is_empty() {
        return Err(Error::ScoringFailed("validation predictions are empty".into()));
    }
    if !prob_cols.is_empty() {
        set.proba = Some((prob_cols.into_iter().map(|(_, c)| c).collect(), probs));
    }
    Ok(set)
}

fn reals(v: &[String], what: &str) -> Result<Vec<f64>> {
    v.iter()
        .map(|s| stats::parse_real(s).ok_or_else(|| Error::ScoringFailed(format!("non-numeric {what} `{s}`"))))
        .collect()
}

/// Computes registry metric `metric_id` on a validation set.
pub fn compute_metric(metric_id: &str, set: &ValidationSet) -> Result<f64> {
    let info = metric_info(metric_id).ok_or_else(|| Error::ScoringFailed(format!("unknown metric `{metric_id}`")))?;
    let labels = |v: &[String]| v.iter().map(|s| canonical_label(s)).collect::<Vec<_>>();
    match info.id {
        "accuracy" => metrics::accuracy(&labels(&set.y_true), &labels(&set.y_pred)),
        "f1" => metrics::f1_macro(&labels(&set.y_true), &labels(&set.y_pred)),
        "matthews_corr" => metrics::mcc(&labels(&set.y_true), &labels(&set.y_pred)),
        "mae" => metrics::mae(&reals(&set.y_true, "truth")?, &reals(&set.y_pred, "prediction")?),
        "rmse" => metrics::rmse(&reals(&set.y_true, "truth")?, &reals(&set.y_pred, "prediction")?),
        "quadratic_weighted_kappa" => {
            let round = |v: Vec<f64>| v.into_iter().map(|x| x.round() as i64).collect::<Vec<_>>();
            metrics::qwk(
                &round(reals(&set.y_true, "truth")?),
                &round(reals(&set.y_pred, "prediction")?),
            )
        }
        "logloss" => {
            let (classes, p) = set
                .proba
                .as_ref()
                .ok_or_else(|| Error::ScoringFailed("logloss needs p_<class> columns".into()))?;
            metrics::logloss(&labels(&set.y_true), classes, p)
        }
        "auc" => {
            let truth = labels(&set.y_true);
            match &set.proba {
                Some((classes, p)) => metrics::auc(&truth, classes, p),
                None => {
                    let classes: Vec<String> = truth.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
                    let pred = labels(&set.y_pred);
                    let onehot: Vec<Vec<f64>> = pred
                        .iter()
                        .map(|p| classes.iter().map(|c| if c == p { 1.0 } else { 0.0 }).collect())
                        .collect();
                    metrics::auc(&truth, &classes, &onehot)
                }
            }
        }
        other => Err(Error::ScoringFailed(format!("metric `{other}` has no implementation"))),
    }
}

/// Target column of a training table, in file order.
pub fn read_truth(train: &Path, target: &str) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(crate::perception::delimiter_for(train))
        .flexible(true)
        .from_path(train)?;
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == target)
        .ok_or_else(|| Error::ScoringFailed(format!("target `{target}` not in {}", train.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        out.push(rec?.get(idx).unwrap_or_default().trim().to_string());
    }
    Ok(out)
}

/// Scores a validated run and stores the score on it.
pub fn score_validation(run: &mut TrackRun, metric_id: &str, predictions: &Path, truth: &[String]) -> Result<f64> {
    let set = read_validation(predictions, truth)?;
    let score = compute_metric(metric_id, &set)?;
    if !score.is_finite() {
        return Err(Error::ScoringFailed(format!("{metric_id} is not finite")));
    }
    run.validation_score = Some(score);
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrackKind;
    use proptest::prelude::*;

    fn validated(kind: TrackKind, score: f64) -> TrackRun {
        let mut r = TrackRun::new(kind, String::new(), 0);
        r.validation_score = Some(score);
        r.executions.push(crate::model::ExecutionResult {
            passed: true,
            ..Default::default()
        });
        for s in [TrackStatus::Coding, TrackStatus::Verifying, TrackStatus::Validated] {
            r.transition(s).unwrap();
        }
        r
    }

    #[test]
    fn normalization_anchors() {
        let n = |raw, rule| normalize_score(Some(raw), rule, false).unwrap().value();
        assert_eq!(n(0.0, NormalizationRule::ExpDecay), 1.0);
        assert_eq!(n(0.85, NormalizationRule::Identity), 0.85);
        assert_eq!(n(1.0, NormalizationRule::BoundedAffine), 1.0);
        assert_eq!(n(-1.0, NormalizationRule::BoundedAffine), 0.0);
        assert!((n(0.6931472, NormalizationRule::ExpDecay) - 0.5).abs() < 1e-6);
        assert_eq!(normalize_score(Some(0.9), NormalizationRule::Identity, true).unwrap().value(), 0.0);
        assert!(matches!(
            normalize_score(Some(1.3), NormalizationRule::Identity, false),
            Err(Error::NormalizationDomain { .. })
        ));
    }

    #[test]
    fn aps_cases() {
        let s = |v| normalize_score(Some(v), NormalizationRule::Identity, false).unwrap();
        assert_eq!(aps(&[s(1.0), s(0.0)]).unwrap(), 0.5);
        assert_eq!(aps(&[s(0.3)]).unwrap(), 0.3);
        assert!(matches!(aps(&[]), Err(Error::ApsEmpty)));
    }

    #[test]
    fn selection() {
        let runs = vec![validated(TrackKind::Traditional, 0.8), validated(TrackKind::Pretrained, 0.9)];
        assert_eq!(select_best(&runs, MetricDirection::HigherBetter).unwrap().track, TrackKind::Pretrained);
        let runs = vec![validated(TrackKind::CustomNeural, 0.5), validated(TrackKind::Traditional, 0.3)];
        assert_eq!(select_best(&runs, MetricDirection::LowerBetter).unwrap().track, TrackKind::Traditional);
        let runs = vec![validated(TrackKind::Pretrained, 0.7), validated(TrackKind::Traditional, 0.7)];
        assert_eq!(select_best(&runs, MetricDirection::HigherBetter).unwrap().track, TrackKind::Traditional);
        let failed = TrackRun::new(TrackKind::Traditional, String::new(), 0);
        assert!(matches!(select_best(&[failed], MetricDirection::HigherBetter), Err(Error::NoValidPipeline)));
    }

    #[test]
    fn validation_file_uses_own_truth() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("v.csv");
        std::fs::write(&p, "row,y_true,y_pred,p_0,p_1\n0,9,1,0.2,0.8\n2,9,0.0,0.6,0.4\n").unwrap();
        let truth: Vec<String> = ["1", "0", "1"].iter().map(|s| s.to_string()).collect();
        let set = read_validation(&p, &truth).unwrap();
        assert_eq!(set.y_true, vec!["1", "1"]);
        assert_eq!(compute_metric("accuracy", &set).unwrap(), 0.5);
        assert!(compute_metric("logloss", &set).is_ok());
        std::fs::write(&p, "row,y_pred\n0,1\n0,1\n").unwrap();
        assert!(matches!(read_validation(&p, &truth), Err(Error::ScoringFailed(_))));
        std::fs::write(&p, "row,y_pred\n7,1\n").unwrap();
        assert!(matches!(read_validation(&p, &truth), Err(Error::ScoringFailed(_))));
    }

    proptest! {
        #[test]
        fn normalized_in_unit_interval(raw in -5.0f64..5.0) {
            for rule in [NormalizationRule::Identity, NormalizationRule::ExpDecay, NormalizationRule::BoundedAffine] {
                if let Ok(s) = normalize_score(Some(raw), rule, false) {
                    prop_assert!((0.0..=1.0).contains(&s.value()));
                }
            }
        }

        #[test]
        fn monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let v = |x, r| normalize_score(Some(x), r, false).unwrap().value();
            prop_assert!(v(lo, NormalizationRule::Identity) <= v(hi, NormalizationRule::Identity));
            prop_assert!(v(lo, NormalizationRule::ExpDecay) >= v(hi, NormalizationRule::ExpDecay));
            prop_assert!(v(lo * 2.0 - 1.0, NormalizationRule::BoundedAffine) <= v(hi * 2.0 - 1.0, NormalizationRule::BoundedAffine));
        }

        #[test]
        fn selection_invariant_under_monotone_transform(scores in proptest::collection::vec(0.01f64..10.0, 1..4)) {
            let kinds = [TrackKind::Traditional, TrackKind::Pretrained, TrackKind::CustomNeural];
            let runs: Vec<TrackRun> = scores.iter().zip(kinds).map(|(s, k)| validated(k, *s)).collect();
            let mapped: Vec<TrackRun> = scores.iter().zip(kinds).map(|(s, k)| validated(k, s.ln() * 3.0 + 1.0)).collect();
            let a = select_best(&runs, MetricDirection::HigherBetter).unwrap().track;
            let b = select_best(&mapped, MetricDirection::HigherBetter).unwrap().track;
            prop_assert_eq!(a, b);
        }
    }
}
