use pipewright::evaluation::{aps, canonical_label, metrics, normalize_for_metric, normalize_score};
use pipewright::model::NormalizationRule;
use pipewright::par::{self, Exec};
use proptest::prelude::*;

fn labels(max: u8) -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec((0..max).prop_map(|v| format!("c{v}")), 1..60)
}

proptest! {
    #[test]
    fn normalized_scores_stay_in_unit_interval(raw in -1.0f64..1.0, loss in 0.0f64..1e3, failed in any::<bool>()) {
        for (rule, x) in [
            (NormalizationRule::Identity, raw.abs()),
            (NormalizationRule::ExpDecay, loss),
            (NormalizationRule::BoundedAffine, raw),
        ] {
            let v = normalize_score(Some(x), rule, failed).unwrap().value();
            prop_assert!((0.0..=1.0).contains(&v));
            if failed {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn exp_decay_is_monotone(a in 0.0f64..50.0, b in 0.0f64..50.0) {
        let f = |x| normalize_for_metric(Some(x), "rmse", false).unwrap().value();
        if a <= b {
            prop_assert!(f(a) >= f(b));
        }
    }

    #[test]
    fn out_of_domain_scores_are_rejected(x in 1.0001f64..10.0) {
        prop_assert!(normalize_for_metric(Some(x), "accuracy", false).is_err());
        prop_assert!(normalize_for_metric(Some(-x), "quadratic_weighted_kappa", false).is_err());
        prop_assert!(normalize_for_metric(Some(-x), "logloss", false).is_err());
    }

    #[test]
    fn aps_is_the_mean(raws in proptest::collection::vec(0.0f64..1.0, 1..20)) {
        let scores: Vec<_> = raws.iter().map(|&r| normalize_score(Some(r), NormalizationRule::Identity, false).unwrap()).collect();
        let mean = raws.iter().sum::<f64>() / raws.len() as f64;
        prop_assert!((aps(&scores).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn classification_metrics_are_bounded(pair in labels(5).prop_flat_map(|t| { let n = t.len(); (Just(t), proptest::collection::vec((0u8..5).prop_map(|v| format!("c{v}")), n)) })) {
        let (t, p) = pair;
        let acc = metrics::accuracy(&t, &p).unwrap();
        let f1 = metrics::f1_macro(&t, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc) && (0.0..=1.0).contains(&f1));
        prop_assert_eq!(metrics::accuracy(&t, &t).unwrap(), 1.0);
        prop_assert!((metrics::f1_macro(&t, &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_and_rmse_identities(t in proptest::collection::vec(0i64..6, 2..50), noise in proptest::collection::vec(-3i64..3, 50)) {
        let p: Vec<i64> = t.iter().zip(&noise).map(|(a, b)| (a + b).clamp(0, 5)).collect();
        let k = metrics::qwk(&t, &p).unwrap();
        prop_assert!(k <= 1.0 + 1e-12);
        prop_assert!((metrics::qwk(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        let pf: Vec<f64> = p.iter().map(|&v| v as f64).collect();
        prop_assert!(metrics::rmse(&tf, &pf).unwrap() >= 0.0);
        prop_assert_eq!(metrics::rmse(&tf, &tf).unwrap(), 0.0);
        prop_assert!(metrics::mae(&tf, &pf).unwrap() <= metrics::rmse(&tf, &pf).unwrap() + 1e-12);
    }

    #[test]
    fn logloss_is_nonnegative(rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 1..30), seed in 0usize..3) {
        let classes: Vec<String> = (0..3).map(|c| format!("c{c}")).collect();
        let t: Vec<String> = (0..rows.len()).map(|i| classes[(i + seed) % 3].clone()).collect();
        prop_assert!(metrics::logloss(&t, &classes, &rows).unwrap() >= 0.0);
    }

    #[test]
    fn parallel_map_matches_sequential(xs in proptest::collection::vec(any::<i32>(), 0..200)) {
        let f = |x: &i32| (*x as i64).wrapping_mul(31) ^ 7;
        prop_assert_eq!(par::map(Exec::Parallel, &xs, f), par::map(Exec::Sequential, &xs, f));
    }

    #[test]
    fn canonical_label_is_idempotent(s in "[ -~]{0,12}") {
        let once = canonical_label(&s);
        prop_assert_eq!(canonical_label(&once), once);
    }
}
