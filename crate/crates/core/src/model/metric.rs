use super::score::NormalizationRule;
use super::task::MetricDirection;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricInfo {
    pub id: &'static str,
    pub direction: MetricDirection,
    pub rule: NormalizationRule,
}

const fn entry(id: &'static str, direction: MetricDirection, rule: NormalizationRule) -> MetricInfo {
    MetricInfo {
        id,
        direction,
        rule,
    }
}

pub static METRIC_REGISTRY: &[MetricInfo] = &[
    entry("accuracy", MetricDirection::HigherBetter, NormalizationRule::Identity),
    entry("f1", MetricDirection::HigherBetter, NormalizationRule::Identity),
    entry("auc", MetricDirection::HigherBetter, NormalizationRule::Identity),
    entry("logloss", MetricDirection::LowerBetter, NormalizationRule::ExpDecay),
    entry("mae", MetricDirection::LowerBetter, NormalizationRule::ExpDecay),
    entry("rmse", MetricDirection::LowerBetter, NormalizationRule::ExpDecay),
    entry(
        "quadratic_weighted_kappa",
        MetricDirection::BoundedPm1,
        NormalizationRule::BoundedAffine,
    ),
    entry(
        "matthews_corr",
        MetricDirection::BoundedPm1,
        NormalizationRule::BoundedAffine,
    ),
];

/// Case-insensitive lookup; a few common spellings are accepted as aliases.
pub fn metric_info(id: &str) -> Option<&'static MetricInfo> {
    let norm = id.trim().to_ascii_lowercase().replace(['-', ' '], "_");
    let canonical = match norm.as_str() {
        "log_loss" | "logloss" | "cross_entropy" => "logloss",
        "roc_auc" | "auc" | "auroc" => "auc",
        "f1" | "f1_score" | "macro_f1" => "f1",
        "qwk" | "kappa" | "quadratic_weighted_kappa" => "quadratic_weighted_kappa",
        "mcc" | "matthews_corr" | "matthews_correlation" => "matthews_corr",
        other => other,
    };
    METRIC_REGISTRY.iter().find(|m| m.id == canonical)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_classes() {
        for id in ["accuracy", "f1", "auc"] {
            assert_eq!(metric_info(id).unwrap().rule, NormalizationRule::Identity);
        }
        for id in ["logloss", "mae", "rmse"] {
            assert_eq!(metric_info(id).unwrap().rule, NormalizationRule::ExpDecay);
        }
        for id in ["quadratic_weighted_kappa", "matthews_corr"] {
            assert_eq!(metric_info(id).unwrap().rule, NormalizationRule::BoundedAffine);
        }
        assert_eq!(metric_info("LogLoss").unwrap().id, "logloss");
        assert!(metric_info("bleu").is_none());
    }
}
