use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationRule {
    Identity,
    ExpDecay,
    BoundedAffine,
    FailureZero,
}

impl NormalizationRule {
    /// Applies the rule; `FailureZero` ignores its input.
    pub fn apply(self, raw: f64) -> f64 {
        match self {
            NormalizationRule::Identity => raw,
            NormalizationRule::ExpDecay => (-raw).exp(),
            NormalizationRule::BoundedAffine => (raw + 1.0) / 2.0,
            NormalizationRule::FailureZero => 0.0,
        }
    }
}

/// A score mapped into [0, 1] together with how it got there.
///
/// Fields are private so every instance satisfies the rule/value invariant;
/// build through [`crate::evaluation::normalize_score`] or [`NormalizedScore::failure`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizedScore {
    raw: Option<f64>,
    rule: NormalizationRule,
    value: f64,
}

impl NormalizedScore {
    pub fn failure() -> Self {
        NormalizedScore {
            raw: None,
            rule: NormalizationRule::FailureZero,
            value: 0.0,
        }
    }

    /// `None` when the rule would leave [0, 1] or `raw` is not finite.
    pub(crate) fn from_rule(raw: f64, rule: NormalizationRule) -> Option<Self> {
        if rule == NormalizationRule::FailureZero {
            return Some(Self::failure());
        }
        if !raw.is_finite() {
            return None;
        }
        let value = rule.apply(raw);
        if !(0.0..=1.0).contains(&value) {
            return None;
        }
        Some(NormalizedScore {
            raw: Some(raw),
            rule,
            value,
        })
    }

    pub fn raw(&self) -> Option<f64> {
        self.raw
    }

    pub fn rule(&self) -> NormalizationRule {
        self.rule
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_failure(&self) -> bool {
        self.rule == NormalizationRule::FailureZero
    }
}

#[derive(Deserialize)]
struct RawNormalizedScore {
    raw: Option<f64>,
    rule: NormalizationRule,
    value: f64,
}

impl<'de> Deserialize<'de> for NormalizedScore {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = RawNormalizedScore::deserialize(d)?;
        let built = match (r.rule, r.raw) {
            (NormalizationRule::FailureZero, None) => Some(NormalizedScore::failure()),
            (NormalizationRule::FailureZero, Some(_)) => None,
            (rule, Some(raw)) => NormalizedScore::from_rule(raw, rule),
            (_, None) => None,
        };
        match built {
            Some(s) if (s.value - r.value).abs() <= 1e-12 => Ok(s),
            _ => Err(D::Error::custom(format!(
                "normalized score {{raw: {:?}, rule: {:?}, value: {}}} violates its rule",
                r.raw, r.rule, r.value
            ))),
        }
    }
}
