use serde::{Deserialize, Serialize};

/// Outcome of a kernel check. `Inconclusive` is a first-class result: the
/// decisive quantity did not clear its error budget by the required factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Trivial,
    Inconclusive,
    NonTrivial,
}

/// Required ratio between a decisive quantity and its error budget.
pub const DECISION_FACTOR: f64 = 2.0;

impl Verdict {
    /// `Trivial` iff `0 < |quantity|` and `|quantity| ≥ DECISION_FACTOR · budget`;
    /// `NonTrivial` only for an exactly vanishing quantity with zero budget.
    pub fn from_margin(quantity: f64, budget: f64) -> Self {
        let q = quantity.abs();
        if !q.is_finite() || !budget.is_finite() {
            Verdict::Inconclusive
        } else if q > 0.0 && q >= DECISION_FACTOR * budget {
            Verdict::Trivial
        } else if q == 0.0 && budget == 0.0 {
            Verdict::NonTrivial
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn is_trivial(self) -> bool {
        self == Verdict::Trivial
    }
}
