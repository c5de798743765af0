use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConjunctClass {
    Acceptable,
    Unacceptable,
    Graded,
}

impl ConjunctClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ConjunctClass::Acceptable => "Acceptable",
            ConjunctClass::Unacceptable => "Unacceptable",
            ConjunctClass::Graded => "Graded",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Acceptable" => Some(ConjunctClass::Acceptable),
            "Unacceptable" => Some(ConjunctClass::Unacceptable),
            "Graded" => Some(ConjunctClass::Graded),
            _ => None,
        }
    }
}

impl std::fmt::Display for ConjunctClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A coordinated verb phrase `v1 complement conj v2` with its designed
/// extractability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjunctSpec {
    pub id: String,
    /// Past tense.
    pub v1: String,
    /// One or more whitespace-separated tokens.
    pub complement: String,
    pub conj: String,
    /// Past tense, possibly with a trailing preposition.
    pub v2: String,
    pub class: ConjunctClass,
    /// Probability that a wh-sentence with this conjunct ends in a gap.
    pub p_gap: f64,
    /// Likert 1–7 acceptability, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
}

/// Synthetic acceptable classes sit at or above this designed gap rate.
pub const ACCEPTABLE_MIN_P_GAP: f64 = 0.5;

impl ConjunctSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: &str,
        v1: &str,
        complement: &str,
        v2: &str,
        class: ConjunctClass,
        p_gap: f64,
        rating: Option<f64>,
    ) -> Self {
        ConjunctSpec {
            id: id.into(),
            v1: v1.into(),
            complement: complement.into(),
            conj: "and".into(),
            v2: v2.into(),
            class,
            p_gap,
            rating,
        }
    }

    /// All tokens of the conjunct in order.
    pub fn words(&self) -> Vec<&str> {
        [&self.v1, &self.complement, &self.conj, &self.v2]
            .into_iter()
            .flat_map(|s| s.split_whitespace())
            .collect()
    }

    /// Checks the designed-gradient invariants of a synthetic spec.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_gap) {
            return Err(LabError::Spec(format!("{}: p_gap {} outside [0, 1]", self.id, self.p_gap)));
        }
        for (name, s) in [("v1", &self.v1), ("complement", &self.complement), ("conj", &self.conj), ("v2", &self.v2)] {
            if s.split_whitespace().next().is_none() {
                return Err(LabError::Spec(format!("{}: empty {name}", self.id)));
            }
        }
        match self.class {
            ConjunctClass::Unacceptable if self.p_gap != 0.0 => Err(LabError::Spec(format!(
                "{}: unacceptable conjuncts must have p_gap 0",
                self.id
            ))),
            ConjunctClass::Acceptable if self.p_gap < ACCEPTABLE_MIN_P_GAP => Err(LabError::Spec(format!(
                "{}: acceptable conjuncts need p_gap >= {ACCEPTABLE_MIN_P_GAP}",
                self.id
            ))),
            _ => Ok(()),
        }
    }
}

/// The bundled inventory: eight extractable particle-verb conjuncts and
/// eight transitive-verb conjuncts that mirror the reference ratings table,
/// plus eight graded conjuncts spanning intermediate gap rates.
pub fn default_conjuncts() -> Vec<ConjunctSpec> {
    use ConjunctClass::*;
    let rows: [(&str, &str, &str, &str, ConjunctClass, f64, Option<f64>); 24] = [
        ("c01", "looked", "down", "saw", Acceptable, 1.0, Some(6.29)),
        ("c02", "went", "home", "got", Acceptable, 1.0, Some(6.26)),
        ("c03", "woke", "up", "smelled", Acceptable, 0.95, Some(6.16)),
        ("c04", "came", "back", "found", Acceptable, 0.95, Some(6.17)),
        ("c05", "ran", "out", "bought", Acceptable, 0.9, Some(5.89)),
        ("c06", "stood", "up", "grabbed", Acceptable, 0.9, Some(5.79)),
        ("c07", "drove", "off", "sold", Acceptable, 0.9, Some(5.24)),
        ("c08", "sat", "back", "enjoyed", Acceptable, 0.9, Some(5.00)),
        ("c09", "picked", "strawberries", "wrote", Unacceptable, 0.0, Some(1.89)),
        ("c10", "loved", "painting", "joined", Unacceptable, 0.0, Some(2.00)),
        ("c11", "baked", "cookies", "won", Unacceptable, 0.0, Some(2.16)),
        ("c12", "ate", "candy", "developed", Unacceptable, 0.0, Some(2.11)),
        ("c13", "read", "magazines", "ordered", Unacceptable, 0.0, Some(2.11)),
        ("c14", "played", "soccer", "planted", Unacceptable, 0.0, Some(2.22)),
        ("c15", "called", "friends", "painted", Unacceptable, 0.0, Some(2.28)),
        ("c16", "cooked", "dinner", "read", Unacceptable, 0.0, Some(2.76)),
        ("g01", "washed", "dishes", "fixed", Graded, 0.1, None),
        ("g02", "cleaned", "rooms", "watched", Graded, 0.1, None),
        ("g03", "walked", "over", "caught", Graded, 0.25, None),
        ("g04", "headed", "inside", "cooked", Graded, 0.25, None),
        ("g05", "went", "outside", "heard", Graded, 0.5, None),
        ("g06", "walked", "away", "drank", Graded, 0.5, None),
        ("g07", "looked", "over", "picked", Graded, 0.75, None),
        ("g08", "sat", "down", "opened", Graded, 0.75, None),
    ];
    rows.iter()
        .map(|&(id, v1, c, v2, class, p, r)| ConjunctSpec::new(id, v1, c, v2, class, p, r))
        .collect()
}
