use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lm::{next_token_log_probs, ModelParams};
use crate::numerics::Real;
use crate::stimgen::EncodedPair;

/// The four conditional surprisals of the 2×2 design, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurprisalQuad {
    /// `S(l_th | wh)`
    pub s_th_wh: f64,
    /// `S(l_th | th)`
    pub s_th_th: f64,
    /// `S(l_wh | wh)`
    pub s_wh_wh: f64,
    /// `S(l_wh | th)`
    pub s_wh_th: f64,
}

impl SurprisalQuad {
    pub fn new(s_th_wh: f64, s_th_th: f64, s_wh_wh: f64, s_wh_th: f64) -> Self {
        SurprisalQuad { s_th_wh, s_th_th, s_wh_wh, s_wh_th }
    }
}

/// `(S(l_th|wh) − S(l_th|th)) − (S(l_wh|wh) − S(l_wh|th))`.
pub fn wh_licensing(q: &SurprisalQuad) -> f64 {
    (q.s_th_wh - q.s_th_th) - (q.s_wh_wh - q.s_wh_th)
}

/// Unweighted mean licensing over a set of quads.
pub fn mean_licensing(quads: &[SurprisalQuad]) -> Result<f64> {
    if quads.is_empty() {
        return Err(LabError::Input("no quads to average".into()));
    }
    Ok(quads.iter().map(wh_licensing).sum::<f64>() / quads.len() as f64)
}

pub fn surprisal_quad<T: Real>(params: &ModelParams<T>, pair: &EncodedPair) -> Result<SurprisalQuad> {
    Ok(surprisal_quads(params, std::slice::from_ref(pair))?[0])
}

/// Quads for many pairs; two forward passes per pair.
pub fn surprisal_quads<T: Real>(params: &ModelParams<T>, pairs: &[EncodedPair]) -> Result<Vec<SurprisalQuad>> {
    let v = params.config.vocab_size;
    for p in pairs {
        if p.l_wh >= v || p.l_th >= v {
            return Err(LabError::Index(format!("label outside vocabulary of {v}")));
        }
    }
    let prefixes: Vec<&[usize]> = pairs.iter().flat_map(|p| [p.wh.as_slice(), p.th.as_slice()]).collect();
    let lps = next_token_log_probs(params, &prefixes)?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (wh, th) = (&lps[2 * i], &lps[2 * i + 1]);
            SurprisalQuad {
                s_th_wh: -wh[p.l_th].as_f64(),
                s_th_th: -th[p.l_th].as_f64(),
                s_wh_wh: -wh[p.l_wh].as_f64(),
                s_wh_th: -th[p.l_wh].as_f64(),
            }
        })
        .collect())
}

/// A prefix with the label it should prefer and the one it should not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledStimulus {
    pub prefix: Vec<usize>,
    pub correct: usize,
    pub mismatched: usize,
}

/// Both members of each pair as stimuli: wh expects `l_wh`, th expects `l_th`.
pub fn pair_stimuli(pairs: &[EncodedPair]) -> Vec<LabeledStimulus> {
    pairs
        .iter()
        .flat_map(|p| {
            [
                LabeledStimulus { prefix: p.wh.clone(), correct: p.l_wh, mismatched: p.l_th },
                LabeledStimulus { prefix: p.th.clone(), correct: p.l_th, mismatched: p.l_wh },
            ]
        })
        .collect()
}

/// Share of `(correct, mismatched)` surprisal pairs where the correct label
/// is less surprising. Ties count one half.
pub fn preference_rate_from_surprisals(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(LabError::Input("preference rate of an empty stimulus set".into()));
    }
    let score: f64 = pairs
        .iter()
        .map(|&(c, m)| match c.partial_cmp(&m) {
            Some(std::cmp::Ordering::Less) => 1.0,
            Some(std::cmp::Ordering::Equal) => 0.5,
            _ => 0.0,
        })
        .sum();
    Ok(score / pairs.len() as f64)
}

pub fn preference_rate<T: Real>(params: &ModelParams<T>, stimuli: &[LabeledStimulus]) -> Result<f64> {
    if stimuli.is_empty() {
        return Err(LabError::Input("preference rate of an empty stimulus set".into()));
    }
    let v = params.config.vocab_size;
    if stimuli.iter().any(|s| s.correct >= v || s.mismatched >= v) {
        return Err(LabError::Index(format!("label outside vocabulary of {v}")));
    }
    let prefixes: Vec<&[usize]> = stimuli.iter().map(|s| s.prefix.as_slice()).collect();
    let lps = next_token_log_probs(params, &prefixes)?;
    let pairs: Vec<(f64, f64)> = stimuli
        .iter()
        .zip(&lps)
        .map(|(s, lp)| (-lp[s.correct].as_f64(), -lp[s.mismatched].as_f64()))
        .collect();
    preference_rate_from_surprisals(&pairs)
}
