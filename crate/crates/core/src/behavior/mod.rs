//! Behavioural measures over a trained model: the 2×2 surprisal design,
//! licensing interaction, preference rates, correlation and the
//! embedding-based extractability probe.

mod metrics;
mod probe;
mod stats;

pub use metrics::{
    mean_licensing, pair_stimuli, preference_rate, preference_rate_from_surprisals, surprisal_quad,
    surprisal_quads, wh_licensing, LabeledStimulus, SurprisalQuad,
};
pub use probe::{fit_logistic, logistic_loo, EmbeddingTable, LOGISTIC_L2, LOGISTIC_TOL};
pub use stats::{auc, mean_sd, pearson_r, sign_of};
