//! Decoder-only transformer with hook points, training, scoring and
//! checkpoints.

pub mod checkpoint;
mod config;
pub mod forward;
mod hooks;
mod params;
mod train;
mod vocab;

pub use checkpoint::Checkpoint;
pub use config::ModelConfig;
pub use forward::{
    forward_with_hooks, next_token_log_probs, surprisal, surprisals, ForwardOutput, Hook, NoHook,
    Recorder, Segment,
};
pub use hooks::{HookSite, SiteKind};
pub use params::{param_names, param_shapes, LayerVars, ModelParams, ModelVars, INIT_STD};
pub use train::{continue_training, train_lm, TrainHyper, TrainOutcome};
pub use vocab::{Vocab, UNK};

/// Initialise weights deterministically from `seed`.
pub fn init_model(config: ModelConfig, seed: u64) -> crate::Result<ModelParams<f64>> {
    ModelParams::init(config, seed)
}

#[cfg(test)]
mod tests;
