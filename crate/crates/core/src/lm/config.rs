use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Architecture of the decoder-only transformer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub layer_norm_eps: f64,
}

impl ModelConfig {
    pub fn new(
        n_layers: usize,
        n_heads: usize,
        d_model: usize,
        d_mlp: usize,
        vocab_size: usize,
        max_seq_len: usize,
    ) -> Self {
        ModelConfig {
            n_layers,
            n_heads,
            d_model,
            d_mlp,
            vocab_size,
            max_seq_len,
            layer_norm_eps: 1e-5,
        }
    }

    /// Desk-scale default: 4 layers, 4 heads, width 128, MLP width 512,
    /// context 24.
    pub fn desk_default(vocab_size: usize) -> Self {
        ModelConfig::new(4, 4, 128, 512, vocab_size, 24)
    }

    pub fn eps(&self) -> f64 {
        self.layer_norm_eps
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_mlp", self.d_mlp),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in extents {
            if v == 0 {
                return Err(LabError::Config(format!("{name} must be at least 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(LabError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        let eps = self.eps();
        if !(eps.is_finite() && eps > 0.0) {
            return Err(LabError::Config("layer norm epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let (d, m, v, l) = (self.d_model, self.d_mlp, self.vocab_size, self.n_layers);
        let per_layer = 4 * d * d + 4 * d + 2 * d * m + m + d + 4 * d;
        v * d + self.max_seq_len * d + l * per_layer + 2 * d + d * v
    }
}
