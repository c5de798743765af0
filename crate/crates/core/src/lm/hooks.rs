use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lm::ModelConfig;

/// Where an intervention acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    /// Residual stream after a transformer block.
    BlockOutput,
    /// One head's attention-weighted value vector, before the output projection.
    AttnHeadOv,
    /// Post-GELU hidden vector of a block's MLP.
    MlpActivation,
}

impl SiteKind {
    pub const ALL: [SiteKind; 3] = [
        SiteKind::BlockOutput,
        SiteKind::AttnHeadOv,
        SiteKind::MlpActivation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SiteKind::BlockOutput => "block_output",
            SiteKind::AttnHeadOv => "attn_head_ov",
            SiteKind::MlpActivation => "mlp_activation",
        }
    }

    /// Width of the full activation matrix the hook sees at this kind.
    pub fn matrix_width(self, c: &ModelConfig) -> usize {
        match self {
            SiteKind::BlockOutput | SiteKind::AttnHeadOv => c.d_model,
            SiteKind::MlpActivation => c.d_mlp,
        }
    }
}

impl std::fmt::Display for SiteKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SiteKind {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        SiteKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| LabError::Config(format!("unknown site kind {s:?}")))
    }
}

/// A single vector-valued location in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HookSite {
    pub kind: SiteKind,
    pub layer: usize,
    /// Present exactly for `attn_head_ov`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<usize>,
    pub position: usize,
}

impl HookSite {
    pub fn block_output(layer: usize, position: usize) -> Self {
        HookSite { kind: SiteKind::BlockOutput, layer, head: None, position }
    }

    pub fn attn_head_ov(layer: usize, head: usize, position: usize) -> Self {
        HookSite { kind: SiteKind::AttnHeadOv, layer, head: Some(head), position }
    }

    pub fn mlp_activation(layer: usize, position: usize) -> Self {
        HookSite { kind: SiteKind::MlpActivation, layer, head: None, position }
    }

    pub fn at_position(self, position: usize) -> Self {
        HookSite { position, ..self }
    }

    /// Site dimensionality `n`.
    pub fn dim(&self, c: &ModelConfig) -> usize {
        match self.kind {
            SiteKind::BlockOutput => c.d_model,
            SiteKind::AttnHeadOv => c.d_head(),
            SiteKind::MlpActivation => c.d_mlp,
        }
    }

    /// First column of this site inside the hook matrix.
    pub fn col_offset(&self, c: &ModelConfig) -> usize {
        match self.kind {
            SiteKind::AttnHeadOv => self.head.unwrap_or(0) * c.d_head(),
            _ => 0,
        }
    }

    /// Checks layer, head and position against the model. Sequence length
    /// is checked separately at forward time.
    pub fn validate(&self, c: &ModelConfig) -> Result<()> {
        if self.layer >= c.n_layers {
            return Err(LabError::Index(format!(
                "layer {} outside a {}-layer model",
                self.layer, c.n_layers
            )));
        }
        match (self.kind, self.head) {
            (SiteKind::AttnHeadOv, Some(h)) if h >= c.n_heads => Err(LabError::Index(format!(
                "head {h} outside {} heads",
                c.n_heads
            ))),
            (SiteKind::AttnHeadOv, None) => {
                Err(LabError::Config("attn_head_ov site needs a head index".into()))
            }
            (SiteKind::BlockOutput | SiteKind::MlpActivation, Some(_)) => Err(LabError::Config(
                format!("{} site takes no head index", self.kind),
            )),
            _ if self.position >= c.max_seq_len => Err(LabError::Index(format!(
                "position {} beyond context {}",
                self.position, c.max_seq_len
            ))),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for HookSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.head {
            Some(h) => write!(f, "{}[L{} H{} @{}]", self.kind, self.layer, h, self.position),
            None => write!(f, "{}[L{} @{}]", self.kind, self.layer, self.position),
        }
    }
}
