use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::das::DasTrainSpec;
use crate::error::{LabError, Result};
use crate::lm::{ModelConfig, SiteKind, TrainHyper};
use crate::stimgen::{default_conjuncts, ingest_ratings, ConjunctSpec, Lexicon, MixtureWeights, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
            ExperimentId::Exp4 => "exp4",
        }
    }
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Held-out split of each conjunct class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: usize,
    pub holdout: usize,
}

impl Default for Split {
    fn default() -> Self {
        Split { train: 6, holdout: 2 }
    }
}

/// Grid of sites to train directions at. `None` means every layer, head
/// or template role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub kinds: Vec<SiteKind>,
    pub layers: Option<Vec<usize>>,
    pub heads: Option<Vec<usize>>,
    pub roles: Option<Vec<Role>>,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep { kinds: vec![SiteKind::BlockOutput], layers: None, heads: None, roles: None }
    }
}

/// Which Exp-2 cells get the per-conjunct ΔODDS evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjunctCells {
    All,
    Best,
}

/// Exp-4 settings. Directions are trained Exp-3 style at one site and
/// projected at the role's template index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkSpec {
    /// Plain-text corpus; without one, a labelled synthetic corpus of
    /// conjunct contexts is generated.
    pub corpus: Option<PathBuf>,
    pub count: usize,
    pub top_k: usize,
    pub kind: SiteKind,
    pub layer: usize,
    pub head: Option<usize>,
    pub role: Role,
    pub synthetic_sentences: usize,
}

impl Default for ChunkSpec {
    fn default() -> Self {
        ChunkSpec {
            corpus: None,
            count: 100_000,
            top_k: 75,
            kind: SiteKind::BlockOutput,
            layer: 0,
            head: None,
            role: Role::V2,
            synthetic_sentences: 2000,
        }
    }
}

/// Toy language model and its training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSpec {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_mlp: usize,
    pub max_seq_len: usize,
    pub corpus_size: usize,
    pub corpus_seed: u64,
    pub weights: MixtureWeights,
    pub hyper: TrainHyper,
}

impl Default for LmSpec {
    fn default() -> Self {
        let c = ModelConfig::desk_default(0);
        LmSpec {
            n_layers: c.n_layers,
            n_heads: c.n_heads,
            d_model: c.d_model,
            d_mlp: c.d_mlp,
            max_seq_len: c.max_seq_len,
            corpus_size: 20_000,
            corpus_seed: 0,
            weights: MixtureWeights::default(),
            hyper: TrainHyper::default(),
        }
    }
}

impl LmSpec {
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig::new(self.n_layers, self.n_heads, self.d_model, self.d_mlp, vocab_size, self.max_seq_len)
    }
}

/// One experiment run, as read from a JSON config. Every default is the
/// published setting where one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentId,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Seed for stimulus sampling, separate from direction seeds.
    #[serde(default)]
    pub stimulus_seed: u64,
    /// Held-out pairs per evaluation set.
    #[serde(default = "default_eval_pairs")]
    pub eval_pairs: usize,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default = "default_conjunct_cells")]
    pub conjunct_cells: ConjunctCells,
    #[serde(default)]
    pub das: DasTrainSpec,
    /// Conjunct inventory as a ratings CSV; the bundled one otherwise.
    #[serde(default)]
    pub ratings: Option<PathBuf>,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub chunks: ChunkSpec,
    #[serde(default)]
    pub lm: LmSpec,
    #[serde(default)]
    pub float32: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_eval_pairs() -> usize {
    100
}

fn default_conjunct_cells() -> ConjunctCells {
    ConjunctCells::All
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentId) -> Self {
        ExperimentSpec {
            experiment,
            checkpoint: None,
            seeds: default_seeds(),
            stimulus_seed: 0,
            eval_pairs: default_eval_pairs(),
            split: Split::default(),
            sweep: Sweep::default(),
            conjunct_cells: default_conjunct_cells(),
            das: DasTrainSpec::default(),
            ratings: None,
            lexicon: None,
            chunks: ChunkSpec::default(),
            lm: LmSpec::default(),
            float32: false,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring the output root.
    pub fn hash(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let keyed = ExperimentSpec { out: None, ..self.clone() };
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&keyed)?)))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("seeds", self.seeds.len()),
            ("eval_pairs", self.eval_pairs),
            ("split.train", self.split.train),
            ("split.holdout", self.split.holdout),
            ("sweep.kinds", self.sweep.kinds.len()),
            ("das.train_pairs", self.das.train_pairs),
            ("chunks.count", self.chunks.count),
            ("chunks.synthetic_sentences", self.chunks.synthetic_sentences),
            ("lm.corpus_size", self.lm.corpus_size),
        ];
        for (field, n) in positive {
            if n == 0 {
                return Err(LabError::Config(format!("{field} must be positive")));
            }
        }
        for (field, list) in [("sweep.layers", &self.sweep.layers), ("sweep.heads", &self.sweep.heads)] {
            if list.as_ref().is_some_and(Vec::is_empty) {
                return Err(LabError::Config(format!("{field} is empty")));
            }
        }
        if self.sweep.roles.as_ref().is_some_and(Vec::is_empty) {
            return Err(LabError::Config("sweep.roles is empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(LabError::Config("seeds contain duplicates".into()));
        }
        self.das.validate().map_err(|e| LabError::Config(format!("das: {e}")))?;
        let conjuncts = self.conjuncts()?;
        for class in [crate::stimgen::ConjunctClass::Acceptable, crate::stimgen::ConjunctClass::Unacceptable] {
            let n = conjuncts.iter().filter(|c| c.class == class).count();
            if matches!(self.experiment, ExperimentId::Exp3 | ExperimentId::Exp4) && n != self.split.train + self.split.holdout {
                return Err(LabError::Config(format!(
                    "split {}+{} does not cover the {n} {} conjuncts",
                    self.split.train,
                    self.split.holdout,
                    class.as_str()
                )));
            }
        }
        Ok(())
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon {
            Some(p) => Lexicon::load(p),
            None => Ok(Lexicon::default()),
        }
    }

    pub fn conjuncts(&self) -> Result<Vec<ConjunctSpec>> {
        match &self.ratings {
            Some(p) => ingest_ratings(&std::fs::read(p).map_err(|e| LabError::io(p, e))?),
            None => Ok(default_conjuncts()),
        }
    }

    pub fn checkpoint_path(&self) -> Result<&Path> {
        self.checkpoint.as_deref().ok_or_else(|| LabError::Config("missing field `checkpoint`".into()))
    }
}
