use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{LabError, Result};
use crate::lm::ModelConfig;
use crate::numerics::{Graph, Real, Tensor, Var};

/// Tensors of one transformer block, in storage order.
pub(crate) const LAYER_TENSORS: [&str; 16] = [
    "ln1.gamma",
    "ln1.beta",
    "attn.w_q",
    "attn.b_q",
    "attn.w_k",
    "attn.b_k",
    "attn.w_v",
    "attn.b_v",
    "attn.w_o",
    "attn.b_o",
    "ln2.gamma",
    "ln2.beta",
    "mlp.w_in",
    "mlp.b_in",
    "mlp.w_out",
    "mlp.b_out",
];

/// Standard deviation of the weight initialisation.
pub const INIT_STD: f64 = 0.02;

/// Model weights. Tensors are reference counted so they can be bound into
/// many graphs without copying.
#[derive(Debug, Clone)]
pub struct ModelParams<T: Real = f64> {
    pub config: ModelConfig,
    tensors: Vec<Arc<Tensor<T>>>,
}

/// Parameter handles inside a particular [`Graph`].
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub tok_emb: Var,
    pub pos_emb: Var,
    pub layers: Vec<LayerVars>,
    pub lnf_gamma: Var,
    pub lnf_beta: Var,
    pub unembed: Var,
    all: Vec<Var>,
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub ln1_gamma: Var,
    pub ln1_beta: Var,
    pub w_q: Var,
    pub b_q: Var,
    pub w_k: Var,
    pub b_k: Var,
    pub w_v: Var,
    pub b_v: Var,
    pub w_o: Var,
    pub b_o: Var,
    pub ln2_gamma: Var,
    pub ln2_beta: Var,
    pub w_in: Var,
    pub b_in: Var,
    pub w_out: Var,
    pub b_out: Var,
}

impl ModelVars {
    /// Handles in the same order as [`ModelParams::names`].
    pub fn all(&self) -> &[Var] {
        &self.all
    }
}

/// Names of every parameter tensor, in storage order.
pub fn param_names(config: &ModelConfig) -> Vec<String> {
    let mut names = vec!["tok_emb".to_string(), "pos_emb".to_string()];
    for l in 0..config.n_layers {
        for t in LAYER_TENSORS {
            names.push(format!("layers.{l}.{t}"));
        }
    }
    names.extend(["ln_f.gamma", "ln_f.beta", "unembed"].map(String::from));
    names
}

/// Expected shape of every parameter tensor, in storage order.
pub fn param_shapes(c: &ModelConfig) -> Vec<Vec<usize>> {
    let (d, m) = (c.d_model, c.d_mlp);
    let mut shapes = vec![vec![c.vocab_size, d], vec![c.max_seq_len, d]];
    for _ in 0..c.n_layers {
        shapes.extend([
            vec![d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d],
            vec![d],
            vec![d, m],
            vec![m],
            vec![m, d],
            vec![d],
        ]);
    }
    shapes.extend([vec![d], vec![d], vec![d, c.vocab_size]]);
    shapes
}

impl<T: Real> ModelParams<T> {
    /// Deterministic initialisation from `seed`: weights and embeddings are
    /// `N(0, 0.02²)`, residual output projections are further scaled by
    /// `1/sqrt(2·n_layers)`, biases are zero, layer-norm gains are one.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let resid_scale = 1.0 / (2.0 * config.n_layers as f64).sqrt();
        let names = param_names(&config);
        let shapes = param_shapes(&config);
        let mut tensors = Vec::with_capacity(names.len());
        for (name, shape) in names.iter().zip(shapes) {
            let n: usize = shape.iter().product();
            let data: Vec<T> = if name.ends_with("gamma") {
                vec![T::one(); n]
            } else if name.contains(".b_") || name.ends_with("beta") {
                vec![T::zero(); n]
            } else {
                let scale = if name.ends_with("w_o") || name.ends_with("w_out") {
                    resid_scale
                } else {
                    1.0
                };
                (0..n)
                    .map(|_| T::from_f64(normal.sample(&mut rng) * scale))
                    .collect()
            };
            tensors.push(Arc::new(Tensor::from_vec(shape, data)?));
        }
        Ok(ModelParams { config, tensors })
    }

    /// Assemble from named tensors, checking names and shapes.
    pub fn from_named(config: ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let names = param_names(&config);
        let shapes = param_shapes(&config);
        if named.len() != names.len() {
            return Err(LabError::Format(format!(
                "expected {} tensors, found {}",
                names.len(),
                named.len()
            )));
        }
        let mut tensors = Vec::with_capacity(names.len());
        for ((name, t), (want_name, want_shape)) in named.into_iter().zip(names.iter().zip(shapes)) {
            if &name != want_name {
                return Err(LabError::Format(format!("expected tensor {want_name}, found {name}")));
            }
            if t.shape() != want_shape.as_slice() {
                return Err(LabError::Format(format!(
                    "tensor {name} has shape {:?}, expected {want_shape:?}",
                    t.shape()
                )));
            }
            if !t.all_finite() {
                return Err(LabError::Format(format!("tensor {name} holds non-finite values")));
            }
            tensors.push(Arc::new(t));
        }
        Ok(ModelParams { config, tensors })
    }

    pub fn names(&self) -> Vec<String> {
        param_names(&self.config)
    }

    pub fn tensors(&self) -> &[Arc<Tensor<T>>] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.names()
            .iter()
            .position(|n| n == name)
            .map(|i| self.tensors[i].as_ref())
    }

    /// Mutable access for optimizer updates (clones a buffer only if a graph
    /// still shares it).
    pub fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        self.tensors
            .iter_mut()
            .map(|t| Arc::make_mut(t).data_mut())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config,
            tensors: self.tensors.iter().map(|t| Arc::new(t.cast())).collect(),
        }
    }

    /// Bind every tensor into `g` as a leaf.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> ModelVars {
        let all: Vec<Var> = self
            .tensors
            .iter()
            .map(|t| g.shared_leaf(Arc::clone(t), requires_grad))
            .collect();
        let l = self.config.n_layers;
        let layers = (0..l)
            .map(|i| {
                let b = 2 + 16 * i;
                LayerVars {
                    ln1_gamma: all[b],
                    ln1_beta: all[b + 1],
                    w_q: all[b + 2],
                    b_q: all[b + 3],
                    w_k: all[b + 4],
                    b_k: all[b + 5],
                    w_v: all[b + 6],
                    b_v: all[b + 7],
                    w_o: all[b + 8],
                    b_o: all[b + 9],
                    ln2_gamma: all[b + 10],
                    ln2_beta: all[b + 11],
                    w_in: all[b + 12],
                    b_in: all[b + 13],
                    w_out: all[b + 14],
                    b_out: all[b + 15],
                }
            })
            .collect();
        let tail = 2 + 16 * l;
        ModelVars {
            tok_emb: all[0],
            pos_emb: all[1],
            layers,
            lnf_gamma: all[tail],
            lnf_beta: all[tail + 1],
            unembed: all[tail + 2],
            all,
        }
    }
}
