use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lm::forward::{check_vocab, forward_graph, NoHook};
use crate::lm::{ModelConfig, ModelParams};
use crate::numerics::{AdamConfig, AdamState, Graph, Real};

/// Language-model optimisation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub lr: f64,
    /// Sentences per optimizer step.
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
    pub warmup_steps: u64,
    /// Global gradient-norm ceiling.
    pub grad_clip: Option<f64>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            lr: 3e-3,
            batch: 16,
            steps: 1500,
            seed: 0,
            warmup_steps: 50,
            grad_clip: Some(1.0),
        }
    }
}

/// Trained weights with the per-step mean token loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Real = f64> {
    pub params: ModelParams<T>,
    pub losses: Vec<f64>,
}

/// Next-token training over whole sentences. The first token of each
/// sentence is context only. Initialisation uses `hyper.seed`; batch order
/// uses an independent stream derived from it.
pub fn train_lm<T: Real>(config: ModelConfig, corpus: &[Vec<usize>], hyper: &TrainHyper) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let params = ModelParams::init(config, hyper.seed)?;
    continue_training(params, corpus, hyper)
}

/// As [`train_lm`], starting from existing weights.
pub fn continue_training<T: Real>(
    mut params: ModelParams<T>,
    corpus: &[Vec<usize>],
    hyper: &TrainHyper,
) -> Result<TrainOutcome<T>> {
    let config = params.config;
    if corpus.is_empty() {
        return Err(LabError::Input("training corpus is empty".into()));
    }
    if hyper.batch == 0 {
        return Err(LabError::Config("batch size must be at least 1".into()));
    }
    for (i, s) in corpus.iter().enumerate() {
        if s.len() < 2 {
            return Err(LabError::Input(format!("sentence {i} has fewer than two tokens")));
        }
        if s.len() - 1 > config.max_seq_len {
            return Err(LabError::Input(format!(
                "sentence {i} needs {} positions, context is {}",
                s.len() - 1,
                config.max_seq_len
            )));
        }
        check_vocab(&config, s).map_err(|e| LabError::Input(format!("sentence {i}: {e}")))?;
    }
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::<T>::new(
        AdamConfig {
            lr: hyper.lr,
            warmup_steps: hyper.warmup_steps,
            ..AdamConfig::default()
        },
        &sizes,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5851_f42d_4c95_7f2d);
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::with_capacity(hyper.steps);
    for step in 0..hyper.steps {
        let mut picks = Vec::with_capacity(hyper.batch);
        while picks.len() < hyper.batch {
            if order.is_empty() {
                order = (0..corpus.len()).collect();
                order.shuffle(&mut rng);
                order.reverse();
            }
            picks.push(order.pop().expect("refilled above"));
        }
        let inputs: Vec<&[usize]> = picks.iter().map(|&i| &corpus[i][..corpus[i].len() - 1]).collect();
        let targets: Vec<Option<usize>> = picks
            .iter()
            .flat_map(|&i| corpus[i][1..].iter().map(|&t| Some(t)))
            .collect();

        let mut g = Graph::new();
        let vars = params.bind(&mut g, true);
        let (logits, _) = forward_graph(&mut g, &vars, &config, &inputs, &mut NoHook)?;
        let loss = g.cross_entropy(logits, targets)?;
        let loss_value = g.value(loss).item()?.as_f64();
        let mut grads = g.backward(loss)?;
        let mut grad_bufs: Vec<Vec<T>> = vars.all().iter().map(|&v| grads.take(v)).collect();
        drop(g);

        if let Some(clip) = hyper.grad_clip {
            let norm = grad_bufs
                .iter()
                .flat_map(|b| b.iter())
                .map(|v| v.as_f64() * v.as_f64())
                .sum::<f64>()
                .sqrt();
            if norm > clip {
                let f = T::from_f64(clip / norm);
                for b in grad_bufs.iter_mut() {
                    for v in b.iter_mut() {
                        *v *= f;
                    }
                }
            }
        }
        let grad_refs: Vec<&[T]> = grad_bufs.iter().map(|b| b.as_slice()).collect();
        adam.step(&mut params.buffers_mut(), &grad_refs)?;
        if !loss_value.is_finite() {
            return Err(LabError::Contract(format!("training loss diverged at step {step}")));
        }
        losses.push(loss_value);
        if step % 100 == 0 {
            log::debug!("train step {step} loss {loss_value:.4}");
        }
    }
    Ok(TrainOutcome { params, losses })
}
