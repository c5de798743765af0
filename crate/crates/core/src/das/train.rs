use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::das::{Direction, InterventionTarget, Interchange, LmTarget};
use crate::error::{LabError, Result};
use crate::lm::{HookSite, ModelParams};
use crate::numerics::{AdamConfig, AdamState, Real};
use crate::stimgen::Role;

/// How base and source inputs are drawn from the training pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleAssignment {
    /// Each pair contributes one example, alternating which member is base.
    Alternating,
    /// Base and source roles are fixed by the caller.
    Fixed,
}

/// Optimisation settings for one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DasTrainSpec {
    pub lr: f64,
    pub warmup_steps: u64,
    pub batch: usize,
    /// Micro-batches averaged into one optimizer step.
    pub accumulation: usize,
    pub epochs: usize,
    pub train_pairs: usize,
    pub roles: RoleAssignment,
    /// Train on flipped labels: the base's own label is the target.
    pub control: bool,
}

impl Default for DasTrainSpec {
    fn default() -> Self {
        DasTrainSpec {
            lr: 5e-3,
            warmup_steps: 100,
            batch: 4,
            accumulation: 4,
            epochs: 1,
            train_pairs: 400,
            roles: RoleAssignment::Alternating,
            control: false,
        }
    }
}

impl DasTrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(LabError::Spec(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, v) in [
            ("batch", self.batch),
            ("accumulation", self.accumulation),
            ("epochs", self.epochs),
            ("train_pairs", self.train_pairs),
        ] {
            if v == 0 {
                return Err(LabError::Spec(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn as_control(self) -> Self {
        DasTrainSpec { control: true, ..self }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serialises");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Learned vector with its per-step loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedVector {
    pub a: Vec<f64>,
    /// Mean micro-batch loss of each optimizer step.
    pub losses: Vec<f64>,
    /// Mean loss over the last epoch.
    pub final_loss: f64,
}

/// Deterministic unit-normalised Gaussian draw.
pub fn initial_direction(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalise(a: &mut [f64]) -> Result<()> {
    let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n.is_finite() && n > 0.0) {
        return Err(LabError::Degenerate("direction collapsed to zero".into()));
    }
    a.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

/// Adam on `a = w/‖w‖` over shuffled micro-batches. The gradient is taken
/// through the normalisation, so only its tangential part reaches Adam, and
/// `w` is reset to unit length after every step.
pub fn train_vector<Tg: InterventionTarget + ?Sized>(target: &Tg, spec: &DasTrainSpec, seed: u64) -> Result<TrainedVector> {
    spec.validate()?;
    if target.is_empty() {
        return Err(LabError::Input("no interchange examples to train on".into()));
    }
    let n = target.dim();
    let mut a = initial_direction(n, seed);
    let mut adam = AdamState::<f64>::new(
        AdamConfig { lr: spec.lr, warmup_steps: spec.warmup_steps, ..AdamConfig::default() },
        &[n],
    );
    let mut order: Vec<usize> = (0..target.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut losses = Vec::new();
    let mut final_loss = 0.0;
    for _ in 0..spec.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_batches) = (0.0, 0usize);
        for step in order.chunks(spec.batch * spec.accumulation) {
            let mut grad = vec![0.0; n];
            let mut step_loss = 0.0;
            let micro: Vec<&[usize]> = step.chunks(spec.batch).collect();
            for mb in &micro {
                let (l, g) = target.loss_and_grad(mb, &a, spec.control)?;
                step_loss += l;
                for (acc, gi) in grad.iter_mut().zip(&g) {
                    *acc += gi;
                }
            }
            let k = micro.len() as f64;
            grad.iter_mut().for_each(|g| *g /= k);
            let radial = crate::numerics::dot(&grad, &a);
            grad.iter_mut().zip(&a).for_each(|(g, x)| *g -= radial * x);
            adam.step(&mut [&mut a], &[&grad])?;
            normalise(&mut a)?;
            losses.push(step_loss / k);
            epoch_loss += step_loss;
            epoch_batches += micro.len();
        }
        final_loss = epoch_loss / epoch_batches as f64;
    }
    Ok(TrainedVector { a, losses, final_loss })
}

/// Trains one direction at `site` on a language model. With a `role`, the
/// site position of every example is that role's last token.
pub fn train_direction<T: Real>(
    params: &ModelParams<T>,
    examples: &[Interchange],
    site: HookSite,
    role: Option<Role>,
    spec: &DasTrainSpec,
    seed: u64,
) -> Result<Direction> {
    let target = LmTarget::new(params, site, role, examples)?;
    let t = train_vector(&target, spec, seed)?;
    Ok(Direction {
        site,
        role,
        seed,
        control: spec.control,
        fingerprint: spec.fingerprint(),
        loss: t.final_loss,
        a: t.a,
    })
}
