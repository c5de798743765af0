use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numerics::Real;

/// Hyperparameters for [`AdamState`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Linear warmup length in optimizer steps; 0 disables warmup.
    pub warmup_steps: u64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }

    /// Learning rate applied at (1-based) step `t`.
    pub fn lr_at(&self, t: u64) -> f64 {
        if self.warmup_steps > 0 && t <= self.warmup_steps {
            self.lr * t as f64 / self.warmup_steps as f64
        } else {
            self.lr
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 0,
        }
    }
}

/// Moment accumulators for a fixed list of parameter buffers.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real = f64> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        AdamState {
            config,
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every parameter buffer.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(LabError::Dimension(format!(
                "adam tracks {} buffers, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(LabError::Dimension(format!(
                    "adam buffer {i}: state {} param {} grad {}",
                    self.m[i].len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let lr = T::from_f64(c.lr_at(self.step));
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let eps = T::from_f64(c.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut st = AdamState::<f64>::new(AdamConfig::with_lr(0.1), &[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        for _ in 0..5 {
            st.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut st = AdamState::<f64>::new(AdamConfig::with_lr(0.1), &[1]);
        let mut p = vec![0.0];
        st.step(&mut [&mut p], &[&[1.0]]).unwrap();
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn matches_scalar_recurrence_on_quadratic() {
        // f(x) = 0.5 * (x - 3)^2, gradient x - 3.
        let cfg = AdamConfig {
            lr: 0.05,
            warmup_steps: 10,
            ..Default::default()
        };
        let mut st = AdamState::<f64>::new(cfg, &[1]);
        let mut p = vec![-1.0];

        let (mut x, mut m, mut v) = (-1.0f64, 0.0f64, 0.0f64);
        for t in 1..=50u32 {
            let g = p[0] - 3.0;
            st.step(&mut [&mut p], &[&[g]]).unwrap();

            let gr = x - 3.0;
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            let lr = if t <= 10 { 0.05 * t as f64 / 10.0 } else { 0.05 };
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + 1e-8);
            assert!((p[0] - x).abs() <= 1e-12, "step {t}: {} vs {x}", p[0]);
        }
        assert_eq!(st.step_count(), 50);
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let mut st = AdamState::<f64>::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0; 3];
        let err = st.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, LabError::Dimension(_)));
    }
}
