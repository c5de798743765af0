use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lm::checkpoint::{read_container, read_tensors, write_container, TensorEntry};
use crate::lm::HookSite;
use crate::numerics::{das_patch_values, DType, Real};
use crate::stimgen::Role;

/// Largest accepted deviation of `‖a‖₂` from one.
pub const UNIT_TOL: f64 = 1e-6;

/// `b + ((s·a) − (b·a)) a`: the component of `b` along `a` replaced by that
/// of `s`.
pub fn das_patch<T: Real>(b: &[T], s: &[T], a: &[T]) -> Result<Vec<T>> {
    if b.len() != s.len() || b.len() != a.len() {
        return Err(LabError::Patch(format!(
            "patch operands have lengths {}, {} and {}",
            b.len(),
            s.len(),
            a.len()
        )));
    }
    check_unit(a)?;
    Ok(das_patch_values(b, s, a))
}

fn check_unit<T: Real>(a: &[T]) -> Result<()> {
    let norm = a.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(LabError::Patch(format!("direction has norm {norm}, expected 1")));
    }
    Ok(())
}

/// A learned one-dimensional causal subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub site: HookSite,
    /// Role the site position was aligned by during training, if any.
    pub role: Option<Role>,
    pub seed: u64,
    /// Trained on flipped labels.
    pub control: bool,
    pub fingerprint: String,
    /// Mean training loss over the final epoch.
    pub loss: f64,
    pub a: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DirectionHeader {
    site: HookSite,
    role: Option<Role>,
    seed: u64,
    control: bool,
    fingerprint: String,
    loss: f64,
    tensors: Vec<TensorEntry>,
}

impl Direction {
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Scalar position `a·h` of an activation on this direction.
    pub fn project(&self, h: &[f64]) -> Result<f64> {
        if h.len() != self.a.len() {
            return Err(LabError::Projection(format!(
                "activation of width {} against a direction of width {}",
                h.len(),
                self.a.len()
            )));
        }
        Ok(crate::numerics::dot(&self.a, h))
    }

    pub fn validate(&self) -> Result<()> {
        check_unit(&self.a)?;
        if self.a.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Patch("direction has non-finite components".into()));
        }
        Ok(())
    }

    pub fn negated(&self) -> Direction {
        Direction { a: self.a.iter().map(|v| -v).collect(), ..self.clone() }
    }

    /// Checkpoint-format archive: JSON header plus the vector as tensor `a`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = DirectionHeader {
            site: self.site,
            role: self.role,
            seed: self.seed,
            control: self.control,
            fingerprint: self.fingerprint.clone(),
            loss: self.loss,
            tensors: vec![TensorEntry {
                name: "a".into(),
                dtype: DType::F64,
                shape: vec![self.a.len()],
                offset: 0,
            }],
        };
        let mut payload = Vec::with_capacity(8 * self.a.len());
        for &v in &self.a {
            v.write_le(&mut payload);
        }
        write_container(&header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (DirectionHeader, _) = read_container(bytes)?;
        if h.tensors.len() != 1 || h.tensors[0].name != "a" || h.tensors[0].shape.len() != 1 {
            return Err(LabError::Format("direction archive must hold exactly one vector named a".into()));
        }
        let (_, t) = read_tensors::<f64>(&h.tensors, payload)?.remove(0);
        let d = Direction {
            site: h.site,
            role: h.role,
            seed: h.seed,
            control: h.control,
            fingerprint: h.fingerprint,
            loss: h.loss,
            a: t.data().to_vec(),
        };
        d.validate().map_err(|e| LabError::Format(e.to_string()))?;
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| LabError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
        Direction::from_bytes(&bytes)
    }
}
