//! Dense tensors, a recording autodiff graph, and the Adam optimizer.
//!
//! Everything is generic over [`Real`], implemented for `f64` (the default
//! precision) and `f32`. Kernels accumulate in a fixed order so that the same
//! inputs always produce bit-identical outputs.

mod adam;
mod graph;
pub mod kernels;
mod real;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Gradients, Graph, Op, Var};
pub(crate) use graph::das_patch_values;
pub use real::{DType, Real};
pub use tensor::Tensor;

use crate::error::{LabError, Result};

/// Matrix product of two rank-2 tensors.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(LabError::Dimension(format!(
            "matmul inner extents disagree: {m}x{k} by {k2}x{n}"
        )));
    }
    let mut out = vec![T::zero(); m * n];
    kernels::gemm_nn(a.data(), b.data(), &mut out, m, k, n);
    Tensor::from_vec(vec![m, n], out)
}

/// Numerically stabilised softmax of a vector.
pub fn softmax_row<T: Real>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(LabError::Dimension("softmax of an empty vector".into()));
    }
    let mut out = v.to_vec();
    kernels::softmax_in_place(&mut out);
    Ok(out)
}

/// `log softmax(v)` computed with max subtraction.
pub fn log_softmax_row<T: Real>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(LabError::Dimension("log-softmax of an empty vector".into()));
    }
    Ok(kernels::log_softmax(v))
}

/// Cross-entropy `-ln softmax(logits)[target]` in nats.
pub fn cross_entropy<T: Real>(logits: &[T], target: usize) -> Result<T> {
    if target >= logits.len() {
        return Err(LabError::Index(format!(
            "target {target} out of range for {} logits",
            logits.len()
        )));
    }
    let lsm = log_softmax_row(logits)?;
    Ok(-lsm[target])
}

/// Dot product accumulated left to right.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    kernels::dot(a, b)
}
