//! Fixed-order numerical kernels on row-major slices.
//!
//! Every reduction accumulates in ascending index order, so results depend
//! only on the inputs and never on blocking or scheduling.

use crate::numerics::Real;

const MR: usize = 4;
const NR: usize = 8;

/// `out[i][j] += Σ_p A[i][p] · b[p][j]` where `A[i][p] = a[i·rs + p·ps]`.
/// Each output accumulates over `p` in ascending order starting from its
/// current value, so blocking never changes the result.
#[allow(clippy::too_many_arguments)]
fn gemm_strided<T: Real>(a: &[T], rs: usize, ps: usize, b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx") {
            // SAFETY: the feature was detected at runtime. The AVX build
            // uses separate multiply and add, so results match the
            // portable path bit for bit.
            unsafe { gemm_strided_avx(a, rs, ps, b, out, m, k, n) };
            return;
        }
    }
    gemm_strided_portable(a, rs, ps, b, out, m, k, n);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
#[allow(clippy::too_many_arguments)]
unsafe fn gemm_strided_avx<T: Real>(a: &[T], rs: usize, ps: usize, b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    gemm_strided_portable(a, rs, ps, b, out, m, k, n);
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn gemm_strided_portable<T: Real>(a: &[T], rs: usize, ps: usize, b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    let mut panel: Vec<[T; MR]> = vec![[T::zero(); MR]; k];
    let mut i = 0;
    while i + MR <= m {
        for (p, slot) in panel.iter_mut().enumerate() {
            for (r, v) in slot.iter_mut().enumerate() {
                *v = a[(i + r) * rs + p * ps];
            }
        }
        let mut j = 0;
        while j + NR <= n {
            let mut acc = [[T::zero(); NR]; MR];
            for (r, row) in acc.iter_mut().enumerate() {
                row.copy_from_slice(&out[(i + r) * n + j..(i + r) * n + j + NR]);
            }
            for (p, av) in panel.iter().enumerate() {
                let bv: &[T; NR] = b[p * n + j..p * n + j + NR].try_into().unwrap();
                for r in 0..MR {
                    let s = av[r];
                    for c in 0..NR {
                        acc[r][c] += s * bv[c];
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                out[(i + r) * n + j..(i + r) * n + j + NR].copy_from_slice(row);
            }
            j += NR;
        }
        for r in i..i + MR {
            edge_row(a, rs, ps, b, out, r, j, k, n);
        }
        i += MR;
    }
    while i < m {
        edge_row(a, rs, ps, b, out, i, 0, k, n);
        i += 1;
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn edge_row<T: Real>(a: &[T], rs: usize, ps: usize, b: &[T], out: &mut [T], i: usize, j0: usize, k: usize, n: usize) {
    if j0 >= n {
        return;
    }
    let orow = &mut out[i * n + j0..(i + 1) * n];
    for p in 0..k {
        let s = a[i * rs + p * ps];
        for (x, &bv) in orow.iter_mut().zip(&b[p * n + j0..(p + 1) * n]) {
            *x += s * bv;
        }
    }
}

/// `out += a · b` with `a: m×k`, `b: k×n`, `out: m×n`.
pub fn gemm_nn<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    gemm_strided(a, k, 1, b, out, m, k, n);
}

/// `out += a · bᵀ` with `a: m×k`, `b: n×k`, `out: m×n`.
pub fn gemm_nt<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    let bt = transpose(b, n, k);
    gemm_nn(a, &bt, out, m, k, n);
}

/// `out += aᵀ · b` with `a: m×k`, `b: m×n`, `out: k×n`.
pub fn gemm_tn<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    gemm_strided(a, 1, k, b, out, k, m, n);
}

pub fn transpose<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut t = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

pub fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn max_of<T: Real>(v: &[T]) -> T {
    v.iter().copied().fold(T::neg_infinity(), T::max)
}

pub fn softmax_in_place<T: Real>(v: &mut [T]) {
    let m = max_of(v);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn log_softmax<T: Real>(v: &[T]) -> Vec<T> {
    let m = max_of(v);
    let mut sum = T::zero();
    for &x in v {
        sum += (x - m).exp();
    }
    let lse = m + sum.ln();
    v.iter().map(|&x| x - lse).collect()
}

/// Row-wise layer norm. Returns the per-row mean and inverse standard
/// deviation for the backward pass.
pub fn layer_norm<T: Real>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    eps: T,
    rows: usize,
    out: &mut [T],
) -> (Vec<T>, Vec<T>) {
    let cols = gamma.len();
    let nf = T::from_f64(cols as f64);
    let mut means = Vec::with_capacity(rows);
    let mut rstds = Vec::with_capacity(rows);
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let mean = xr.iter().copied().sum::<T>() / nf;
        let mut var = T::zero();
        for &v in xr {
            let d = v - mean;
            var += d * d;
        }
        var /= nf;
        let rstd = T::one() / (var + eps).sqrt();
        let or = &mut out[r * cols..(r + 1) * cols];
        for c in 0..cols {
            or[c] = (xr[c] - mean) * rstd * gamma[c] + beta[c];
        }
        means.push(mean);
        rstds.push(rstd);
    }
    (means, rstds)
}

/// Backward of [`layer_norm`]; accumulates into the three gradient buffers.
#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward<T: Real>(
    x: &[T],
    gamma: &[T],
    means: &[T],
    rstds: &[T],
    grad_out: &[T],
    grad_x: Option<&mut [T]>,
    grad_gamma: Option<&mut [T]>,
    grad_beta: Option<&mut [T]>,
) {
    let cols = gamma.len();
    let rows = means.len();
    let nf = T::from_f64(cols as f64);
    let mut gx = grad_x;
    let mut gg = grad_gamma;
    let mut gb = grad_beta;
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let go = &grad_out[r * cols..(r + 1) * cols];
        let (mean, rstd) = (means[r], rstds[r]);
        if let Some(gg) = gg.as_deref_mut() {
            for c in 0..cols {
                gg[c] += go[c] * (xr[c] - mean) * rstd;
            }
        }
        if let Some(gb) = gb.as_deref_mut() {
            for c in 0..cols {
                gb[c] += go[c];
            }
        }
        if let Some(gx) = gx.as_deref_mut() {
            // dxhat = go * gamma; dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
            let mut sum_d = T::zero();
            let mut sum_dx = T::zero();
            for c in 0..cols {
                let d = go[c] * gamma[c];
                let xhat = (xr[c] - mean) * rstd;
                sum_d += d;
                sum_dx += d * xhat;
            }
            let md = sum_d / nf;
            let mdx = sum_dx / nf;
            let gxr = &mut gx[r * cols..(r + 1) * cols];
            for c in 0..cols {
                let d = go[c] * gamma[c];
                let xhat = (xr[c] - mean) * rstd;
                gxr[c] += rstd * (d - md - xhat * mdx);
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU, as used by GPT-2.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let k = T::from_f64(GELU_K);
    let half = T::from_f64(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let k = T::from_f64(GELU_K);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + three * k * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for kk in 0..k {
                    s += a[i * k + kk] * b[kk * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn gemm_variants_agree_with_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(m, k, n) in &[(1, 1, 1), (3, 4, 2), (7, 5, 9), (9, 13, 4), (8, 3, 16), (13, 17, 27)] {
            let a = random(&mut rng, m * k);
            let b = random(&mut rng, k * n);
            let want = naive(&a, &b, m, k, n);

            let mut c = vec![0.0; m * n];
            gemm_nn(&a, &b, &mut c, m, k, n);
            // Same accumulation order as the triple loop: bit-identical.
            assert_eq!(c, want);

            let bt = transpose(&b, k, n);
            let mut c2 = vec![0.0; m * n];
            gemm_nt(&a, &bt, &mut c2, m, k, n);
            assert_eq!(c2, want);

            let at = transpose(&a, m, k);
            let mut c3 = vec![0.0; m * n];
            gemm_tn(&at, &b, &mut c3, k, m, n);
            assert_eq!(c3, want);
        }
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }
}
