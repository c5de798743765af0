//! Tape-based reverse-mode differentiation over coarse tensor operations.

use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::numerics::kernels;
use crate::numerics::{Real, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A recorded primitive. Inputs always refer to earlier nodes, so the node
/// list is topologically ordered by construction.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `x (r×c) + bias (c)` broadcast over rows.
    AddRow(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    },
    Gelu(Var),
    SoftmaxRows(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    GatherRows {
        x: Var,
        rows: Vec<usize>,
    },
    /// Multi-head causal self-attention over independent segments of rows.
    /// Output keeps the heads concatenated (before the output projection).
    Attention {
        q: Var,
        k: Var,
        v: Var,
        segments: Vec<(usize, usize)>,
        heads: usize,
    },
    SliceBlock {
        x: Var,
        row: usize,
        col: usize,
        len: usize,
    },
    ReplaceBlock {
        x: Var,
        row: usize,
        col: usize,
        v: Var,
    },
    /// `b + ((s·a) − (b·a)) a`
    DasPatch {
        b: Var,
        s: Var,
        a: Var,
    },
    /// Mean next-token cross-entropy over rows with a target.
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
    },
}

#[derive(Debug, Clone)]
enum Saved<T> {
    None,
    LayerNorm { means: Vec<T>, rstds: Vec<T> },
    Probs(Vec<T>),
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op,
    value: Arc<Tensor<T>>,
    saved: Saved<T>,
    requires_grad: bool,
}

/// Ordered record of operations with their forward values.
#[derive(Debug, Clone, Default)]
pub struct Graph<T: Real = f64> {
    nodes: Vec<Node<T>>,
}

/// Gradients keyed by graph handle.
#[derive(Debug, Clone)]
pub struct Gradients<T: Real = f64> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss or does not require gradients.
    pub fn get(&self, v: Var) -> Tensor<T> {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::from_vec(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn slice(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn take(&mut self, v: Var) -> Vec<T> {
        let n: usize = self.shapes[v.0].iter().product();
        self.grads[v.0].take().unwrap_or_else(|| vec![T::zero(); n])
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf node that gradients flow into.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, true)
    }

    /// Leaf node treated as a constant.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, false)
    }

    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        self.shared_leaf(Arc::new(t), requires_grad)
    }

    /// Leaf that shares its buffer with the caller.
    pub fn shared_leaf(&mut self, t: Arc<Tensor<T>>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: t,
            saved: Saved::None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let (value, saved) = eval(&op, |v: Var| &*self.nodes[v.0].value)?;
        if !value.all_finite() {
            return Err(LabError::Contract(format!(
                "non-finite value produced by {}",
                op_name(&op)
            )));
        }
        let requires_grad = inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value: Arc::new(value),
            saved,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.push(Op::AddRow(x, bias))
    }
    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.push(Op::Scale(x, factor))
    }
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Sum(x))
    }
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        self.push(Op::LayerNorm {
            x,
            gamma,
            beta,
            eps,
        })
    }
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Gelu(x))
    }
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.push(Op::SoftmaxRows(x))
    }
    pub fn embedding(&mut self, table: Var, ids: Vec<usize>) -> Result<Var> {
        self.push(Op::Embedding { table, ids })
    }
    pub fn gather_rows(&mut self, x: Var, rows: Vec<usize>) -> Result<Var> {
        self.push(Op::GatherRows { x, rows })
    }
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        segments: Vec<(usize, usize)>,
        heads: usize,
    ) -> Result<Var> {
        self.push(Op::Attention {
            q,
            k,
            v,
            segments,
            heads,
        })
    }
    pub fn slice_block(&mut self, x: Var, row: usize, col: usize, len: usize) -> Result<Var> {
        self.push(Op::SliceBlock { x, row, col, len })
    }
    pub fn replace_block(&mut self, x: Var, row: usize, col: usize, v: Var) -> Result<Var> {
        self.push(Op::ReplaceBlock { x, row, col, v })
    }
    pub fn das_patch(&mut self, b: Var, s: Var, a: Var) -> Result<Var> {
        self.push(Op::DasPatch { b, s, a })
    }
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<Option<usize>>) -> Result<Var> {
        self.push(Op::CrossEntropy { logits, targets })
    }

    /// Re-run every recorded operation from the leaf values.
    pub fn replay(&self) -> Result<Vec<Tensor<T>>> {
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => (*node.value).clone(),
                ref op => eval(op, |v: Var| &values[v.0])?.0,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Reverse-mode pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(LabError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn val(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let acc = |v: Var, grads: &mut [Option<Vec<T>>], f: &mut dyn FnMut(&mut [T])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a.0].value.dims2().unwrap();
                let (_, nn) = self.nodes[b.0].value.dims2().unwrap();
                if self.wants(*a) {
                    let bv = self.val(*b);
                    acc(*a, grads, &mut |ga| kernels::gemm_nt(g, bv, ga, m, nn, k));
                }
                if self.wants(*b) {
                    let av = self.val(*a);
                    acc(*b, grads, &mut |gb| kernels::gemm_tn(av, g, gb, m, k, nn));
                }
            }
            Op::Add(a, b) => {
                acc(*a, grads, &mut |ga| kernels::add_into(ga, g));
                acc(*b, grads, &mut |gb| kernels::add_into(gb, g));
            }
            Op::AddRow(x, bias) => {
                acc(*x, grads, &mut |gx| kernels::add_into(gx, g));
                let c = self.nodes[bias.0].value.len();
                acc(*bias, grads, &mut |gb| {
                    for row in g.chunks(c) {
                        kernels::add_into(gb, row);
                    }
                });
            }
            Op::Scale(x, f) => {
                let f = T::from_f64(*f);
                acc(*x, grads, &mut |gx| kernels::axpy(f, g, gx));
            }
            Op::Sum(x) => {
                let g0 = g[0];
                acc(*x, grads, &mut |gx| {
                    for v in gx.iter_mut() {
                        *v += g0;
                    }
                });
            }
            Op::LayerNorm { x, gamma, beta, .. } => {
                let Saved::LayerNorm { means, rstds } = &node.saved else {
                    unreachable!()
                };
                let xv = self.val(*x);
                let gv = self.val(*gamma);
                let cols = gv.len();
                let mut gx = self.wants(*x).then(|| vec![T::zero(); xv.len()]);
                let mut gg = self.wants(*gamma).then(|| vec![T::zero(); cols]);
                let mut gb = self.wants(*beta).then(|| vec![T::zero(); cols]);
                kernels::layer_norm_backward(
                    xv,
                    gv,
                    means,
                    rstds,
                    g,
                    gx.as_deref_mut(),
                    gg.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                if let Some(d) = gx {
                    acc(*x, grads, &mut |s| kernels::add_into(s, &d));
                }
                if let Some(d) = gg {
                    acc(*gamma, grads, &mut |s| kernels::add_into(s, &d));
                }
                if let Some(d) = gb {
                    acc(*beta, grads, &mut |s| kernels::add_into(s, &d));
                }
            }
            Op::Gelu(x) => {
                let xv = self.val(*x);
                acc(*x, grads, &mut |gx| {
                    for ((d, &xi), &gi) in gx.iter_mut().zip(xv).zip(g) {
                        *d += gi * kernels::gelu_grad(xi);
                    }
                });
            }
            Op::SoftmaxRows(x) => {
                let y = node.value.data();
                let (_, c) = node.value.dims2().unwrap();
                acc(*x, grads, &mut |gx| {
                    for ((yr, gr), dr) in y.chunks(c).zip(g.chunks(c)).zip(gx.chunks_mut(c)) {
                        let s = kernels::dot(yr, gr);
                        for j in 0..c {
                            dr[j] += yr[j] * (gr[j] - s);
                        }
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let (_, d) = self.nodes[table.0].value.dims2().unwrap();
                acc(*table, grads, &mut |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        kernels::add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                });
            }
            Op::GatherRows { x, rows } => {
                let (_, c) = self.nodes[x.0].value.dims2().unwrap();
                acc(*x, grads, &mut |gx| {
                    for (r, &src) in rows.iter().enumerate() {
                        kernels::add_into(&mut gx[src * c..(src + 1) * c], &g[r * c..(r + 1) * c]);
                    }
                });
            }
            Op::Attention {
                q,
                k,
                v,
                segments,
                heads,
            } => {
                let Saved::Probs(probs) = &node.saved else {
                    unreachable!()
                };
                let (n, d) = self.nodes[q.0].value.dims2().unwrap();
                let mut dq = vec![T::zero(); n * d];
                let mut dk = vec![T::zero(); n * d];
                let mut dv = vec![T::zero(); n * d];
                attention_backward(
                    self.val(*q),
                    self.val(*k),
                    self.val(*v),
                    probs,
                    g,
                    segments,
                    *heads,
                    d,
                    &mut dq,
                    &mut dk,
                    &mut dv,
                );
                acc(*q, grads, &mut |s| kernels::add_into(s, &dq));
                acc(*k, grads, &mut |s| kernels::add_into(s, &dk));
                acc(*v, grads, &mut |s| kernels::add_into(s, &dv));
            }
            Op::SliceBlock { x, row, col, len } => {
                let (_, c) = self.nodes[x.0].value.dims2().unwrap();
                let start = row * c + col;
                acc(*x, grads, &mut |gx| kernels::add_into(&mut gx[start..start + len], g));
            }
            Op::ReplaceBlock { x, row, col, v } => {
                let (_, c) = self.nodes[x.0].value.dims2().unwrap();
                let len = self.nodes[v.0].value.len();
                let start = row * c + col;
                acc(*x, grads, &mut |gx| {
                    for (i, (d, &gi)) in gx.iter_mut().zip(g).enumerate() {
                        if i < start || i >= start + len {
                            *d += gi;
                        }
                    }
                });
                acc(*v, grads, &mut |gv| kernels::add_into(gv, &g[start..start + len]));
            }
            Op::DasPatch { b, s, a } => {
                let (bv, sv, av) = (self.val(*b), self.val(*s), self.val(*a));
                let ag = kernels::dot(av, g);
                acc(*b, grads, &mut |gb| {
                    kernels::add_into(gb, g);
                    kernels::axpy(-ag, av, gb);
                });
                acc(*s, grads, &mut |gs| kernels::axpy(ag, av, gs));
                let c = kernels::dot(sv, av) - kernels::dot(bv, av);
                acc(*a, grads, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += (sv[i] - bv[i]) * ag + c * g[i];
                    }
                });
            }
            Op::CrossEntropy { logits, targets } => {
                let Saved::Probs(probs) = &node.saved else {
                    unreachable!()
                };
                let (_, vsz) = self.nodes[logits.0].value.dims2().unwrap();
                let count = targets.iter().filter(|t| t.is_some()).count();
                let scale = g[0] / T::from_f64(count as f64);
                acc(*logits, grads, &mut |gl| {
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = t else { continue };
                        let pr = &probs[r * vsz..(r + 1) * vsz];
                        let dr = &mut gl[r * vsz..(r + 1) * vsz];
                        for j in 0..vsz {
                            dr[j] += scale * pr[j];
                        }
                        dr[*t] -= scale;
                    }
                });
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Scale(..) => "scale",
        Op::Sum(..) => "sum",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Gelu(..) => "gelu",
        Op::SoftmaxRows(..) => "softmax",
        Op::Embedding { .. } => "embedding",
        Op::GatherRows { .. } => "gather_rows",
        Op::Attention { .. } => "attention",
        Op::SliceBlock { .. } => "slice_block",
        Op::ReplaceBlock { .. } => "replace_block",
        Op::DasPatch { .. } => "das_patch",
        Op::CrossEntropy { .. } => "cross_entropy",
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) => vec![*a, *b],
        Op::Scale(x, _) | Op::Sum(x) | Op::Gelu(x) | Op::SoftmaxRows(x) => vec![*x],
        Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
        Op::Embedding { table, .. } => vec![*table],
        Op::GatherRows { x, .. } | Op::SliceBlock { x, .. } => vec![*x],
        Op::Attention { q, k, v, .. } => vec![*q, *k, *v],
        Op::ReplaceBlock { x, v, .. } => vec![*x, *v],
        Op::DasPatch { b, s, a } => vec![*b, *s, *a],
        Op::CrossEntropy { logits, .. } => vec![*logits],
    }
}

fn same_len<T: Real>(what: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.len() != b.len() {
        return Err(LabError::Dimension(format!(
            "{what}: operand sizes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Forward evaluation of one operation, shared by recording and replay.
fn eval<'a, T: Real>(
    op: &Op,
    get: impl Fn(Var) -> &'a Tensor<T>,
) -> Result<(Tensor<T>, Saved<T>)> {
    let out = match op {
        Op::Leaf => return Err(LabError::Contract("cannot evaluate a leaf".into())),
        Op::MatMul(a, b) => {
            let (a, b) = (get(*a), get(*b));
            let (m, k) = a.dims2()?;
            let (k2, n) = b.dims2()?;
            if k != k2 {
                return Err(LabError::Dimension(format!(
                    "matmul inner extents disagree: {m}x{k} by {k2}x{n}"
                )));
            }
            let mut out = vec![T::zero(); m * n];
            kernels::gemm_nn(a.data(), b.data(), &mut out, m, k, n);
            (Tensor::from_vec(vec![m, n], out)?, Saved::None)
        }
        Op::Add(a, b) => {
            let (a, b) = (get(*a), get(*b));
            same_len("add", a, b)?;
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
            (Tensor::from_vec(a.shape().to_vec(), data)?, Saved::None)
        }
        Op::AddRow(x, bias) => {
            let (x, bias) = (get(*x), get(*bias));
            let (_, c) = x.dims2()?;
            if bias.len() != c {
                return Err(LabError::Dimension(format!(
                    "bias of length {} for rows of width {c}",
                    bias.len()
                )));
            }
            let mut data = x.data().to_vec();
            for row in data.chunks_mut(c) {
                kernels::add_into(row, bias.data());
            }
            (Tensor::from_vec(x.shape().to_vec(), data)?, Saved::None)
        }
        Op::Scale(x, f) => {
            let f = T::from_f64(*f);
            (get(*x).map(|v| v * f), Saved::None)
        }
        Op::Sum(x) => {
            let mut s = T::zero();
            for &v in get(*x).data() {
                s += v;
            }
            (Tensor::scalar(s), Saved::None)
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            eps,
        } => {
            let (x, gamma, beta) = (get(*x), get(*gamma), get(*beta));
            let (rows, c) = x.dims2()?;
            if gamma.len() != c || beta.len() != c {
                return Err(LabError::Dimension("layer norm affine width mismatch".into()));
            }
            let mut out = vec![T::zero(); rows * c];
            let (means, rstds) = kernels::layer_norm(
                x.data(),
                gamma.data(),
                beta.data(),
                T::from_f64(*eps),
                rows,
                &mut out,
            );
            (
                Tensor::from_vec(x.shape().to_vec(), out)?,
                Saved::LayerNorm { means, rstds },
            )
        }
        Op::Gelu(x) => (get(*x).map(kernels::gelu), Saved::None),
        Op::SoftmaxRows(x) => {
            let x = get(*x);
            let (_, c) = x.dims2()?;
            if c == 0 {
                return Err(LabError::Dimension("softmax of an empty row".into()));
            }
            let mut data = x.data().to_vec();
            for row in data.chunks_mut(c) {
                kernels::softmax_in_place(row);
            }
            (Tensor::from_vec(x.shape().to_vec(), data)?, Saved::None)
        }
        Op::Embedding { table, ids } => {
            let table = get(*table);
            let (v, d) = table.dims2()?;
            let mut data = Vec::with_capacity(ids.len() * d);
            for &id in ids {
                if id >= v {
                    return Err(LabError::Index(format!("embedding id {id} >= table size {v}")));
                }
                data.extend_from_slice(table.row(id));
            }
            (Tensor::from_vec(vec![ids.len(), d], data)?, Saved::None)
        }
        Op::GatherRows { x, rows } => {
            let x = get(*x);
            let (r, c) = x.dims2()?;
            let mut data = Vec::with_capacity(rows.len() * c);
            for &i in rows {
                if i >= r {
                    return Err(LabError::Index(format!("row {i} >= {r}")));
                }
                data.extend_from_slice(x.row(i));
            }
            (Tensor::from_vec(vec![rows.len(), c], data)?, Saved::None)
        }
        Op::Attention {
            q,
            k,
            v,
            segments,
            heads,
        } => {
            let (q, k, v) = (get(*q), get(*k), get(*v));
            let (n, d) = q.dims2()?;
            if k.dims2()? != (n, d) || v.dims2()? != (n, d) {
                return Err(LabError::Dimension("attention q/k/v shapes differ".into()));
            }
            if *heads == 0 || d % heads != 0 {
                return Err(LabError::Dimension(format!("{d} not divisible into {heads} heads")));
            }
            let covered: usize = segments.iter().map(|s| s.1).sum();
            if segments.iter().any(|&(s, l)| s + l > n) || covered > n {
                return Err(LabError::Dimension("attention segments exceed rows".into()));
            }
            let mut out = vec![T::zero(); n * d];
            let probs = attention_forward(q.data(), k.data(), v.data(), segments, *heads, d, &mut out);
            (Tensor::from_vec(vec![n, d], out)?, Saved::Probs(probs))
        }
        Op::SliceBlock { x, row, col, len } => {
            let x = get(*x);
            let (r, c) = x.dims2()?;
            if *row >= r || col + len > c {
                return Err(LabError::Index(format!(
                    "block row {row} cols {col}..{} outside {r}x{c}",
                    col + len
                )));
            }
            let start = row * c + col;
            (Tensor::vector(x.data()[start..start + len].to_vec()), Saved::None)
        }
        Op::ReplaceBlock { x, row, col, v } => {
            let (x, v) = (get(*x), get(*v));
            let (r, c) = x.dims2()?;
            let len = v.len();
            if *row >= r || col + len > c {
                return Err(LabError::Patch(format!(
                    "patch of width {len} at row {row} col {col} outside {r}x{c}"
                )));
            }
            let mut data = x.data().to_vec();
            let start = row * c + col;
            data[start..start + len].copy_from_slice(v.data());
            (Tensor::from_vec(x.shape().to_vec(), data)?, Saved::None)
        }
        Op::DasPatch { b, s, a } => {
            let (b, s, a) = (get(*b), get(*s), get(*a));
            if b.len() != s.len() || b.len() != a.len() {
                return Err(LabError::Patch(format!(
                    "das patch dims b={} s={} a={}",
                    b.len(),
                    s.len(),
                    a.len()
                )));
            }
            let out = das_patch_values(b.data(), s.data(), a.data());
            (Tensor::from_vec(b.shape().to_vec(), out)?, Saved::None)
        }
        Op::CrossEntropy { logits, targets } => {
            let logits = get(*logits);
            let (r, vsz) = logits.dims2()?;
            if targets.len() != r {
                return Err(LabError::Dimension(format!(
                    "{} targets for {r} rows",
                    targets.len()
                )));
            }
            let count = targets.iter().filter(|t| t.is_some()).count();
            if count == 0 {
                return Err(LabError::Input("cross entropy without targets".into()));
            }
            let mut probs = vec![T::zero(); r * vsz];
            let mut total = T::zero();
            for (i, t) in targets.iter().enumerate() {
                let Some(t) = t else { continue };
                if *t >= vsz {
                    return Err(LabError::Index(format!("target {t} >= vocab {vsz}")));
                }
                let row = logits.row(i);
                let lsm = kernels::log_softmax(row);
                total += -lsm[*t];
                for j in 0..vsz {
                    probs[i * vsz + j] = lsm[j].exp();
                }
            }
            (
                Tensor::scalar(total / T::from_f64(count as f64)),
                Saved::Probs(probs),
            )
        }
    };
    Ok(out)
}

/// `b + ((s·a) − (b·a)) a`.
pub(crate) fn das_patch_values<T: Real>(b: &[T], s: &[T], a: &[T]) -> Vec<T> {
    let c = kernels::dot(s, a) - kernels::dot(b, a);
    b.iter().zip(a).map(|(&bi, &ai)| bi + c * ai).collect()
}

fn attention_forward<T: Real>(
    q: &[T],
    k: &[T],
    v: &[T],
    segments: &[(usize, usize)],
    heads: usize,
    d: usize,
    out: &mut [T],
) -> Vec<T> {
    let dh = d / heads;
    let scale = T::one() / T::from_f64(dh as f64).sqrt();
    let mut probs = Vec::new();
    let mut scores = Vec::new();
    for &(start, len) in segments {
        for h in 0..heads {
            let off = h * dh;
            for i in 0..len {
                let qi = &q[(start + i) * d + off..(start + i) * d + off + dh];
                scores.clear();
                for j in 0..=i {
                    let kj = &k[(start + j) * d + off..(start + j) * d + off + dh];
                    scores.push(kernels::dot(qi, kj) * scale);
                }
                kernels::softmax_in_place(&mut scores);
                let zi = &mut out[(start + i) * d + off..(start + i) * d + off + dh];
                for (j, &p) in scores.iter().enumerate() {
                    let vj = &v[(start + j) * d + off..(start + j) * d + off + dh];
                    kernels::axpy(p, vj, zi);
                }
                probs.extend_from_slice(&scores);
            }
        }
    }
    probs
}

#[allow(clippy::too_many_arguments)]
fn attention_backward<T: Real>(
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    g: &[T],
    segments: &[(usize, usize)],
    heads: usize,
    d: usize,
    dq: &mut [T],
    dk: &mut [T],
    dv: &mut [T],
) {
    let dh = d / heads;
    let scale = T::one() / T::from_f64(dh as f64).sqrt();
    let mut cursor = 0;
    let mut dp = Vec::new();
    for &(start, len) in segments {
        for h in 0..heads {
            let off = h * dh;
            for i in 0..len {
                let p = &probs[cursor..cursor + i + 1];
                cursor += i + 1;
                let ri = (start + i) * d + off;
                let gi = &g[ri..ri + dh];
                dp.clear();
                for j in 0..=i {
                    let rj = (start + j) * d + off;
                    dp.push(kernels::dot(gi, &v[rj..rj + dh]));
                    kernels::axpy(p[j], gi, &mut dv[rj..rj + dh]);
                }
                let pdp = kernels::dot(p, &dp);
                for j in 0..=i {
                    let ds = p[j] * (dp[j] - pdp) * scale;
                    let rj = (start + j) * d + off;
                    kernels::axpy(ds, &k[rj..rj + dh], &mut dq[ri..ri + dh]);
                    kernels::axpy(ds, &q[ri..ri + dh], &mut dk[rj..rj + dh]);
                }
            }
        }
    }
}
