use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lm::forward::{block, embed, last_rows, unembed, Hook, Segment};
use crate::lm::{HookSite, ModelParams, SiteKind};
use crate::numerics::{kernels, Graph, Real, Tensor, Var};
use crate::stimgen::{role_position, EncodedPair, Role};

/// One interchange intervention: run `base`, overwrite the site's component
/// along `a` with the one computed on `source`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interchange {
    pub base: Vec<usize>,
    pub base_roles: Vec<Role>,
    pub source: Vec<usize>,
    pub source_roles: Vec<Role>,
    /// Label the base input predicts unpatched.
    pub base_label: usize,
    /// Label the patch should produce.
    pub source_label: usize,
}

impl Interchange {
    /// Base `wh`, source `th`: the patch should remove the gap.
    pub fn th_into_wh(p: &EncodedPair) -> Self {
        Interchange {
            base: p.wh.clone(),
            base_roles: p.roles.clone(),
            source: p.th.clone(),
            source_roles: p.roles.clone(),
            base_label: p.l_wh,
            source_label: p.l_th,
        }
    }

    /// Base `th`, source `wh`: the patch should introduce the gap.
    pub fn wh_into_th(p: &EncodedPair) -> Self {
        Interchange {
            base: p.th.clone(),
            base_roles: p.roles.clone(),
            source: p.wh.clone(),
            source_roles: p.roles.clone(),
            base_label: p.l_th,
            source_label: p.l_wh,
        }
    }

    /// Both directions of each pair in turn: even indices patch `th` into
    /// `wh`, odd indices `wh` into `th`.
    pub fn alternating(pairs: &[EncodedPair]) -> Vec<Self> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, p)| if i % 2 == 0 { Interchange::th_into_wh(p) } else { Interchange::wh_into_th(p) })
            .collect()
    }

    /// Fixed roles across two conjuncts: the `wh` sentence of `base` (which
    /// should continue without a gap) receives the component of the `wh`
    /// sentence of `source` (which should gap).
    pub fn fixed(base: &EncodedPair, source: &EncodedPair) -> Self {
        Interchange {
            base: base.wh.clone(),
            base_roles: base.roles.clone(),
            source: source.wh.clone(),
            source_roles: source.roles.clone(),
            base_label: base.l_th,
            source_label: source.l_wh,
        }
    }

    /// Label the objective rewards: the source's, or the base's own when
    /// training the control.
    pub fn target(&self, control: bool) -> usize {
        if control {
            self.base_label
        } else {
            self.source_label
        }
    }

    /// Site positions in base and source: by role when one is given,
    /// otherwise the site's raw index.
    pub fn positions(&self, site: &HookSite, role: Option<Role>) -> Result<(usize, usize)> {
        let find = |tokens: &[usize], roles: &[Role], which: &str| -> Result<usize> {
            let pos = match role {
                Some(r) => role_position(roles, r)
                    .ok_or_else(|| LabError::Alignment(format!("{which} has no {r} token")))?,
                None => site.position,
            };
            if pos >= tokens.len() {
                return Err(LabError::Alignment(format!(
                    "site position {pos} beyond a {}-token {which}",
                    tokens.len()
                )));
            }
            Ok(pos)
        };
        Ok((find(&self.base, &self.base_roles, "base")?, find(&self.source, &self.source_roles, "source")?))
    }
}

/// Natural-log probabilities of the two labels before and after a patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelLogProbs {
    pub pre_source: f64,
    pub pre_base: f64,
    pub post_source: f64,
    pub post_base: f64,
}

impl LabelLogProbs {
    /// `ln[p_post(src)/p_pre(src)] − ln[p_post(base)/p_pre(base)]`.
    pub fn odds(&self) -> f64 {
        (self.post_source - self.pre_source) - (self.post_base - self.pre_base)
    }
}

/// Anything an interchange direction can be trained and evaluated on.
pub trait InterventionTarget {
    /// Width `n` of the intervened vector.
    fn dim(&self) -> usize;
    /// Number of interchange examples.
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Mean cross-entropy of each example's target label with the patch
    /// along `a` applied, and its gradient with respect to `a`.
    fn loss_and_grad(&self, examples: &[usize], a: &[f64], control: bool) -> Result<(f64, Vec<f64>)>;
    fn label_log_probs(&self, examples: &[usize], a: &[f64]) -> Result<Vec<LabelLogProbs>>;
}

struct PreparedExample<T: Real> {
    /// Residual stream the remaining blocks start from, `len × d_model`.
    resid: Vec<T>,
    len: usize,
    base_pos: usize,
    source_vec: Vec<T>,
    base_label: usize,
    source_label: usize,
}

/// Interchange examples on a language model at one site, with the
/// upstream computation cached.
pub struct LmTarget<'a, T: Real = f64> {
    params: &'a ModelParams<T>,
    site: HookSite,
    examples: Vec<PreparedExample<T>>,
}

/// Captures the rows of one hook matrix at per-segment positions.
struct RowCapture<'a> {
    kind: SiteKind,
    layer: usize,
    col: usize,
    dim: usize,
    positions: &'a [usize],
}

struct CaptureHook<'a, T: Real> {
    spec: RowCapture<'a>,
    out: Vec<Vec<T>>,
}

impl<T: Real> Hook<T> for CaptureHook<'_, T> {
    fn visit(&mut self, g: &mut Graph<T>, kind: SiteKind, layer: usize, x: Var, segments: &[Segment]) -> Result<Var> {
        let s = &self.spec;
        if kind == s.kind && layer == s.layer {
            let m = g.value(x);
            let (_, w) = m.dims2()?;
            for (&(start, _), &p) in segments.iter().zip(s.positions) {
                let at = (start + p) * w + s.col;
                self.out.push(m.data()[at..at + s.dim].to_vec());
            }
        }
        Ok(x)
    }
}

/// Applies the DAS patch at one site for every segment.
struct PatchHook<'a> {
    kind: SiteKind,
    layer: usize,
    col: usize,
    dim: usize,
    a: Var,
    sources: &'a [Var],
    positions: &'a [usize],
}

impl<T: Real> Hook<T> for PatchHook<'_> {
    fn visit(&mut self, g: &mut Graph<T>, kind: SiteKind, layer: usize, mut x: Var, segments: &[Segment]) -> Result<Var> {
        if kind == self.kind && layer == self.layer {
            for ((&(start, _), &p), &s) in segments.iter().zip(self.positions).zip(self.sources) {
                let b = g.slice_block(x, start + p, self.col, self.dim)?;
                let patched = g.das_patch(b, s, self.a)?;
                x = g.replace_block(x, start + p, self.col, patched)?;
            }
        }
        Ok(x)
    }
}

/// Residual stream entering block `layer` (embeddings for layer 0), per
/// sequence, optionally capturing site rows on the way.
fn run_prefix<T: Real>(
    params: &ModelParams<T>,
    seqs: &[&[usize]],
    layer: usize,
    capture: Option<RowCapture<'_>>,
) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> {
    let config = &params.config;
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let (mut x, segments) = embed(&mut g, &vars, config, seqs)?;
    let mut hook = CaptureHook { spec: capture.unwrap_or(RowCapture { kind: SiteKind::BlockOutput, layer: usize::MAX, col: 0, dim: 0, positions: &[] }), out: vec![] };
    for (l, lv) in vars.layers.iter().enumerate().take(layer) {
        x = block(&mut g, lv, config, l, x, &segments, &mut hook)?;
    }
    let m = g.value(x);
    let d = config.d_model;
    let resid = segments.iter().map(|&(s, n)| m.data()[s * d..(s + n) * d].to_vec()).collect();
    Ok((resid, hook.out))
}

/// Site vectors of each sequence at its given position.
pub fn site_vectors<T: Real>(
    params: &ModelParams<T>,
    site: &HookSite,
    seqs: &[&[usize]],
    positions: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let c = &params.config;
    site.validate(c)?;
    if seqs.len() != positions.len() {
        return Err(LabError::Dimension(format!("{} sequences, {} positions", seqs.len(), positions.len())));
    }
    for (s, &p) in seqs.iter().zip(positions) {
        crate::lm::forward::check_vocab(c, s)?;
        if p >= s.len() {
            return Err(LabError::Alignment(format!("position {p} beyond a {}-token sequence", s.len())));
        }
    }
    let mut out = Vec::with_capacity(seqs.len());
    for (chunk, pos) in seqs.chunks(crate::lm::forward::SCORE_CHUNK).zip(positions.chunks(crate::lm::forward::SCORE_CHUNK)) {
        let cap = RowCapture { kind: site.kind, layer: site.layer, col: site.col_offset(c), dim: site.dim(c), positions: pos };
        let (_, rows) = run_prefix(params, chunk, site.layer + 1, Some(cap))?;
        out.extend(rows.into_iter().map(|r| r.into_iter().map(|v| v.as_f64()).collect::<Vec<_>>()));
    }
    Ok(out)
}

impl<'a, T: Real> LmTarget<'a, T> {
    /// Resolves positions (by `role` when given) and caches the residual
    /// stream each base run resumes from, plus each source's site vector.
    pub fn new(params: &'a ModelParams<T>, site: HookSite, role: Option<Role>, examples: &[Interchange]) -> Result<Self> {
        let c = &params.config;
        site.validate(c)?;
        let v = c.vocab_size;
        let mut positions = Vec::with_capacity(examples.len());
        for e in examples {
            crate::lm::forward::check_vocab(c, &e.base)?;
            crate::lm::forward::check_vocab(c, &e.source)?;
            if e.base_label >= v || e.source_label >= v {
                return Err(LabError::Index(format!("label outside vocabulary of {v}")));
            }
            positions.push(e.positions(&site, role)?);
        }
        // Block outputs are patched on the cached output itself; the other
        // sites are patched inside their block, so caching stops before it.
        let resume = match site.kind {
            SiteKind::BlockOutput => site.layer + 1,
            _ => site.layer,
        };
        let mut prepared = Vec::with_capacity(examples.len());
        let chunk = crate::lm::forward::SCORE_CHUNK;
        for (ex, pos) in examples.chunks(chunk).zip(positions.chunks(chunk)) {
            let bases: Vec<&[usize]> = ex.iter().map(|e| e.base.as_slice()).collect();
            let sources: Vec<&[usize]> = ex.iter().map(|e| e.source.as_slice()).collect();
            let (resid, _) = run_prefix(params, &bases, resume, None)?;
            let src_pos: Vec<usize> = pos.iter().map(|p| p.1).collect();
            let cap = RowCapture { kind: site.kind, layer: site.layer, col: site.col_offset(c), dim: site.dim(c), positions: &src_pos };
            let (_, src) = run_prefix(params, &sources, site.layer + 1, Some(cap))?;
            for (((e, r), s), p) in ex.iter().zip(resid).zip(src).zip(pos) {
                prepared.push(PreparedExample {
                    len: e.base.len(),
                    resid: r,
                    base_pos: p.0,
                    source_vec: s,
                    base_label: e.base_label,
                    source_label: e.source_label,
                });
            }
        }
        Ok(LmTarget { params, site, examples: prepared })
    }

    pub fn site(&self) -> HookSite {
        self.site
    }

    /// Builds the patched forward pass for `idx`; returns the graph, the
    /// `a` handle and the final-position logits.
    fn patched_logits(&self, idx: &[usize], a: &[f64], grad: bool) -> Result<(Graph<T>, Var, Var)> {
        let c = &self.params.config;
        let n = self.dim();
        if a.len() != n {
            return Err(LabError::Patch(format!("direction of width {} at a site of width {n}", a.len())));
        }
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let a_var = g.leaf(Tensor::vector(a.iter().map(|&v| T::from_f64(v)).collect()), grad);
        let mut rows = Vec::new();
        let mut segments = Vec::with_capacity(idx.len());
        let mut positions = Vec::with_capacity(idx.len());
        let mut sources = Vec::with_capacity(idx.len());
        for &i in idx {
            let e = self
                .examples
                .get(i)
                .ok_or_else(|| LabError::Index(format!("example {i} of {}", self.examples.len())))?;
            segments.push((rows.len() / c.d_model, e.len));
            rows.extend_from_slice(&e.resid);
            positions.push(e.base_pos);
            sources.push(g.constant(Tensor::vector(e.source_vec.clone())));
        }
        let total = rows.len() / c.d_model;
        let mut x = g.constant(Tensor::from_vec(vec![total, c.d_model], rows)?);
        let mut hook = PatchHook {
            kind: self.site.kind,
            layer: self.site.layer,
            col: self.site.col_offset(c),
            dim: n,
            a: a_var,
            sources: &sources,
            positions: &positions,
        };
        let start = match self.site.kind {
            SiteKind::BlockOutput => {
                x = Hook::<T>::visit(&mut hook, &mut g, SiteKind::BlockOutput, self.site.layer, x, &segments)?;
                self.site.layer + 1
            }
            _ => self.site.layer,
        };
        for (l, lv) in vars.layers.iter().enumerate().skip(start) {
            x = block(&mut g, lv, c, l, x, &segments, &mut hook)?;
        }
        let last = g.gather_rows(x, last_rows(&segments))?;
        let logits = unembed(&mut g, &vars, c, last)?;
        Ok((g, a_var, logits))
    }
}

impl<T: Real> InterventionTarget for LmTarget<'_, T> {
    fn dim(&self) -> usize {
        self.site.dim(&self.params.config)
    }

    fn len(&self) -> usize {
        self.examples.len()
    }

    fn loss_and_grad(&self, idx: &[usize], a: &[f64], control: bool) -> Result<(f64, Vec<f64>)> {
        let (mut g, a_var, logits) = self.patched_logits(idx, a, true)?;
        let targets = idx
            .iter()
            .map(|&i| {
                let e = &self.examples[i];
                Some(if control { e.base_label } else { e.source_label })
            })
            .collect();
        let loss = g.cross_entropy(logits, targets)?;
        let grads = g.backward(loss)?;
        let ga = grads.get(a_var);
        Ok((g.value(loss).item()?.as_f64(), ga.data().iter().map(|v| v.as_f64()).collect()))
    }

    fn label_log_probs(&self, idx: &[usize], a: &[f64]) -> Result<Vec<LabelLogProbs>> {
        // A zero direction leaves every activation bit-identical, giving the
        // unpatched run through the same code path.
        let zero = vec![0.0; a.len()];
        let mut out = Vec::with_capacity(idx.len());
        for chunk in idx.chunks(crate::lm::forward::SCORE_CHUNK) {
            let (g0, _, l0) = self.patched_logits(chunk, &zero, false)?;
            let (g1, _, l1) = self.patched_logits(chunk, a, false)?;
            for (r, &i) in chunk.iter().enumerate() {
                let e = &self.examples[i];
                let pre = kernels::log_softmax(g0.value(l0).row(r));
                let post = kernels::log_softmax(g1.value(l1).row(r));
                out.push(LabelLogProbs {
                    pre_source: pre[e.source_label].as_f64(),
                    pre_base: pre[e.base_label].as_f64(),
                    post_source: post[e.source_label].as_f64(),
                    post_base: post[e.base_label].as_f64(),
                });
            }
        }
        Ok(out)
    }
}

/// Synthetic interchange task with a known causal direction: activations
/// are `h = c + y·d* + noise` and a fixed readout predicts label `y` from
/// `d*·(h − c)`.
#[derive(Debug, Clone)]
pub struct PlantedTask {
    pub d_star: Vec<f64>,
    pub offset: Vec<f64>,
    /// Readout sharpness.
    pub gain: f64,
    pub base: Vec<Vec<f64>>,
    pub base_y: Vec<usize>,
    pub source: Vec<Vec<f64>>,
    pub source_y: Vec<usize>,
}

impl PlantedTask {
    /// `n` examples whose base and source carry opposite labels.
    pub fn generate(dim: usize, n: usize, noise: f64, seed: u64) -> Result<Self> {
        if dim < 2 || n == 0 {
            return Err(LabError::Input("planted task needs dim ≥ 2 and at least one example".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = |k: usize, scale: f64| -> Vec<f64> {
            (0..k).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect::<Vec<f64>>()
        };
        let mut d_star = gauss(dim, 1.0);
        let norm = d_star.iter().map(|v| v * v).sum::<f64>().sqrt();
        d_star.iter_mut().for_each(|v| *v /= norm);
        let offset = gauss(dim, 1.0);
        let mut t = PlantedTask { d_star, offset, gain: 8.0, base: vec![], base_y: vec![], source: vec![], source_y: vec![] };
        let mut draw = |y: usize| -> Vec<f64> {
            let mut h = gauss(dim, noise);
            for j in 0..dim {
                h[j] += t.offset[j] + y as f64 * t.d_star[j];
            }
            h
        };
        let (mut base, mut source) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            base.push(draw(i % 2));
            source.push(draw(1 - i % 2));
        }
        t.base = base;
        t.source = source;
        t.base_y = (0..n).map(|i| i % 2).collect();
        t.source_y = (0..n).map(|i| 1 - i % 2).collect();
        Ok(t)
    }

    fn logits(&self, g: &mut Graph<f64>, h: Var) -> Result<Var> {
        let n = self.d_star.len();
        let mut w = vec![0.0; n * 2];
        for j in 0..n {
            w[j * 2 + 1] = self.gain * self.d_star[j];
        }
        let centre = crate::numerics::dot(&self.d_star, &self.offset) + 0.5;
        let w = g.constant(Tensor::from_vec(vec![n, 2], w)?);
        let bias = g.constant(Tensor::vector(vec![0.0, -self.gain * centre]));
        let z = g.matmul(h, w)?;
        g.add_row(z, bias)
    }

    fn forward(&self, idx: &[usize], a: &[f64], grad: bool) -> Result<(Graph<f64>, Var, Var, Var)> {
        let n = self.d_star.len();
        if a.len() != n {
            return Err(LabError::Patch(format!("direction of width {} on a task of width {n}", a.len())));
        }
        let mut g = Graph::new();
        let a_var = g.leaf(Tensor::vector(a.to_vec()), grad);
        let mut rows = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            rows.extend_from_slice(
                self.base.get(i).ok_or_else(|| LabError::Index(format!("example {i} of {}", self.base.len())))?,
            );
        }
        let pre = g.constant(Tensor::from_vec(vec![idx.len(), n], rows)?);
        let mut x = pre;
        for (r, &i) in idx.iter().enumerate() {
            let s = g.constant(Tensor::vector(self.source[i].clone()));
            let b = g.slice_block(x, r, 0, n)?;
            let p = g.das_patch(b, s, a_var)?;
            x = g.replace_block(x, r, 0, p)?;
        }
        let pre_logits = self.logits(&mut g, pre)?;
        let post_logits = self.logits(&mut g, x)?;
        Ok((g, a_var, pre_logits, post_logits))
    }
}

impl InterventionTarget for PlantedTask {
    fn dim(&self) -> usize {
        self.d_star.len()
    }

    fn len(&self) -> usize {
        self.base.len()
    }

    fn loss_and_grad(&self, idx: &[usize], a: &[f64], control: bool) -> Result<(f64, Vec<f64>)> {
        let (mut g, a_var, _, post) = self.forward(idx, a, true)?;
        let targets = idx
            .iter()
            .map(|&i| Some(if control { self.base_y[i] } else { self.source_y[i] }))
            .collect();
        let loss = g.cross_entropy(post, targets)?;
        let grads = g.backward(loss)?;
        Ok((g.value(loss).item()?, grads.get(a_var).data().to_vec()))
    }

    fn label_log_probs(&self, idx: &[usize], a: &[f64]) -> Result<Vec<LabelLogProbs>> {
        let (g, _, pre, post) = self.forward(idx, a, false)?;
        Ok(idx
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                let p0 = kernels::log_softmax(g.value(pre).row(r));
                let p1 = kernels::log_softmax(g.value(post).row(r));
                let (s, b) = (self.source_y[i], self.base_y[i]);
                LabelLogProbs { pre_source: p0[s], pre_base: p0[b], post_source: p1[s], post_base: p1[b] }
            })
            .collect())
    }
}
