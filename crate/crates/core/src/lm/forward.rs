use std::collections::BTreeMap;

use crate::error::{LabError, Result};
use crate::lm::{HookSite, LayerVars, ModelConfig, ModelParams, ModelVars, SiteKind};
use crate::numerics::{kernels, Graph, Real, Tensor, Var};

/// Rows `[start, start + len)` of a packed batch belong to one sequence.
pub type Segment = (usize, usize);

/// Called with the full activation matrix at every hook point. The returned
/// handle replaces the activation downstream.
pub trait Hook<T: Real> {
    fn visit(
        &mut self,
        g: &mut Graph<T>,
        kind: SiteKind,
        layer: usize,
        x: Var,
        segments: &[Segment],
    ) -> Result<Var>;
}

/// Leaves every activation untouched.
pub struct NoHook;

impl<T: Real> Hook<T> for NoHook {
    fn visit(&mut self, _: &mut Graph<T>, _: SiteKind, _: usize, x: Var, _: &[Segment]) -> Result<Var> {
        Ok(x)
    }
}

/// Copies every hook matrix, keyed by `(kind, layer)`.
#[derive(Debug, Default)]
pub struct Recorder<T: Real> {
    pub matrices: BTreeMap<(SiteKind, usize), Tensor<T>>,
}

impl<T: Real> Hook<T> for Recorder<T> {
    fn visit(&mut self, g: &mut Graph<T>, kind: SiteKind, layer: usize, x: Var, _: &[Segment]) -> Result<Var> {
        self.matrices.insert((kind, layer), g.value(x).clone());
        Ok(x)
    }
}

/// Packs sequences into one matrix of rows and embeds them.
pub fn embed<T: Real>(
    g: &mut Graph<T>,
    vars: &ModelVars,
    config: &ModelConfig,
    batch: &[&[usize]],
) -> Result<(Var, Vec<Segment>)> {
    let mut ids = Vec::new();
    let mut positions = Vec::new();
    let mut segments = Vec::with_capacity(batch.len());
    for seq in batch {
        if seq.is_empty() {
            return Err(LabError::Input("empty token sequence".into()));
        }
        if seq.len() > config.max_seq_len {
            return Err(LabError::Index(format!(
                "sequence of {} tokens exceeds context {}",
                seq.len(),
                config.max_seq_len
            )));
        }
        segments.push((ids.len(), seq.len()));
        ids.extend_from_slice(seq);
        positions.extend(0..seq.len());
    }
    if ids.is_empty() {
        return Err(LabError::Input("empty batch".into()));
    }
    let tok = g.embedding(vars.tok_emb, ids)?;
    let pos = g.embedding(vars.pos_emb, positions)?;
    Ok((g.add(tok, pos)?, segments))
}

fn linear<T: Real>(g: &mut Graph<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

/// One pre-layernorm block. Hook order within the block: attention heads,
/// MLP activation, block output.
pub fn block<T: Real>(
    g: &mut Graph<T>,
    lv: &LayerVars,
    config: &ModelConfig,
    layer: usize,
    x: Var,
    segments: &[Segment],
    hook: &mut dyn Hook<T>,
) -> Result<Var> {
    let eps = config.eps();
    let h = g.layer_norm(x, lv.ln1_gamma, lv.ln1_beta, eps)?;
    let q = linear(g, h, lv.w_q, lv.b_q)?;
    let k = linear(g, h, lv.w_k, lv.b_k)?;
    let v = linear(g, h, lv.w_v, lv.b_v)?;
    let z = g.attention(q, k, v, segments.to_vec(), config.n_heads)?;
    let z = hook.visit(g, SiteKind::AttnHeadOv, layer, z, segments)?;
    let attn = linear(g, z, lv.w_o, lv.b_o)?;
    let x = g.add(x, attn)?;
    let h = g.layer_norm(x, lv.ln2_gamma, lv.ln2_beta, eps)?;
    let m = linear(g, h, lv.w_in, lv.b_in)?;
    let m = g.gelu(m)?;
    let m = hook.visit(g, SiteKind::MlpActivation, layer, m, segments)?;
    let out = linear(g, m, lv.w_out, lv.b_out)?;
    let x = g.add(x, out)?;
    hook.visit(g, SiteKind::BlockOutput, layer, x, segments)
}

/// Runs blocks `start_layer..` on the residual stream `x`.
pub fn blocks_from<T: Real>(
    g: &mut Graph<T>,
    vars: &ModelVars,
    config: &ModelConfig,
    start_layer: usize,
    mut x: Var,
    segments: &[Segment],
    hook: &mut dyn Hook<T>,
) -> Result<Var> {
    for (layer, lv) in vars.layers.iter().enumerate().skip(start_layer) {
        x = block(g, lv, config, layer, x, segments, hook)?;
    }
    Ok(x)
}

/// Final layernorm and unembedding of the given residual rows.
pub fn unembed<T: Real>(g: &mut Graph<T>, vars: &ModelVars, config: &ModelConfig, x: Var) -> Result<Var> {
    let h = g.layer_norm(x, vars.lnf_gamma, vars.lnf_beta, config.eps())?;
    g.matmul(h, vars.unembed)
}

/// Last row of every segment.
pub fn last_rows(segments: &[Segment]) -> Vec<usize> {
    segments.iter().map(|&(s, l)| s + l - 1).collect()
}

/// Full forward over a packed batch; logits for every row.
pub fn forward_graph<T: Real>(
    g: &mut Graph<T>,
    vars: &ModelVars,
    config: &ModelConfig,
    batch: &[&[usize]],
    hook: &mut dyn Hook<T>,
) -> Result<(Var, Vec<Segment>)> {
    let (x, segments) = embed(g, vars, config, batch)?;
    let x = blocks_from(g, vars, config, 0, x, &segments, hook)?;
    Ok((unembed(g, vars, config, x)?, segments))
}

/// Logits and captured site vectors of one sequence.
#[derive(Debug, Clone)]
pub struct ForwardOutput<T: Real = f64> {
    /// `seq × V`.
    pub logits: Tensor<T>,
    /// One entry per requested capture site, in request order.
    pub captured: Vec<(HookSite, Vec<T>)>,
}

struct SiteHook<'a, T: Real> {
    config: &'a ModelConfig,
    capture: &'a [HookSite],
    patch: &'a [(HookSite, Vec<T>)],
    captured: Vec<Option<Vec<T>>>,
}

impl<T: Real> Hook<T> for SiteHook<'_, T> {
    fn visit(&mut self, g: &mut Graph<T>, kind: SiteKind, layer: usize, mut x: Var, _: &[Segment]) -> Result<Var> {
        let c = self.config;
        for (i, site) in self.capture.iter().enumerate() {
            if site.kind == kind && site.layer == layer {
                let (_, width) = g.value(x).dims2()?;
                let start = site.position * width + site.col_offset(c);
                self.captured[i] = Some(g.value(x).data()[start..start + site.dim(c)].to_vec());
            }
        }
        for (site, v) in self.patch {
            if site.kind == kind && site.layer == layer {
                let pv = g.constant(Tensor::vector(v.clone()));
                x = g.replace_block(x, site.position, site.col_offset(c), pv)?;
            }
        }
        Ok(x)
    }
}

fn check_site(site: &HookSite, config: &ModelConfig, seq_len: usize) -> Result<()> {
    site.validate(config)?;
    if site.position >= seq_len {
        return Err(LabError::Index(format!(
            "site position {} outside a {seq_len}-token sequence",
            site.position
        )));
    }
    Ok(())
}

/// Forward one sequence, reading activations at `capture` (values before
/// any patch at the same point) and overwriting the vectors in `patch`.
pub fn forward_with_hooks<T: Real>(
    params: &ModelParams<T>,
    tokens: &[usize],
    capture: &[HookSite],
    patch: &[(HookSite, Vec<T>)],
) -> Result<ForwardOutput<T>> {
    let config = &params.config;
    for site in capture {
        check_site(site, config, tokens.len())?;
    }
    for (site, v) in patch {
        check_site(site, config, tokens.len())?;
        if v.len() != site.dim(config) {
            return Err(LabError::Patch(format!(
                "patch for {site} has {} values, site width is {}",
                v.len(),
                site.dim(config)
            )));
        }
    }
    check_vocab(config, tokens)?;
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let mut hook = SiteHook {
        config,
        capture,
        patch,
        captured: vec![None; capture.len()],
    };
    let (logits, _) = forward_graph(&mut g, &vars, config, &[tokens], &mut hook)?;
    let captured = capture
        .iter()
        .zip(hook.captured)
        .map(|(s, v)| (*s, v.expect("every validated site is visited")))
        .collect();
    Ok(ForwardOutput {
        logits: g.value(logits).clone(),
        captured,
    })
}

pub(crate) fn check_vocab(config: &ModelConfig, tokens: &[usize]) -> Result<()> {
    match tokens.iter().find(|&&t| t >= config.vocab_size) {
        Some(t) => Err(LabError::Index(format!(
            "token id {t} outside vocabulary of {}",
            config.vocab_size
        ))),
        None => Ok(()),
    }
}

/// Sequences scored per graph, bounding activation memory.
pub const SCORE_CHUNK: usize = 128;

/// Log-probabilities of the next token after each prefix.
pub fn next_token_log_probs<T: Real>(params: &ModelParams<T>, prefixes: &[&[usize]]) -> Result<Vec<Vec<T>>> {
    let config = &params.config;
    for p in prefixes {
        check_vocab(config, p)?;
    }
    let mut out = Vec::with_capacity(prefixes.len());
    for chunk in prefixes.chunks(SCORE_CHUNK) {
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let (x, segments) = embed(&mut g, &vars, config, chunk)?;
        let x = blocks_from(&mut g, &vars, config, 0, x, &segments, &mut NoHook)?;
        let last = g.gather_rows(x, last_rows(&segments))?;
        let logits = unembed(&mut g, &vars, config, last)?;
        let logits = g.value(logits);
        out.extend((0..chunk.len()).map(|i| kernels::log_softmax(logits.row(i))));
    }
    Ok(out)
}

/// `−ln p(label | prefix)` in nats.
pub fn surprisal<T: Real>(params: &ModelParams<T>, prefix: &[usize], label: usize) -> Result<f64> {
    Ok(surprisals(params, &[(prefix, label)])?[0])
}

/// Batched [`surprisal`].
pub fn surprisals<T: Real>(params: &ModelParams<T>, queries: &[(&[usize], usize)]) -> Result<Vec<f64>> {
    let v = params.config.vocab_size;
    for (prefix, label) in queries {
        if prefix.is_empty() {
            return Err(LabError::Input("surprisal needs a non-empty prefix".into()));
        }
        if *label >= v {
            return Err(LabError::Index(format!("label {label} outside vocabulary of {v}")));
        }
    }
    let prefixes: Vec<&[usize]> = queries.iter().map(|q| q.0).collect();
    let lps = next_token_log_probs(params, &prefixes)?;
    Ok(lps
        .iter()
        .zip(queries)
        .map(|(lp, (_, label))| -lp[*label].as_f64())
        .collect())
}
