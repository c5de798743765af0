use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::behavior::{mean_licensing, pair_stimuli, pearson_r, preference_rate, surprisal_quads};
use crate::das::{
    delta_odds_eval, grid, subspace_positions, train_direction, DasTrainSpec, Direction, GridCell, Interchange,
    OddsResult, RoleAssignment, TaggedSequence,
};
use crate::error::{LabError, Result};
use crate::harness::record::{num, RunWriter};
use crate::harness::{ConjunctCells, ExperimentSpec, Sweep};
use crate::lm::{HookSite, ModelConfig, ModelParams, SiteKind, Vocab};
use crate::numerics::Real;
use crate::stimgen::{
    conjunct_roles, generate_context_stimuli, role_position, sample_classic_pairs, sample_cross_pairs,
    sample_minimal_pairs, seed_for, ConjunctClass, ConjunctSpec, EncodedPair, Lexicon, Role,
};
use crate::subspace::{
    attach_scores, chunk_corpus, is_whitespace_token, normalize_scores, project_chunks, seed_sign, tokenize_corpus,
    top_chunks, Polarity, CHUNK_LEN,
};

pub const GRID_HEADER: [&str; 7] = ["site", "layer", "position", "seed", "odds", "control_odds", "delta"];
pub const BEHAVIOR_HEADER: [&str; 5] = ["conjunct_id", "p_gap", "rating", "mean_licensing", "preference_rate"];

/// Shared inputs of every experiment.
pub struct Ctx<'a, T: Real> {
    pub spec: &'a ExperimentSpec,
    pub params: &'a ModelParams<T>,
    pub vocab: &'a Vocab,
    pub lex: Lexicon,
    pub conjuncts: Vec<ConjunctSpec>,
}

/// Measured behaviour of one conjunct class.
pub struct Behavior {
    pub conjunct: ConjunctSpec,
    pub pairs: Vec<EncodedPair>,
    pub licensing: f64,
    pub preference: f64,
}

fn encode_all(pairs: &[crate::stimgen::MinimalPair], vocab: &Vocab) -> Result<Vec<EncodedPair>> {
    pairs.iter().map(|p| p.encode(vocab)).collect()
}

/// Pearson r, or NaN when it is undefined (constant input).
fn r_or_nan(xs: &[f64], ys: &[f64]) -> Result<f64> {
    match pearson_r(xs, ys) {
        Ok(r) => Ok(r),
        Err(LabError::Degenerate(_)) | Err(LabError::Input(_)) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Mean of the finite entries; NaN when there are none.
pub fn finite_mean(xs: &[f64]) -> f64 {
    let f: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if f.is_empty() {
        f64::NAN
    } else {
        f.iter().sum::<f64>() / f.len() as f64
    }
}

fn json_num(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

impl<'a, T: Real> Ctx<'a, T> {
    pub fn behavior(&self, conjuncts: &[ConjunctSpec]) -> Result<Vec<Behavior>> {
        conjuncts
            .iter()
            .map(|c| {
                let pairs = encode_all(&sample_minimal_pairs(&self.lex, c, self.spec.eval_pairs, self.spec.stimulus_seed)?, self.vocab)?;
                let licensing = mean_licensing(&surprisal_quads(self.params, &pairs)?)?;
                let preference = preference_rate(self.params, &pair_stimuli(&pairs))?;
                Ok(Behavior { conjunct: c.clone(), pairs, licensing, preference })
            })
            .collect()
    }

    fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    /// Sweep cells over the roles present in `template`, with each site's
    /// position set to the role's index there.
    pub fn sites(&self, sweep: &Sweep, template: &[Role]) -> Result<Vec<(HookSite, Role)>> {
        let c = self.config();
        let layers: Vec<usize> = sweep.layers.clone().unwrap_or_else(|| (0..c.n_layers).collect());
        let heads: Vec<usize> = sweep.heads.clone().unwrap_or_else(|| (0..c.n_heads).collect());
        let mut roles: Vec<Role> = Vec::new();
        for &r in template {
            if !roles.contains(&r) {
                roles.push(r);
            }
        }
        if let Some(wanted) = &sweep.roles {
            for r in wanted {
                if !roles.contains(r) {
                    return Err(LabError::Config(format!("sweep role {r} does not occur in the stimuli")));
                }
            }
            roles.retain(|r| wanted.contains(r));
        }
        let mut out = Vec::new();
        for &kind in &sweep.kinds {
            for &layer in &layers {
                for &role in &roles {
                    let pos = role_position(template, role).expect("role taken from the template");
                    let sites: Vec<HookSite> = match kind {
                        SiteKind::BlockOutput => vec![HookSite::block_output(layer, pos)],
                        SiteKind::MlpActivation => vec![HookSite::mlp_activation(layer, pos)],
                        SiteKind::AttnHeadOv => heads.iter().map(|&h| HookSite::attn_head_ov(layer, h, pos)).collect(),
                    };
                    for s in sites {
                        s.validate(c)?;
                        out.push((s, role));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Critical and control directions for every seed at one cell.
    fn train_cell(&self, examples: &[Interchange], site: HookSite, role: Role, spec: &DasTrainSpec, seed: u64) -> Result<[Direction; 2]> {
        let n = spec.train_pairs.min(examples.len());
        let ex = &examples[..n];
        Ok([
            train_direction(self.params, ex, site, Some(role), spec, seed)?,
            train_direction(self.params, ex, site, Some(role), &spec.as_control(), seed)?,
        ])
    }
}

pub fn site_label(site: &HookSite) -> String {
    match site.head {
        Some(h) => format!("{}.h{h}", site.kind),
        None => site.kind.to_string(),
    }
}

fn grid_row(r: &OddsResult) -> Vec<String> {
    vec![
        site_label(&r.site),
        r.site.layer.to_string(),
        r.role.map_or_else(|| r.site.position.to_string(), |x| x.to_string()),
        r.seed.to_string(),
        num(r.odds),
        num(r.control_odds),
        num(r.delta_odds),
    ]
}

fn cell_json(c: &GridCell) -> serde_json::Value {
    json!({
        "site": site_label(&c.site),
        "layer": c.site.layer,
        "position": c.role.map(|r| r.to_string()),
        "odds": json_num(c.odds),
        "control_odds": json_num(c.control_odds),
        "delta": json_num(c.delta_odds),
    })
}

fn best_cell(cells: &[GridCell]) -> Option<&GridCell> {
    cells.iter().filter(|c| c.delta_odds.is_finite()).max_by(|a, b| a.delta_odds.total_cmp(&b.delta_odds))
}

fn behavior_rows(bs: &[Behavior]) -> Vec<Vec<String>> {
    bs.iter()
        .map(|b| {
            vec![
                b.conjunct.id.clone(),
                num(b.conjunct.p_gap),
                b.conjunct.rating.map(num).unwrap_or_default(),
                num(b.licensing),
                num(b.preference),
            ]
        })
        .collect()
}

/// Per-conjunct licensing and preference, and their correlation with the
/// designed gradient and with ratings where present.
pub fn exp1<T: Real>(ctx: &Ctx<T>, w: &mut RunWriter) -> Result<serde_json::Value> {
    let bs = ctx.behavior(&ctx.conjuncts)?;
    w.csv("behavior.csv", &BEHAVIOR_HEADER, &behavior_rows(&bs))?;
    let p_gap: Vec<f64> = bs.iter().map(|b| b.conjunct.p_gap).collect();
    let lic: Vec<f64> = bs.iter().map(|b| b.licensing).collect();
    let rated: Vec<(f64, f64)> = bs.iter().filter_map(|b| b.conjunct.rating.map(|r| (r, b.licensing))).collect();
    let (ratings, rated_lic): (Vec<f64>, Vec<f64>) = rated.into_iter().unzip();
    let zero_max = bs.iter().filter(|b| b.conjunct.p_gap == 0.0).map(|b| b.licensing).fold(f64::NEG_INFINITY, f64::max);
    let high_min = bs.iter().filter(|b| b.conjunct.p_gap >= 0.75).map(|b| b.licensing).fold(f64::INFINITY, f64::min);
    Ok(json!({
        "classes": bs.len(),
        "r_p_gap": json_num(r_or_nan(&p_gap, &lic)?),
        "r_rating": json_num(r_or_nan(&ratings, &rated_lic)?),
        "zero_gap_max_licensing": json_num(zero_max),
        "high_gap_min_licensing": json_num(high_min),
        "zero_below_high": zero_max < high_min,
    }))
}

/// Directions on classic embedded-wh pairs: ΔODDS on held-out classic
/// pairs, then per-conjunct ΔODDS correlated with licensing.
pub fn exp2<T: Real>(ctx: &Ctx<T>, w: &mut RunWriter) -> Result<serde_json::Value> {
    let spec = ctx.spec;
    let das = DasTrainSpec { roles: RoleAssignment::Alternating, ..spec.das };
    let classic = encode_all(&sample_classic_pairs(&ctx.lex, das.train_pairs + spec.eval_pairs, spec.stimulus_seed)?, ctx.vocab)?;
    let (train_pairs, eval_pairs) = classic.split_at(das.train_pairs);
    let train = Interchange::alternating(train_pairs);
    let eval = Interchange::alternating(eval_pairs);
    let cells = ctx.sites(&spec.sweep, &classic[0].roles)?;

    let mut dirs: Vec<Vec<[Direction; 2]>> = Vec::new();
    let mut results = Vec::new();
    for &(site, role) in &cells {
        let mut per_seed = Vec::new();
        for &seed in &spec.seeds {
            let pair = ctx.train_cell(&train, site, role, &das, seed)?;
            results.extend(delta_odds_eval(ctx.params, &pair, &eval)?);
            per_seed.push(pair);
        }
        log::info!("exp2 {site} {role}: trained {} seeds", spec.seeds.len());
        dirs.push(per_seed);
    }
    w.csv("grid.csv", &GRID_HEADER, &results.iter().map(grid_row).collect::<Vec<_>>())?;
    let summary_cells = grid(&results);
    let best = best_cell(&summary_cells).cloned();

    let bs = ctx.behavior(&ctx.conjuncts)?;
    w.csv("behavior.csv", &BEHAVIOR_HEADER, &behavior_rows(&bs))?;
    let lic: Vec<f64> = bs.iter().map(|b| b.licensing).collect();
    let conj_evals: Vec<Vec<Interchange>> = bs.iter().map(|b| Interchange::alternating(&b.pairs)).collect();
    let mut conj_rows = Vec::new();
    let mut corr_rows = Vec::new();
    let mut best_rs = Vec::new();
    for ((site, role), per_seed) in cells.iter().zip(&dirs) {
        let is_best = best.as_ref().is_some_and(|b| b.site == *site && b.role == Some(*role));
        if spec.conjunct_cells == ConjunctCells::Best && !is_best {
            continue;
        }
        for pair in per_seed {
            let mut deltas = Vec::with_capacity(bs.len());
            for (b, ev) in bs.iter().zip(&conj_evals) {
                let r = &delta_odds_eval(ctx.params, pair, ev)?[0];
                let mut row = vec![b.conjunct.id.clone()];
                row.extend(grid_row(r));
                conj_rows.push(row);
                deltas.push(r.delta_odds);
            }
            let r = r_or_nan(&deltas, &lic)?;
            if is_best {
                best_rs.push(r);
            }
            corr_rows.push(vec![site_label(site), site.layer.to_string(), role.to_string(), pair[0].seed.to_string(), num(r)]);
        }
    }
    let mut header = vec!["conjunct_id"];
    header.extend(GRID_HEADER);
    w.csv("conjunct_grid.csv", &header, &conj_rows)?;
    w.csv("correlations.csv", &["site", "layer", "position", "seed", "r"], &corr_rows)?;
    Ok(json!({
        "cells": summary_cells.len(),
        "best": best.as_ref().map(cell_json),
        "best_mean_r": json_num(finite_mean(&best_rs)),
        "best_r_per_seed": best_rs.iter().map(|&r| json_num(r)).collect::<Vec<_>>(),
    }))
}

/// Per-seed split of the acceptable and unacceptable classes.
pub struct SeedSplit {
    pub acc_train: Vec<ConjunctSpec>,
    pub acc_hold: Vec<ConjunctSpec>,
    pub un_train: Vec<ConjunctSpec>,
    pub un_hold: Vec<ConjunctSpec>,
}

impl SeedSplit {
    pub fn draw(conjuncts: &[ConjunctSpec], train: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, "split"));
        let mut pick = |class: ConjunctClass| -> Result<(Vec<ConjunctSpec>, Vec<ConjunctSpec>)> {
            let mut xs: Vec<ConjunctSpec> = conjuncts.iter().filter(|c| c.class == class).cloned().collect();
            if xs.len() <= train {
                return Err(LabError::Config(format!("{} {} conjuncts cannot leave a holdout after {train}", xs.len(), class.as_str())));
            }
            xs.shuffle(&mut rng);
            let hold = xs.split_off(train);
            Ok((xs, hold))
        };
        let (acc_train, acc_hold) = pick(ConjunctClass::Acceptable)?;
        let (un_train, un_hold) = pick(ConjunctClass::Unacceptable)?;
        Ok(SeedSplit { acc_train, acc_hold, un_train, un_hold })
    }

    /// Held-out conjuncts in inventory order: the holdout of both classes
    /// plus every graded conjunct.
    pub fn held_out(&self, conjuncts: &[ConjunctSpec]) -> Vec<ConjunctSpec> {
        conjuncts
            .iter()
            .filter(|c| c.class == ConjunctClass::Graded || self.acc_hold.contains(c) || self.un_hold.contains(c))
            .cloned()
            .collect()
    }
}

fn cross_interchanges(ctx_lex: &Lexicon, vocab: &Vocab, bases: &[ConjunctSpec], sources: &[ConjunctSpec], n: usize, seed: u64) -> Result<Vec<Interchange>> {
    sample_cross_pairs(ctx_lex, bases, sources, n, seed)?
        .iter()
        .map(|c| Ok(Interchange::fixed(&c.base.encode(vocab)?, &c.source.encode(vocab)?)))
        .collect()
}

fn tagged_sets(bs: &[&Behavior]) -> Vec<Vec<TaggedSequence>> {
    bs.iter().map(|b| b.pairs.iter().map(|p| (p.wh.clone(), p.roles.clone())).collect()).collect()
}

/// Fixed-role directions (unextractable base, extractable source) trained
/// on one split per seed; ΔODDS and subspace-position correlations on the
/// held-out conjuncts.
pub fn exp3<T: Real>(ctx: &Ctx<T>, w: &mut RunWriter) -> Result<serde_json::Value> {
    let spec = ctx.spec;
    let das = DasTrainSpec { roles: RoleAssignment::Fixed, ..spec.das };
    let template = conjunct_roles(&ctx.conjuncts[0]);
    let cells = ctx.sites(&spec.sweep, &template)?;
    let bs = ctx.behavior(&ctx.conjuncts)?;
    w.csv("behavior.csv", &BEHAVIOR_HEADER, &behavior_rows(&bs))?;

    let mut results = Vec::new();
    let mut sub_rows = Vec::new();
    let mut pos_rows = Vec::new();
    // (cell index, |r| vs p_gap) per seed
    let mut abs_r: Vec<Vec<f64>> = vec![Vec::new(); cells.len()];
    for &seed in &spec.seeds {
        let split = SeedSplit::draw(&ctx.conjuncts, spec.split.train, seed)?;
        let train = cross_interchanges(&ctx.lex, ctx.vocab, &split.un_train, &split.acc_train, das.train_pairs, spec.stimulus_seed ^ seed)?;
        let eval = cross_interchanges(&ctx.lex, ctx.vocab, &split.un_hold, &split.acc_hold, spec.eval_pairs, spec.stimulus_seed ^ seed ^ 1)?;
        let held = split.held_out(&ctx.conjuncts);
        let held_b: Vec<&Behavior> = bs.iter().filter(|b| held.contains(&b.conjunct)).collect();
        let sets = tagged_sets(&held_b);
        let p_gap: Vec<f64> = held_b.iter().map(|b| b.conjunct.p_gap).collect();
        let rated: Vec<usize> = (0..held_b.len()).filter(|&i| held_b[i].conjunct.rating.is_some()).collect();
        for (ci, &(site, role)) in cells.iter().enumerate() {
            let pair = ctx.train_cell(&train, site, role, &das, seed)?;
            results.extend(delta_odds_eval(ctx.params, &pair, &eval)?);
            let pos = subspace_positions(ctx.params, &pair[0], &sets)?;
            let r_gap = r_or_nan(&pos, &p_gap)?.abs();
            let rated_pos: Vec<f64> = rated.iter().map(|&i| pos[i]).collect();
            let ratings: Vec<f64> = rated.iter().map(|&i| held_b[i].conjunct.rating.unwrap_or(f64::NAN)).collect();
            let r_rating = r_or_nan(&rated_pos, &ratings)?.abs();
            abs_r[ci].push(r_gap);
            let key = [site_label(&site), site.layer.to_string(), role.to_string(), seed.to_string()];
            let mut row = key.to_vec();
            row.extend([num(r_gap), num(r_rating)]);
            sub_rows.push(row);
            for (b, p) in held_b.iter().zip(&pos) {
                let mut row = key.to_vec();
                row.extend([b.conjunct.id.clone(), num(b.conjunct.p_gap), num(*p)]);
                pos_rows.push(row);
            }
        }
        log::info!("exp3 seed {seed}: {} cells", cells.len());
    }
    w.csv("grid.csv", &GRID_HEADER, &results.iter().map(grid_row).collect::<Vec<_>>())?;
    w.csv("subspace.csv", &["site", "layer", "position", "seed", "r_p_gap", "r_rating"], &sub_rows)?;
    w.csv("positions.csv", &["site", "layer", "position", "seed", "conjunct_id", "p_gap", "subspace_position"], &pos_rows)?;
    let means: Vec<f64> = abs_r.iter().map(|rs| finite_mean(rs)).collect();
    let best = (0..cells.len()).filter(|&i| means[i].is_finite()).max_by(|&a, &b| means[a].total_cmp(&means[b]));
    let odds_cells = grid(&results);
    Ok(json!({
        "cells": cells.len(),
        "best_subspace": best.map(|i| json!({
            "site": site_label(&cells[i].0),
            "layer": cells[i].0.layer,
            "position": cells[i].1.to_string(),
            "mean_abs_r": means[i],
        })),
        "best_odds": best_cell(&odds_cells).map(cell_json),
    }))
}

/// Sentence-level labels for a synthetic stream: true where the context's
/// conjunct is extractable.
fn synthetic_stream(ctx_lex: &Lexicon, vocab: &Vocab, conjuncts: &[ConjunctSpec], n: usize, seed: u64) -> Result<(Vec<usize>, Vec<bool>)> {
    let pool: Vec<ConjunctSpec> = conjuncts.iter().filter(|c| c.class != ConjunctClass::Graded).cloned().collect();
    let mut stream = Vec::new();
    let mut labels = Vec::new();
    for (ci, words) in generate_context_stimuli(ctx_lex, &pool, n, seed)? {
        let ids = vocab.encode_words(&words)?;
        labels.extend(std::iter::repeat_n(pool[ci].class == ConjunctClass::Acceptable, ids.len()));
        stream.extend(ids);
    }
    Ok((stream, labels))
}

/// Chunk pipeline: Exp-3 style directions at one site, sign-corrected by
/// their held-out licensing correlation, projected over corpus chunks.
pub fn exp4<T: Real>(ctx: &Ctx<T>, w: &mut RunWriter) -> Result<serde_json::Value> {
    let spec = ctx.spec;
    let cs = &spec.chunks;
    let das = DasTrainSpec { roles: RoleAssignment::Fixed, ..spec.das };
    let template = conjunct_roles(&ctx.conjuncts[0]);
    let focal = role_position(&template, cs.role)
        .ok_or_else(|| LabError::Config(format!("chunks.role {} does not occur in the stimuli", cs.role)))?;
    if focal >= CHUNK_LEN {
        return Err(LabError::Config(format!("focal index {focal} beyond the {CHUNK_LEN}-token chunk")));
    }
    let site = match cs.kind {
        SiteKind::BlockOutput => HookSite::block_output(cs.layer, focal),
        SiteKind::MlpActivation => HookSite::mlp_activation(cs.layer, focal),
        SiteKind::AttnHeadOv => HookSite::attn_head_ov(
            cs.layer,
            cs.head.ok_or_else(|| LabError::Config("missing field `chunks.head`".into()))?,
            focal,
        ),
    };
    site.validate(ctx.config())?;
    let bs = ctx.behavior(&ctx.conjuncts)?;

    let mut dirs = Vec::new();
    let mut signs = Vec::new();
    let mut sign_rows = Vec::new();
    for &seed in &spec.seeds {
        let split = SeedSplit::draw(&ctx.conjuncts, spec.split.train, seed)?;
        let train = cross_interchanges(&ctx.lex, ctx.vocab, &split.un_train, &split.acc_train, das.train_pairs, spec.stimulus_seed ^ seed)?;
        let d = train_direction(ctx.params, &train, site, Some(cs.role), &das, seed)?;
        let held = split.held_out(&ctx.conjuncts);
        let held_b: Vec<&Behavior> = bs.iter().filter(|b| held.contains(&b.conjunct)).collect();
        let pos = subspace_positions(ctx.params, &d, &tagged_sets(&held_b))?;
        let lic: Vec<f64> = held_b.iter().map(|b| b.licensing).collect();
        let r = r_or_nan(&pos, &lic)?;
        let s = seed_sign(&pos, &lic).unwrap_or(1.0);
        sign_rows.push(vec![seed.to_string(), num(s), num(r)]);
        signs.push(s);
        dirs.push(d);
    }
    w.csv("signs.csv", &["seed", "sign", "r_licensing"], &sign_rows)?;

    let (stream, labels) = match &cs.corpus {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| LabError::io(p, e))?;
            (tokenize_corpus(&text, ctx.vocab), None)
        }
        None => {
            let (s, l) = synthetic_stream(&ctx.lex, ctx.vocab, &ctx.conjuncts, cs.synthetic_sentences, spec.stimulus_seed)?;
            (s, Some(l))
        }
    };
    let mut chunks = chunk_corpus(&stream, ctx.vocab, CHUNK_LEN, cs.count, spec.stimulus_seed)?;
    chunks.iter_mut().for_each(|c| c.focal = focal);
    let raw = project_chunks(ctx.params, &chunks, &dirs)?;
    let scores = normalize_scores(&raw, &signs)?;
    attach_scores(&mut chunks, &raw, &scores)?;

    let mut top_rows = Vec::new();
    for polarity in [Polarity::High, Polarity::Low] {
        for (rank, c) in top_chunks(&chunks, cs.top_k, polarity, &is_whitespace_token).iter().enumerate() {
            let p = if polarity == Polarity::High { "high" } else { "low" };
            top_rows.push(vec![p.to_string(), (rank + 1).to_string(), c.id.to_string(), num(c.score), c.focal_word().to_string(), c.text.clone()]);
        }
    }
    w.csv("top_chunks.csv", &["polarity", "rank", "chunk_id", "score", "focal_word", "text"], &top_rows)?;

    let auc = match &labels {
        Some(l) => {
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            let mut label_rows = Vec::new();
            for c in &chunks {
                let extractable = l[c.id * CHUNK_LEN + c.focal];
                label_rows.push(vec![c.id.to_string(), extractable.to_string(), num(c.score)]);
                if extractable { pos.push(c.score) } else { neg.push(c.score) }
            }
            w.csv("chunk_labels.csv", &["chunk_id", "extractable", "score"], &label_rows)?;
            Some(crate::behavior::auc(&pos, &neg)?)
        }
        None => None,
    };
    w.json("chunks.json", &chunks)?;
    Ok(json!({
        "site": site_label(&site),
        "layer": site.layer,
        "position": cs.role.to_string(),
        "chunks": chunks.len(),
        "auc": auc.map(json_num),
    }))
}
