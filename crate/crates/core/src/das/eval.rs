use serde::{Deserialize, Serialize};

use crate::behavior::pearson_r;
use crate::das::{site_vectors, Direction, InterventionTarget, Interchange, LabelLogProbs, LmTarget};
use crate::error::{LabError, Result};
use crate::lm::{HookSite, ModelParams};
use crate::numerics::Real;
use crate::stimgen::{role_position, Role};

/// Mean ODDS of the patch along `a` over every example of `target`.
pub fn mean_odds<Tg: InterventionTarget + ?Sized>(target: &Tg, a: &[f64]) -> Result<f64> {
    if target.is_empty() {
        return Err(LabError::Input("no examples to evaluate".into()));
    }
    let idx: Vec<usize> = (0..target.len()).collect();
    let lp = target.label_log_probs(&idx, a)?;
    Ok(lp.iter().map(LabelLogProbs::odds).sum::<f64>() / lp.len() as f64)
}

/// ODDS of a single interchange under `direction`.
pub fn odds_metric<T: Real>(params: &ModelParams<T>, example: &Interchange, direction: &Direction) -> Result<f64> {
    direction.validate()?;
    let target = LmTarget::new(params, direction.site, direction.role, std::slice::from_ref(example))?;
    Ok(target.label_log_probs(&[0], &direction.a)?[0].odds())
}

/// Critical and control ODDS of one seed at one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsResult {
    pub site: HookSite,
    pub role: Option<Role>,
    pub seed: u64,
    pub odds: f64,
    pub control_odds: f64,
    pub delta_odds: f64,
}

impl OddsResult {
    pub fn new(site: HookSite, role: Option<Role>, seed: u64, odds: f64, control_odds: f64) -> Self {
        OddsResult { site, role, seed, odds, control_odds, delta_odds: odds - control_odds }
    }
}

/// Seed-averaged ODDS at one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub site: HookSite,
    pub role: Option<Role>,
    pub seeds: usize,
    pub odds: f64,
    pub control_odds: f64,
    pub delta_odds: f64,
}

/// Matches every critical direction with the control of the same site,
/// role and seed.
pub fn pair_directions(directions: &[Direction]) -> Result<Vec<(&Direction, &Direction)>> {
    let mut out = Vec::new();
    for d in directions.iter().filter(|d| !d.control) {
        let mut ctl = directions
            .iter()
            .filter(|c| c.control && c.site == d.site && c.role == d.role && c.seed == d.seed);
        let c = ctl.next().ok_or_else(|| {
            LabError::Pairing(format!("no control direction for {} seed {}", d.site, d.seed))
        })?;
        if ctl.next().is_some() {
            return Err(LabError::Pairing(format!("several controls for {} seed {}", d.site, d.seed)));
        }
        out.push((d, c));
    }
    if directions.iter().filter(|d| d.control).count() != out.len() {
        return Err(LabError::Pairing("a control direction has no critical counterpart".into()));
    }
    Ok(out)
}

/// Per-seed critical and control ODDS of each paired direction on `eval`.
pub fn delta_odds_eval<T: Real>(params: &ModelParams<T>, directions: &[Direction], eval: &[Interchange]) -> Result<Vec<OddsResult>> {
    delta_odds_with(directions, |site, role| LmTarget::new(params, site, role, eval))
}

/// As [`delta_odds_eval`] with targets built by `make_target`, called once
/// per run of directions sharing a site and role.
pub fn delta_odds_with<Tg, F>(directions: &[Direction], mut make_target: F) -> Result<Vec<OddsResult>>
where
    Tg: InterventionTarget,
    F: FnMut(HookSite, Option<Role>) -> Result<Tg>,
{
    let pairs = pair_directions(directions)?;
    let mut out = Vec::with_capacity(pairs.len());
    let mut cache: Option<(HookSite, Option<Role>, Tg)> = None;
    for (d, c) in pairs {
        d.validate()?;
        c.validate()?;
        let fresh = !matches!(&cache, Some((s, r, _)) if *s == d.site && *r == d.role);
        if fresh {
            cache = Some((d.site, d.role, make_target(d.site, d.role)?));
        }
        let target = &cache.as_ref().expect("cache filled above").2;
        out.push(OddsResult::new(d.site, d.role, d.seed, mean_odds(target, &d.a)?, mean_odds(target, &c.a)?));
    }
    Ok(out)
}

/// Averages per-seed results into one cell per (site, role), in first-seen
/// order.
pub fn grid(results: &[OddsResult]) -> Vec<GridCell> {
    let mut cells: Vec<(GridCell, f64, f64, f64)> = Vec::new();
    for r in results {
        match cells.iter_mut().find(|(c, ..)| c.site == r.site && c.role == r.role) {
            Some((c, o, k, dl)) => {
                c.seeds += 1;
                *o += r.odds;
                *k += r.control_odds;
                *dl += r.delta_odds;
            }
            None => cells.push((
                GridCell { site: r.site, role: r.role, seeds: 1, odds: 0.0, control_odds: 0.0, delta_odds: 0.0 },
                r.odds,
                r.control_odds,
                r.delta_odds,
            )),
        }
    }
    cells
        .into_iter()
        .map(|(mut c, o, k, dl)| {
            let n = c.seeds as f64;
            c.odds = o / n;
            c.control_odds = k / n;
            c.delta_odds = dl / n;
            c
        })
        .collect()
}

/// A tokenised stimulus with its role tags.
pub type TaggedSequence = (Vec<usize>, Vec<Role>);

/// Mean subspace position `a·h` over each set's sequences, at the
/// direction's site (aligned by role when the direction has one).
pub fn subspace_positions<T: Real>(params: &ModelParams<T>, direction: &Direction, sets: &[Vec<TaggedSequence>]) -> Result<Vec<f64>> {
    direction.validate()?;
    let mut out = Vec::with_capacity(sets.len());
    for (i, set) in sets.iter().enumerate() {
        if set.is_empty() {
            return Err(LabError::Input(format!("evaluation set {i} is empty")));
        }
        let mut seqs = Vec::with_capacity(set.len());
        let mut positions = Vec::with_capacity(set.len());
        for (tokens, roles) in set {
            let p = match direction.role {
                Some(r) => role_position(roles, r)
                    .ok_or_else(|| LabError::Alignment(format!("sequence has no {r} token")))?,
                None => direction.site.position,
            };
            seqs.push(tokens.as_slice());
            positions.push(p);
        }
        let hs = site_vectors(params, &direction.site, &seqs, &positions)?;
        let mut total = 0.0;
        for h in &hs {
            total += direction.project(h)?;
        }
        out.push(total / hs.len() as f64);
    }
    Ok(out)
}

/// `|r|` between per-set subspace positions and `targets`.
pub fn subspace_correlation<T: Real>(
    params: &ModelParams<T>,
    direction: &Direction,
    sets: &[Vec<TaggedSequence>],
    targets: &[f64],
) -> Result<f64> {
    if sets.len() < 3 {
        return Err(LabError::Input(format!("need at least 3 evaluation sets, got {}", sets.len())));
    }
    if sets.len() != targets.len() {
        return Err(LabError::Dimension(format!("{} sets, {} targets", sets.len(), targets.len())));
    }
    position_correlation(&subspace_positions(params, direction, sets)?, targets)
}

/// `|r|` between subspace positions and targets.
pub fn position_correlation(positions: &[f64], targets: &[f64]) -> Result<f64> {
    Ok(pearson_r(positions, targets)?.abs())
}
