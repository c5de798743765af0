use serde::{Deserialize, Serialize};

use crate::behavior::{mean_sd, pearson_r, sign_of};
use crate::das::{site_vectors, Direction};
use crate::error::{LabError, Result};
use crate::lm::ModelParams;
use crate::numerics::Real;
use crate::subspace::ChunkRecord;

/// Raw `a·h` for every chunk (inner) and direction (outer), where `h` is
/// the activation at the direction's site and each chunk's focal position.
/// All directions must share one site.
pub fn project_chunks<T: Real>(params: &ModelParams<T>, chunks: &[ChunkRecord], directions: &[Direction]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = directions.first() else {
        return Err(LabError::Input("no directions to project onto".into()));
    };
    if directions.iter().any(|d| d.site != first.site) {
        return Err(LabError::Projection("directions disagree on the site".into()));
    }
    for c in chunks {
        if c.focal >= c.tokens.len() {
            return Err(LabError::Alignment(format!("focal position {} beyond chunk {} of {} tokens", c.focal, c.id, c.tokens.len())));
        }
    }
    let seqs: Vec<&[usize]> = chunks.iter().map(|c| c.tokens.as_slice()).collect();
    let positions: Vec<usize> = chunks.iter().map(|c| c.focal).collect();
    let hs = site_vectors(params, &first.site, &seqs, &positions)?;
    directions
        .iter()
        .map(|d| {
            d.validate()?;
            hs.iter().map(|h| d.project(h)).collect()
        })
        .collect()
}

/// Sign of the correlation between one seed's subspace positions and
/// licensing, with zero mapped to +1.
pub fn seed_sign(positions: &[f64], licensing: &[f64]) -> Result<f64> {
    Ok(sign_of(pearson_r(positions, licensing)?))
}

/// Population z-score.
pub fn z_scores(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(LabError::Input("nothing to z-score".into()));
    }
    let (mean, sd) = mean_sd(xs);
    if !(sd > 0.0) {
        return Err(LabError::Degenerate("projections have zero variance".into()));
    }
    Ok(xs.iter().map(|x| (x - mean) / sd).collect())
}

/// Per seed, multiply by the seed's sign and z-score across chunks; then
/// average the seeds chunk-wise.
pub fn normalize_scores(raw: &[Vec<f64>], signs: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(LabError::Input("no seeds to normalise".into()));
    }
    if raw.len() != signs.len() {
        return Err(LabError::Dimension(format!("{} seeds, {} signs", raw.len(), signs.len())));
    }
    let n = raw[0].len();
    let mut out = vec![0.0; n];
    for (seed, (xs, &s)) in raw.iter().zip(signs).enumerate() {
        if xs.len() != n {
            return Err(LabError::Dimension(format!("seed {seed} has {} chunks, expected {n}", xs.len())));
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(LabError::Input(format!("seed {seed} has a non-finite projection")));
        }
        let signed: Vec<f64> = xs.iter().map(|x| s * x).collect();
        let z = z_scores(&signed).map_err(|_| LabError::Degenerate(format!("seed {seed} projections have zero variance")))?;
        out.iter_mut().zip(z).for_each(|(o, v)| *o += v);
    }
    let k = raw.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

/// Copies per-seed projections and scores into the records.
pub fn attach_scores(chunks: &mut [ChunkRecord], raw: &[Vec<f64>], scores: &[f64]) -> Result<()> {
    if scores.len() != chunks.len() || raw.iter().any(|r| r.len() != chunks.len()) {
        return Err(LabError::Dimension("scores do not cover every chunk".into()));
    }
    for (i, c) in chunks.iter_mut().enumerate() {
        c.projections = raw.iter().map(|r| r[i]).collect();
        c.score = scores[i];
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    High,
    Low,
}

/// Default focal-token filter: empty or punctuation-only surface forms.
pub fn is_whitespace_token(word: &str) -> bool {
    word.chars().all(|c| !c.is_alphanumeric())
}

/// The `k` best chunks by `score` in the given polarity, skipping those
/// whose focal token `skip` rejects. Ties go to the lower chunk id.
pub fn top_chunks<'a>(chunks: &'a [ChunkRecord], k: usize, polarity: Polarity, skip: &dyn Fn(&str) -> bool) -> Vec<&'a ChunkRecord> {
    let mut kept: Vec<&ChunkRecord> = chunks.iter().filter(|c| !skip(c.focal_word())).collect();
    kept.sort_by(|a, b| {
        let ord = match polarity {
            Polarity::High => b.score.total_cmp(&a.score),
            Polarity::Low => a.score.total_cmp(&b.score),
        };
        ord.then(a.id.cmp(&b.id))
    });
    kept.truncate(k);
    kept
}

/// Chunk report serialisation.
pub fn chunks_to_json(chunks: &[ChunkRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(chunks)?)
}

pub fn chunks_from_json(text: &str) -> Result<Vec<ChunkRecord>> {
    Ok(serde_json::from_str(text)?)
}
