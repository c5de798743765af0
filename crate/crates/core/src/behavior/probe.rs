use std::collections::HashMap;

use crate::error::{LabError, Result};

/// Word vectors read from the whitespace-separated text format.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    /// One word per line followed by its components. Blank lines are
    /// skipped; ragged rows and repeated words are parse errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut index = HashMap::new();
        let mut vectors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let row = i + 1;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let v: Vec<f64> = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| LabError::Parse { row, message: format!("bad component: {e}") })?;
            if v.is_empty() {
                return Err(LabError::Parse { row, message: format!("{word:?} has no components") });
            }
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(LabError::Parse { row, message: format!("expected {d} components, got {}", v.len()) })
                }
                _ => {}
            }
            if index.insert(word.to_string(), vectors.len()).is_some() {
                return Err(LabError::Parse { row, message: format!("duplicate word {word:?}") });
            }
            vectors.push(v);
        }
        let dim = dim.ok_or_else(|| LabError::Input("embedding file is empty".into()))?;
        Ok(EmbeddingTable { dim, index, vectors })
    }

    pub fn from_pairs(pairs: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let text: String = pairs
            .iter()
            .map(|(w, v)| {
                let comps: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                format!("{w} {}\n", comps.join(" "))
            })
            .collect();
        EmbeddingTable::parse(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.vectors[i].as_slice())
    }

    /// Mean of the vectors of every word in `phrase`.
    pub fn average(&self, phrase: &[&str]) -> Result<Vec<f64>> {
        if phrase.is_empty() {
            return Err(LabError::Input("cannot average an empty phrase".into()));
        }
        let mut acc = vec![0.0; self.dim];
        for w in phrase {
            let v = self
                .get(w)
                .ok_or_else(|| LabError::Input(format!("no embedding for {w:?}")))?;
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        let n = phrase.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }
}

/// L2 weight on the coefficient vector (the intercept is unpenalised).
pub const LOGISTIC_L2: f64 = 1.0;
/// Gradient-norm stopping tolerance.
pub const LOGISTIC_TOL: f64 = 1e-8;
const LOGISTIC_MAX_ITERS: usize = 200_000;

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `Σ log(1 + exp(−ỹ·(w·x + b))) + λ/2 ‖w‖²` with `ỹ ∈ {−1, +1}`.
fn objective(xs: &[&[f64]], ys: &[bool], w: &[f64], b: f64) -> f64 {
    let mut j = 0.5 * LOGISTIC_L2 * w.iter().map(|v| v * v).sum::<f64>();
    for (x, &y) in xs.iter().zip(ys) {
        let z = x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
        j += log1p_exp(if y { -z } else { z });
    }
    j
}

fn gradient(xs: &[&[f64]], ys: &[bool], w: &[f64], b: f64) -> (Vec<f64>, f64) {
    let mut gw: Vec<f64> = w.iter().map(|v| LOGISTIC_L2 * v).collect();
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
        let r = sigmoid(z) - if y { 1.0 } else { 0.0 };
        for (g, a) in gw.iter_mut().zip(x.iter()) {
            *g += r * a;
        }
        gb += r;
    }
    (gw, gb)
}

/// Fits the regularised logistic regression by gradient descent. Each
/// line search starts from the Barzilai-Borwein step and backtracks until
/// the Armijo condition holds. Returns `(w, b)`.
pub fn fit_logistic(xs: &[&[f64]], ys: &[bool]) -> (Vec<f64>, f64) {
    let d = xs.first().map_or(0, |x| x.len());
    let mut th = vec![0.0; d + 1];
    let split = |th: &[f64]| (th[..d].to_vec(), th[d]);
    let grad = |th: &[f64]| {
        let (w, b) = split(th);
        let (mut gw, gb) = gradient(xs, ys, &w, b);
        gw.push(gb);
        gw
    };
    let obj = |th: &[f64]| {
        let (w, b) = split(th);
        objective(xs, ys, &w, b)
    };
    let mut j = obj(&th);
    let mut g = grad(&th);
    let mut step = 1.0 / (LOGISTIC_L2 + xs.len() as f64);
    for _ in 0..LOGISTIC_MAX_ITERS {
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < LOGISTIC_TOL {
            break;
        }
        let (next, nj) = loop {
            let cand: Vec<f64> = th.iter().zip(&g).map(|(t, v)| t - step * v).collect();
            let cj = obj(&cand);
            if cj <= j - 1e-4 * step * gnorm2 {
                break (cand, cj);
            }
            step *= 0.5;
            if step < 1e-20 {
                return split(&th);
            }
        };
        let ng = grad(&next);
        let s: Vec<f64> = next.iter().zip(&th).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        if sy > 0.0 {
            step = ss / sy;
        }
        th = next;
        j = nj;
        g = ng;
    }
    split(&th)
}

/// Leave-one-out accuracy of the regularised logistic regression. A
/// held-out point is predicted positive when its score is above zero.
pub fn logistic_loo(features: &[Vec<f64>], labels: &[bool]) -> Result<f64> {
    if features.len() != labels.len() {
        return Err(LabError::Dimension(format!("{} feature rows, {} labels", features.len(), labels.len())));
    }
    if features.len() < 4 {
        return Err(LabError::Input("leave-one-out needs at least 4 examples".into()));
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(LabError::Input("both classes must be present".into()));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(LabError::Dimension("ragged feature vectors".into()));
    }
    let mut correct = 0usize;
    for held in 0..features.len() {
        let xs: Vec<&[f64]> = (0..features.len()).filter(|&i| i != held).map(|i| features[i].as_slice()).collect();
        let ys: Vec<bool> = (0..labels.len()).filter(|&i| i != held).map(|i| labels[i]).collect();
        let (w, b) = fit_logistic(&xs, &ys);
        let z = features[held].iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
        if (z > 0.0) == labels[held] {
            correct += 1;
        }
    }
    Ok(correct as f64 / features.len() as f64)
}
