use crate::error::{LabError, Result};

/// Pearson correlation. Needs at least three points and non-zero variance
/// in both series.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(LabError::Dimension(format!("{} xs against {} ys", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(LabError::Input(format!("correlation needs at least 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(LabError::Input("correlation of non-finite values".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(LabError::Degenerate("correlation with a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Sign of a correlation, with zero mapped to `+1`.
pub fn sign_of(r: f64) -> f64 {
    if r < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Mean and population standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Area under the ROC curve: the chance a random positive outscores a
/// random negative, ties counting one half.
pub fn auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(LabError::Input("AUC needs both classes".into()));
    }
    let mut wins = 0.0;
    for &p in positives {
        for &q in negatives {
            wins += match p.partial_cmp(&q) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Equal) => 0.5,
                _ => 0.0,
            };
        }
    }
    Ok(wins / (positives.len() * negatives.len()) as f64)
}
