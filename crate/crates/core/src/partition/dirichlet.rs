//! Symmetric Dirichlet sampling that stays finite for tiny concentrations.
//!
//! For `alpha < 1` a Gamma(alpha) draw is taken as
//! `Gamma(alpha + 1) · U^(1/alpha)` in log space, so proportions never
//! underflow to an all-zero vector.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::rng;

fn log_gamma_sample(alpha: f64, rng: &mut rng::Rng) -> f64 {
    if alpha >= 1.0 {
        let g = Gamma::new(alpha, 1.0).expect("alpha validated").sample(rng);
        return g.max(f64::MIN_POSITIVE).ln();
    }
    let g = Gamma::new(alpha + 1.0, 1.0).expect("alpha validated").sample(rng);
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    g.max(f64::MIN_POSITIVE).ln() + u.ln() / alpha
}

/// One draw from Dirichlet(alpha · 1_k).
pub fn sample_symmetric(alpha: f64, k: usize, rng: &mut rng::Rng) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParam(format!("Dirichlet concentration must be positive, got {alpha}")));
    }
    if k == 0 {
        return Err(Error::InvalidParam("Dirichlet dimension must be positive".into()));
    }
    let logs: Vec<f64> = (0..k).map(|_| log_gamma_sample(alpha, rng)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Split `total` items according to `proportions` with largest-remainder rounding.
/// Remainder ties go to the lower index.
pub fn largest_remainder(total: usize, proportions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}
