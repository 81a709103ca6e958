use rand::seq::SliceRandom;

use super::loss::Objective;
use super::model::{Batch, Model};
use super::params::ParamVector;
use crate::error::Result;
use crate::rng;

pub const STEP: f64 = 1e-3;
pub const SAMPLE_FRACTION: f64 = 0.05;
/// Lower bound on the relative-error denominator.
pub const DENOM_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

/// Central-difference check of `analytic` at `theta` over a random 5% of coordinates.
///
/// Uses the fourth-order stencil at `±STEP, ±2·STEP`. `eval` returns the loss
/// and the ReLU activation pattern; coordinates whose perturbation flips an
/// activation straddle a kink and are replaced by others.
pub fn check_gradient<F>(theta: &[f64], analytic: &[f64], eval: F, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<bool>)>,
{
    let (_, pattern) = eval(theta)?;
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.shuffle(&mut rng::rng_from_seed(seed));
    let wanted = ((SAMPLE_FRACTION * theta.len() as f64).ceil() as usize).max(1);
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut point = theta.to_vec();
    for i in order {
        if checked == wanted {
            break;
        }
        let mut values = [0.0; 4];
        let mut kink = false;
        for (v, k) in values.iter_mut().zip([-2.0, -1.0, 1.0, 2.0]) {
            point[i] = theta[i] + k * STEP;
            let (loss, p) = eval(&point)?;
            *v = loss;
            kink |= p != pattern;
        }
        point[i] = theta[i];
        if kink {
            continue;
        }
        let numeric = (values[0] - 8.0 * values[1] + 8.0 * values[2] - values[3]) / (12.0 * STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
        checked += 1;
    }
    Ok(worst)
}

/// Maximum relative gradient error of `objective` for `model` at `params`.
pub fn grad_check(model: &Model, params: &ParamVector, batch: &Batch, objective: &Objective, seed: u64) -> Result<f64> {
    let theta = params.to_f64();
    let (_, analytic) = model.loss_and_grad(&theta, batch, objective)?;
    check_gradient(&theta, &analytic, |t| model.loss_value(t, batch, objective), seed)
}
