use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 5e-3,
            weight_decay: 1e-5,
        }
    }
}

impl OptimizerConfig {
    pub fn build(&self, num_params: usize) -> Optimizer {
        Optimizer {
            config: *self,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// SGD or Adam with L2 weight decay; moments stay with the owner.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.t = 0;
    }

    /// One update. `frozen` lists segment indices left untouched.
    pub fn step(&mut self, params: &mut ParamVector, grad: &[f64], frozen: &[usize]) -> Result<()> {
        if grad.len() != params.len() {
            return Err(Error::DimensionMismatch {
                what: "gradient".into(),
                expected: params.len(),
                found: grad.len(),
            });
        }
        for seg in params.layout().segments() {
            if let Some(k) = grad[seg.range()].iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {} at index {k}", seg.name)));
            }
        }
        let mut active = vec![true; params.len()];
        for &s in frozen {
            let seg = &params.layout().segments()[s];
            active[seg.range()].fill(false);
        }
        let OptimizerConfig { kind, lr, weight_decay } = self.config;
        self.t += 1;
        let (c1, c2) = (1.0 - BETA1.powi(self.t), 1.0 - BETA2.powi(self.t));
        for (i, p) in params.as_mut_slice().iter_mut().enumerate() {
            if !active[i] {
                continue;
            }
            let w = *p as f64;
            let g = grad[i] + weight_decay * w;
            let next = match kind {
                OptimizerKind::Sgd => w - lr * g,
                OptimizerKind::Adam => {
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
                    w - lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS)
                }
            };
            *p = next as f32;
        }
        if params.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameters after optimizer step".into()));
        }
        Ok(())
    }
}
