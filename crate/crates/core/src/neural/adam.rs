use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

use super::conet::{GradientSet, ModelParams};
use super::tensor::Real;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<R> {
    pub config: AdamConfig,
    pub first: GradientSet<R>,
    pub second: GradientSet<R>,
    pub step: u64,
}

impl<R: Real> AdamState<R> {
    pub fn new(params: &ModelParams<R>, config: AdamConfig) -> Self {
        Self {
            config,
            first: GradientSet::zeros_like(params),
            second: GradientSet::zeros_like(params),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update; bumps the parameter version.
pub fn adam_step<R: Real>(
    params: &mut ModelParams<R>,
    grads: &GradientSet<R>,
    state: &mut AdamState<R>,
) -> Result<()> {
    let congruent = |g: &GradientSet<R>| {
        g.layers.len() == params.layers.len()
            && g.layers
                .iter()
                .zip(&params.layers)
                .all(|(a, b)| a.same_shape(b))
    };
    if !congruent(grads) || !congruent(&state.first) || !congruent(&state.second) {
        return Err(config_err(
            "adam_step: gradient/state shapes differ from parameters",
        ));
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let (b1, b2) = (R::of(c.beta1), R::of(c.beta2));
    let (one_b1, one_b2) = (R::of(1.0 - c.beta1), R::of(1.0 - c.beta2));
    let corr1 = R::of(1.0 - c.beta1.powi(t));
    let corr2 = R::of(1.0 - c.beta2.powi(t));
    let lr = R::of(c.lr);
    let eps = R::of(c.eps);

    for (li, layer) in params.layers.iter_mut().enumerate() {
        let g = &grads.layers[li];
        let m = &mut state.first.layers[li];
        let v = &mut state.second.layers[li];
        let groups = [
            (&mut layer.weight, &g.weight, &mut m.weight, &mut v.weight),
            (&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias),
        ];
        for (p, g, m, v) in groups {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let mhat = m[i] / corr1;
                let vhat = v[i] / corr2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
    params.version += 1;
    Ok(())
}
