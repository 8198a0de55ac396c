use crate::error::Result;

use super::conet::{conet_backward, conet_forward, ModelParams};
use super::loss::masked_bce_loss;
use super::tensor::Tensor4;

/// Worst disagreement between analytic and central-difference gradients
/// within one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerCheck {
    pub layer: usize,
    pub params: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare every parameter's analytic gradient against
/// `(L(θ + ε) − L(θ − ε)) / 2ε`.
///
/// `floor` keeps the relative error meaningful for gradients that are zero
/// up to rounding.
pub fn gradcheck(
    params: &ModelParams<f64>,
    input: &Tensor4<f64>,
    bits: &[u8],
    mask: &[bool],
    eps: f64,
    floor: f64,
) -> Result<Vec<LayerCheck>> {
    let (out, cache) = conet_forward(params, input)?;
    let (_, grads) = conet_backward(params, &cache, &out, bits, mask)?;
    let loss_at = |p: &ModelParams<f64>| -> Result<f64> {
        let (o, _) = conet_forward(p, input)?;
        masked_bce_loss(&o, bits, mask)
    };
    let mut probe = params.clone();
    let mut report = Vec::with_capacity(params.layers.len());
    for (li, g) in grads.layers.iter().enumerate() {
        let mut worst = LayerCheck {
            layer: li,
            params: g.param_count(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        let n_w = g.weight.len();
        for j in 0..g.param_count() {
            let (analytic, slot) = if j < n_w {
                (g.weight[j], (true, j))
            } else {
                (g.bias[j - n_w], (false, j - n_w))
            };
            let set = |p: &mut ModelParams<f64>, v: f64| {
                let l = &mut p.layers[li];
                if slot.0 {
                    l.weight[slot.1] = v;
                } else {
                    l.bias[slot.1] = v;
                }
            };
            let orig = if slot.0 {
                params.layers[li].weight[slot.1]
            } else {
                params.layers[li].bias[slot.1]
            };
            set(&mut probe, orig + eps);
            let plus = loss_at(&probe)?;
            set(&mut probe, orig - eps);
            let minus = loss_at(&probe)?;
            set(&mut probe, orig);
            let numeric = (plus - minus) / (2.0 * eps);
            worst.max_rel_error = worst
                .max_rel_error
                .max(relative_error(analytic, numeric, floor));
            worst.max_abs_error = worst.max_abs_error.max((analytic - numeric).abs());
        }
        report.push(worst);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-8), 0.0);
        assert!((relative_error(1.0, 1.1, 1e-8) - 0.1 / 1.1).abs() < 1e-15);
        assert_eq!(relative_error(0.0, 1e-12, 1e-6), 1e-6);
    }
}
