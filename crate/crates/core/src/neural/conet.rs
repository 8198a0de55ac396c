//! Compact two-subnet convolutional receiver network.
//!
//! Topology:
//!
//! ```text
//! x0 = relu(conv_in(input))          main = support = x0
//! for each block b:
//!     main'    = main    + conv_m2(relu(conv_m1(main)))
//!     support' = support + conv_s2(relu(conv_s1(support)))
//!     main     = main' ⊙ support'     support = support'
//! llr = conv_out(main)
//! ```
//!
//! Both subnets share the input layer. The element-wise product after every
//! block is the only interaction between them.
//!
//! Parameter layout in [`ModelParams::layers`]: `[input, main (2 per block),
//! support (2 per block), output]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::seeds;

use super::conv::{conv2d, conv2d_backward, ConvLayerParams};
use super::loss::masked_bce_grad;
use super::tensor::{Real, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoNetConfig {
    /// Input feature channels (L).
    pub in_channels: usize,
    /// Width of each subnet.
    pub hidden: usize,
    /// Number of parallel main/support block pairs.
    pub blocks: usize,
    /// Square kernel side, odd.
    pub kernel: usize,
    /// Bits per symbol, log2(Q).
    pub out_channels: usize,
    /// Upper bound on the trainable parameter count, if any.
    #[serde(default)]
    pub param_budget: Option<usize>,
}

impl Default for CoNetConfig {
    /// Two antennas, 64-QAM, four blocks of width 64 (about 598k parameters).
    fn default() -> Self {
        Self {
            in_channels: 7,
            hidden: 64,
            blocks: 4,
            kernel: 3,
            out_channels: 6,
            param_budget: None,
        }
    }
}

impl CoNetConfig {
    pub fn layer_count(&self) -> usize {
        2 + 4 * self.blocks
    }

    /// Parameter count implied by the layer shapes.
    pub fn param_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let conv = |cin: usize, cout: usize| k2 * cin * cout + cout;
        conv(self.in_channels, self.hidden)
            + 4 * self.blocks * conv(self.hidden, self.hidden)
            + conv(self.hidden, self.out_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.hidden == 0 || self.out_channels == 0 {
            return Err(config_err("network channel counts must be positive"));
        }
        if self.kernel % 2 == 0 {
            return Err(config_err(format!(
                "kernel size {} must be odd",
                self.kernel
            )));
        }
        if let Some(budget) = self.param_budget {
            let count = self.param_count();
            if count > budget {
                return Err(config_err(format!(
                    "network has {count} parameters, budget is {budget}"
                )));
            }
        }
        Ok(())
    }

    /// Receptive-field radius (in resource elements) of one output along
    /// either axis.
    pub fn receptive_radius(&self) -> usize {
        // input conv, two convs per block on each path, output conv
        (2 + 2 * self.blocks) * (self.kernel / 2)
    }

    /// Equal layer shapes, ignoring the parameter budget.
    pub fn same_structure(&self, other: &CoNetConfig) -> bool {
        (
            self.in_channels,
            self.hidden,
            self.blocks,
            self.kernel,
            self.out_channels,
        ) == (
            other.in_channels,
            other.hidden,
            other.blocks,
            other.kernel,
            other.out_channels,
        )
    }

    fn input_layer(&self) -> usize {
        0
    }

    fn main_layer(&self, block: usize, j: usize) -> usize {
        1 + 2 * block + j
    }

    fn support_layer(&self, block: usize, j: usize) -> usize {
        1 + 2 * self.blocks + 2 * block + j
    }

    fn output_layer(&self) -> usize {
        1 + 4 * self.blocks
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut v = vec![(self.in_channels, self.hidden)];
        v.extend(std::iter::repeat_n(
            (self.hidden, self.hidden),
            4 * self.blocks,
        ));
        v.push((self.hidden, self.out_channels));
        v
    }
}

/// Trainable parameters plus a monotone version tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<R> {
    pub config: CoNetConfig,
    pub layers: Vec<ConvLayerParams<R>>,
    pub version: u64,
}

/// One gradient per parameter, shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<R> {
    pub layers: Vec<ConvLayerParams<R>>,
}

impl<R: Real> ModelParams<R> {
    pub fn zeros(config: CoNetConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(cin, cout)| ConvLayerParams::zeros(config.kernel, config.kernel, cin, cout))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            layers,
            version: 0,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn is_congruent(&self, other: &ModelParams<R>) -> bool {
        self.config.same_structure(&other.config)
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.same_shape(b))
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.is_finite())
    }

    /// All values in layer order, weights before bias.
    pub fn flat_values(&self) -> Vec<R> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn cast<S: Real>(&self) -> ModelParams<S> {
        ModelParams {
            config: self.config,
            layers: self.layers.iter().map(|l| l.cast()).collect(),
            version: self.version,
        }
    }
}

impl<R: Real> GradientSet<R> {
    pub fn zeros_like(params: &ModelParams<R>) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| {
                    let mut z = l.clone();
                    z.fill(R::zero());
                    z
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.is_finite())
    }

    pub fn flat_values(&self) -> Vec<R> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Fan-in scaled uniform initialization, U(-sqrt(3/fan_in), sqrt(3/fan_in)),
/// zero bias.
pub fn init_params<R: Real>(config: CoNetConfig, seed: u64) -> Result<ModelParams<R>> {
    let mut params = ModelParams::zeros(config)?;
    let mut rng = seeds::rng(seed, 0, seeds::Purpose::Init, 0);
    for layer in &mut params.layers {
        let fan_in = (layer.kh * layer.kw * layer.cin) as f64;
        let bound = (3.0 / fan_in).sqrt();
        for w in &mut layer.weight {
            *w = R::of(rng.random_range(-bound..bound));
        }
    }
    Ok(params)
}

/// Value copy of `src` into `dst`; bumps `dst`'s version.
pub fn copy_into<R: Real>(dst: &mut ModelParams<R>, src: &ModelParams<R>) -> Result<()> {
    if !dst.is_congruent(src) {
        return Err(config_err("copy_into: parameter structures differ"));
    }
    for (d, s) in dst.layers.iter_mut().zip(&src.layers) {
        d.weight.copy_from_slice(&s.weight);
        d.bias.copy_from_slice(&s.bias);
    }
    dst.version = dst.version.max(src.version) + 1;
    Ok(())
}

#[derive(Debug, Clone)]
struct BlockCache<R> {
    main_in: Tensor4<R>,
    support_in: Tensor4<R>,
    main_hidden: Tensor4<R>,
    support_hidden: Tensor4<R>,
    main_out: Tensor4<R>,
    support_out: Tensor4<R>,
}

/// Activations retained by [`conet_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache<R> {
    version: u64,
    config: CoNetConfig,
    input: Tensor4<R>,
    stem: Tensor4<R>,
    blocks: Vec<BlockCache<R>>,
    head_in: Tensor4<R>,
}

impl<R: Real> ActivationCache<R> {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn batch(&self) -> usize {
        self.input.batch()
    }
}

fn checked<R: Real>(t: Tensor4<R>, layer: usize) -> Result<Tensor4<R>> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NumericFault { layer })
    }
}

fn relu_in_place<R: Real>(t: &mut Tensor4<R>) {
    for v in t.data_mut() {
        if *v < R::zero() {
            *v = R::zero();
        }
    }
}

fn add_in_place<R: Real>(a: &mut Tensor4<R>, b: &Tensor4<R>) {
    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += *y;
    }
}

fn mul<R: Real>(a: &Tensor4<R>, b: &Tensor4<R>) -> Tensor4<R> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| *x * *y)
        .collect();
    Tensor4::from_vec(a.shape(), data).expect("same shape")
}

fn residual_branch<R: Real>(
    x: &Tensor4<R>,
    first: &ConvLayerParams<R>,
    second: &ConvLayerParams<R>,
    first_idx: usize,
) -> Result<(Tensor4<R>, Tensor4<R>)> {
    let mut hidden = checked(conv2d(x, first)?, first_idx)?;
    relu_in_place(&mut hidden);
    let mut out = checked(conv2d(&hidden, second)?, first_idx + 1)?;
    add_in_place(&mut out, x);
    Ok((hidden, out))
}

fn forward_impl<R: Real>(
    params: &ModelParams<R>,
    input: &Tensor4<R>,
    keep: bool,
) -> Result<(Tensor4<R>, Option<ActivationCache<R>>)> {
    let cfg = &params.config;
    if input.channels() != cfg.in_channels {
        return Err(config_err(format!(
            "input has {} channels, network expects {}",
            input.channels(),
            cfg.in_channels
        )));
    }
    if !input.is_finite() {
        return Err(Error::NumericFault { layer: 0 });
    }
    let mut stem = checked(
        conv2d(input, &params.layers[cfg.input_layer()])?,
        cfg.input_layer(),
    )?;
    relu_in_place(&mut stem);

    let mut main = stem.clone();
    let mut support = stem.clone();
    let mut blocks = Vec::with_capacity(if keep { cfg.blocks } else { 0 });
    for b in 0..cfg.blocks {
        let (m1, m2) = (cfg.main_layer(b, 0), cfg.main_layer(b, 1));
        let (s1, s2) = (cfg.support_layer(b, 0), cfg.support_layer(b, 1));
        let (main_hidden, main_out) =
            residual_branch(&main, &params.layers[m1], &params.layers[m2], m1)?;
        let (support_hidden, support_out) =
            residual_branch(&support, &params.layers[s1], &params.layers[s2], s1)?;
        let merged = checked(mul(&main_out, &support_out), m2)?;
        if keep {
            blocks.push(BlockCache {
                main_in: std::mem::replace(&mut main, merged),
                support_in: std::mem::replace(&mut support, support_out.clone()),
                main_hidden,
                support_hidden,
                main_out,
                support_out,
            });
        } else {
            main = merged;
            support = support_out;
        }
    }
    let out = checked(
        conv2d(&main, &params.layers[cfg.output_layer()])?,
        cfg.output_layer(),
    )?;
    let cache = keep.then(|| ActivationCache {
        version: params.version,
        config: *cfg,
        input: input.clone(),
        stem,
        blocks,
        head_in: main,
    });
    Ok((out, cache))
}

/// Forward pass producing per-bit LLRs (`batch × T × F × log2 Q`) and the
/// activation cache for [`conet_backward`].
pub fn conet_forward<R: Real>(
    params: &ModelParams<R>,
    input: &Tensor4<R>,
) -> Result<(Tensor4<R>, ActivationCache<R>)> {
    let (out, cache) = forward_impl(params, input, true)?;
    Ok((out, cache.expect("cache requested")))
}

/// Forward pass without retaining activations.
pub fn conet_infer<R: Real>(params: &ModelParams<R>, input: &Tensor4<R>) -> Result<Tensor4<R>> {
    Ok(forward_impl(params, input, false)?.0)
}

fn relu_grad_in_place<R: Real>(grad: &mut Tensor4<R>, activated: &Tensor4<R>) {
    for (g, a) in grad.data_mut().iter_mut().zip(activated.data()) {
        if *a <= R::zero() {
            *g = R::zero();
        }
    }
}

/// Gradient of the masked BCE loss w.r.t. every parameter.
///
/// `bits` and `mask` follow [`masked_bce_loss`](super::masked_bce_loss).
pub fn conet_backward<R: Real>(
    params: &ModelParams<R>,
    cache: &ActivationCache<R>,
    llrs: &Tensor4<R>,
    bits: &[u8],
    mask: &[bool],
) -> Result<(R, GradientSet<R>)> {
    let cfg = &params.config;
    if cache.version != params.version || !cache.config.same_structure(cfg) {
        return Err(Error::InvalidState(format!(
            "activation cache is from parameter version {}, parameters are at {}",
            cache.version, params.version
        )));
    }
    if llrs.shape()[..3] != cache.input.shape()[..3] || llrs.channels() != cfg.out_channels {
        return Err(Error::InvalidState(
            "LLR tensor does not match the cache".into(),
        ));
    }
    let (loss, dllr) = masked_bce_grad(llrs, bits, mask)?;
    let mut grads = GradientSet::zeros_like(params);

    let out_idx = cfg.output_layer();
    let mut d_main = conv2d_backward(
        &cache.head_in,
        &params.layers[out_idx],
        &dllr,
        &mut grads.layers[out_idx],
        true,
    )?
    .expect("input grad");
    let mut d_support = Tensor4::zeros(d_main.shape());

    for b in (0..cfg.blocks).rev() {
        let bc = &cache.blocks[b];
        // merged = main_out ⊙ support_out
        let mut d_main_out = mul(&d_main, &bc.support_out);
        let mut d_support_out = mul(&d_main, &bc.main_out);
        add_in_place(&mut d_support_out, &d_support);

        let (m1, m2) = (cfg.main_layer(b, 0), cfg.main_layer(b, 1));
        let mut d_hidden = conv2d_backward(
            &bc.main_hidden,
            &params.layers[m2],
            &d_main_out,
            &mut grads.layers[m2],
            true,
        )?
        .expect("input grad");
        relu_grad_in_place(&mut d_hidden, &bc.main_hidden);
        let d_in = conv2d_backward(
            &bc.main_in,
            &params.layers[m1],
            &d_hidden,
            &mut grads.layers[m1],
            true,
        )?
        .expect("input grad");
        add_in_place(&mut d_main_out, &d_in);
        d_main = d_main_out;

        let (s1, s2) = (cfg.support_layer(b, 0), cfg.support_layer(b, 1));
        let mut d_hidden = conv2d_backward(
            &bc.support_hidden,
            &params.layers[s2],
            &d_support_out,
            &mut grads.layers[s2],
            true,
        )?
        .expect("input grad");
        relu_grad_in_place(&mut d_hidden, &bc.support_hidden);
        let d_in = conv2d_backward(
            &bc.support_in,
            &params.layers[s1],
            &d_hidden,
            &mut grads.layers[s1],
            true,
        )?
        .expect("input grad");
        add_in_place(&mut d_support_out, &d_in);
        d_support = d_support_out;
    }

    let mut d_stem = d_main;
    add_in_place(&mut d_stem, &d_support);
    relu_grad_in_place(&mut d_stem, &cache.stem);
    let in_idx = cfg.input_layer();
    conv2d_backward(
        &cache.input,
        &params.layers[in_idx],
        &d_stem,
        &mut grads.layers[in_idx],
        false,
    )?;

    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::masked_bce_loss;

    pub(crate) fn tiny_config() -> CoNetConfig {
        CoNetConfig {
            in_channels: 3,
            hidden: 4,
            blocks: 2,
            kernel: 3,
            out_channels: 2,
            param_budget: Some(5000),
        }
    }

    fn random_input(seed: u64, shape: [usize; 4]) -> Tensor4<f64> {
        let mut rng = crate::seeds::rng_from(seed);
        let n = shape.iter().product();
        Tensor4::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn default_config_is_near_600k() {
        let cfg = CoNetConfig::default();
        let p = ModelParams::<f32>::zeros(cfg).unwrap();
        assert_eq!(p.param_count(), cfg.param_count());
        assert_eq!(cfg.param_count(), 598_406);
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = CoNetConfig {
            param_budget: Some(1000),
            ..tiny_config()
        };
        assert!(cfg.param_count() > 1000);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_network_gives_zero_llrs() {
        let p = ModelParams::<f64>::zeros(tiny_config()).unwrap();
        let out = conet_infer(&p, &Tensor4::zeros([1, 5, 6, 3])).unwrap();
        assert_eq!(out.shape(), [1, 5, 6, 2]);
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let p = init_params::<f32>(tiny_config(), 9).unwrap();
        let x = random_input(1, [2, 5, 7, 3]).cast::<f32>();
        let a = conet_infer(&p, &x).unwrap();
        let (b, _) = conet_forward(&p, &x).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(init_params::<f32>(tiny_config(), 9).unwrap(), p);
    }

    #[test]
    fn perturbation_stays_inside_receptive_field() {
        let cfg = tiny_config();
        let p = init_params::<f64>(cfg, 4).unwrap();
        let (h, w) = (15, 21);
        let x = random_input(5, [1, h, w, 3]);
        let base = conet_infer(&p, &x).unwrap();
        let (pt, pf) = (7, 10);
        let mut xp = x.clone();
        let i = xp.index(0, pt, pf, 1);
        xp.data_mut()[i] += 0.5;
        let moved = conet_infer(&p, &xp).unwrap();
        let r = cfg.receptive_radius();
        let mut changed_inside = false;
        for t in 0..h {
            for f in 0..w {
                let differs = base.pixel(0, t, f) != moved.pixel(0, t, f);
                let inside = t.abs_diff(pt) <= r && f.abs_diff(pf) <= r;
                if !inside {
                    assert!(
                        !differs,
                        "output ({t},{f}) outside the receptive field changed"
                    );
                }
                changed_inside |= differs;
            }
        }
        assert!(changed_inside);
    }

    #[test]
    fn non_finite_input_is_reported() {
        let p = init_params::<f64>(tiny_config(), 1).unwrap();
        let mut x = Tensor4::zeros([1, 3, 3, 3]);
        x.data_mut()[4] = f64::NAN;
        assert!(matches!(
            conet_infer(&p, &x),
            Err(Error::NumericFault { .. })
        ));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut p = init_params::<f64>(tiny_config(), 1).unwrap();
        let x = random_input(2, [1, 4, 4, 3]);
        let (out, cache) = conet_forward(&p, &x).unwrap();
        p.version += 1;
        let bits = vec![0u8; out.data().len()];
        let mask = vec![true; 16];
        assert!(matches!(
            conet_backward(&p, &cache, &out, &bits, &mask),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn backward_loss_matches_forward_loss() {
        let p = init_params::<f64>(tiny_config(), 3).unwrap();
        let x = random_input(3, [2, 4, 5, 3]);
        let (out, cache) = conet_forward(&p, &x).unwrap();
        let bits: Vec<u8> = (0..out.data().len()).map(|i| (i % 3 == 0) as u8).collect();
        let mask: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let (l, _) = conet_backward(&p, &cache, &out, &bits, &mask).unwrap();
        assert_eq!(l, masked_bce_loss(&out, &bits, &mask).unwrap());
    }

    #[test]
    fn single_element_output_bias_gradient() {
        let cfg = tiny_config();
        let p = init_params::<f64>(cfg, 11).unwrap();
        let x = random_input(12, [1, 4, 4, 3]);
        let mut mask = vec![false; 16];
        mask[6] = true;
        let bits: Vec<u8> = (0..32).map(|i| (i % 2) as u8).collect();
        let (out, cache) = conet_forward(&p, &x).unwrap();
        let (_, g) = conet_backward(&p, &cache, &out, &bits, &mask).unwrap();
        let oi = cfg.output_layer();
        let eps = 1e-5;
        for c in 0..cfg.out_channels {
            let mut pp = p.clone();
            pp.layers[oi].bias[c] += eps;
            let mut pm = p.clone();
            pm.layers[oi].bias[c] -= eps;
            let lp = masked_bce_loss(&conet_infer(&pp, &x).unwrap(), &bits, &mask).unwrap();
            let lm = masked_bce_loss(&conet_infer(&pm, &x).unwrap(), &bits, &mask).unwrap();
            let fd = (lp - lm) / (2.0 * eps);
            let an = g.layers[oi].bias[c];
            assert!((fd - an).abs() / an.abs().max(1e-12) < 1e-6, "{fd} vs {an}");
        }
    }

    #[test]
    fn masked_bit_plane_has_dead_output_gradient() {
        let cfg = tiny_config();
        let p = init_params::<f64>(cfg, 2).unwrap();
        let x = random_input(7, [1, 4, 4, 3]);
        let (out, cache) = conet_forward(&p, &x).unwrap();
        let bits = vec![1u8; 32];
        // per-bit mask selecting only bit plane 0
        let mask: Vec<bool> = (0..32).map(|i| i % 2 == 0).collect();
        let (_, g) = conet_backward(&p, &cache, &out, &bits, &mask).unwrap();
        let o = &g.layers[cfg.output_layer()];
        assert_eq!(o.bias[1], 0.0);
        for (i, w) in o.weight.iter().enumerate() {
            if i % o.cout == 1 {
                assert_eq!(*w, 0.0);
            }
        }
        assert_ne!(o.bias[0], 0.0);
    }

    #[test]
    fn copy_into_bumps_version_and_checks_structure() {
        let a = init_params::<f64>(tiny_config(), 1).unwrap();
        let mut b = init_params::<f64>(tiny_config(), 2).unwrap();
        copy_into(&mut b, &a).unwrap();
        assert_eq!(a.layers, b.layers);
        assert!(b.version > a.version);
        let x = random_input(1, [1, 3, 4, 3]);
        assert_eq!(conet_infer(&a, &x).unwrap(), conet_infer(&b, &x).unwrap());

        let other = CoNetConfig {
            hidden: 5,
            ..tiny_config()
        };
        let mut c = init_params::<f64>(other, 1).unwrap();
        assert!(copy_into(&mut c, &a).is_err());
    }
}
