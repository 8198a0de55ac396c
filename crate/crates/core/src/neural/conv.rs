//! Same-padded 2-D convolution over NHWC tensors, lowered to matrix
//! products over per-sample patch matrices.
//!
//! Weights are stored `[kh][kw][cin][cout]`, which is exactly the row-major
//! `(kh·kw·cin) × cout` matrix the patch rows multiply.

use crate::error::{config_err, Result};

use super::tensor::{Real, Tensor4};

/// Weights and bias of one convolutional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams<R> {
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
    pub weight: Vec<R>,
    pub bias: Vec<R>,
}

impl<R: Real> ConvLayerParams<R> {
    pub fn zeros(kh: usize, kw: usize, cin: usize, cout: usize) -> Result<Self> {
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(config_err(format!("kernel {kh}x{kw} must have odd sides")));
        }
        if cin == 0 || cout == 0 {
            return Err(config_err("convolution needs at least one channel"));
        }
        Ok(Self {
            kh,
            kw,
            cin,
            cout,
            weight: vec![R::zero(); kh * kw * cin * cout],
            bias: vec![R::zero(); cout],
        })
    }

    #[inline]
    pub fn weight_index(&self, dy: usize, dx: usize, ci: usize, co: usize) -> usize {
        ((dy * self.kw + dx) * self.cin + ci) * self.cout + co
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.kh == other.kh
            && self.kw == other.kw
            && self.cin == other.cin
            && self.cout == other.cout
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: R) {
        self.weight
            .iter_mut()
            .chain(self.bias.iter_mut())
            .for_each(|x| *x = v);
    }

    pub fn cast<S: Real>(&self) -> ConvLayerParams<S> {
        ConvLayerParams {
            kh: self.kh,
            kw: self.kw,
            cin: self.cin,
            cout: self.cout,
            weight: self.weight.iter().map(|v| S::of(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| S::of(v.as_f64())).collect(),
        }
    }
}

/// Source coordinate for kernel offset `d` around output coordinate `p`.
#[inline]
fn source(p: usize, d: usize, pad: usize, len: usize) -> Option<usize> {
    let s = (p + d).checked_sub(pad)?;
    (s < len).then_some(s)
}

/// Patch matrix of one sample: row `t·W + f` holds the `kh·kw·cin` inputs
/// seen by output pixel `(t, f)`, zero outside the grid.
fn im2col<R: Real>(x: &[R], h: usize, w: usize, layer: &ConvLayerParams<R>, patches: &mut [R]) {
    let cin = layer.cin;
    let k = layer.kh * layer.kw * cin;
    let (ph, pw) = (layer.kh / 2, layer.kw / 2);
    for t in 0..h {
        for f in 0..w {
            let row = &mut patches[(t * w + f) * k..(t * w + f + 1) * k];
            for dy in 0..layer.kh {
                for dx in 0..layer.kw {
                    let dst = &mut row[(dy * layer.kw + dx) * cin..(dy * layer.kw + dx + 1) * cin];
                    match (source(t, dy, ph, h), source(f, dx, pw, w)) {
                        (Some(sy), Some(sx)) => {
                            dst.copy_from_slice(&x[(sy * w + sx) * cin..(sy * w + sx + 1) * cin])
                        }
                        _ => dst.fill(R::zero()),
                    }
                }
            }
        }
    }
}

/// Scatter-add a patch-matrix gradient back onto the input grid.
fn col2im<R: Real>(patches: &[R], h: usize, w: usize, layer: &ConvLayerParams<R>, dx: &mut [R]) {
    let cin = layer.cin;
    let k = layer.kh * layer.kw * cin;
    let (ph, pw) = (layer.kh / 2, layer.kw / 2);
    for t in 0..h {
        for f in 0..w {
            let row = &patches[(t * w + f) * k..(t * w + f + 1) * k];
            for dy in 0..layer.kh {
                let Some(sy) = source(t, dy, ph, h) else {
                    continue;
                };
                for dxk in 0..layer.kw {
                    let Some(sx) = source(f, dxk, pw, w) else {
                        continue;
                    };
                    let src = &row[(dy * layer.kw + dxk) * cin..(dy * layer.kw + dxk + 1) * cin];
                    let dst = &mut dx[(sy * w + sx) * cin..(sy * w + sx + 1) * cin];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

/// Same-padded convolution with zero fill.
pub fn conv2d<R: Real>(x: &Tensor4<R>, layer: &ConvLayerParams<R>) -> Result<Tensor4<R>> {
    let [n, h, w, cin] = x.shape();
    if cin != layer.cin {
        return Err(config_err(format!(
            "conv2d: input has {cin} channels, layer expects {}",
            layer.cin
        )));
    }
    if h == 0 || w == 0 {
        return Err(config_err("conv2d: empty spatial dimensions"));
    }
    let cout = layer.cout;
    let k = layer.kh * layer.kw * cin;
    let hw = h * w;
    let mut out = Tensor4::zeros([n, h, w, cout]);
    let mut patches = vec![R::zero(); hw * k];
    for b in 0..n {
        im2col(
            &x.data()[b * hw * cin..(b + 1) * hw * cin],
            h,
            w,
            layer,
            &mut patches,
        );
        let ob = &mut out.data_mut()[b * hw * cout..(b + 1) * hw * cout];
        for row in ob.chunks_exact_mut(cout) {
            row.copy_from_slice(&layer.bias);
        }
        // Oᵀ = Wᵀ·Pᵀ keeps the long pixel axis as the inner matrix dimension
        R::gemm(
            cout,
            k,
            hw,
            &layer.weight,
            (1, cout),
            &patches,
            (1, k),
            R::one(),
            ob,
            (1, cout),
        );
    }
    Ok(out)
}

/// Backward pass of [`conv2d`].
///
/// Weight and bias gradients are accumulated into `grad`; the input
/// gradient is returned when `need_input_grad` is set.
pub fn conv2d_backward<R: Real>(
    x: &Tensor4<R>,
    layer: &ConvLayerParams<R>,
    dout: &Tensor4<R>,
    grad: &mut ConvLayerParams<R>,
    need_input_grad: bool,
) -> Result<Option<Tensor4<R>>> {
    let [n, h, w, cin] = x.shape();
    let cout = layer.cout;
    if cin != layer.cin || dout.shape() != [n, h, w, cout] || !grad.same_shape(layer) {
        return Err(config_err("conv2d_backward: shape mismatch"));
    }
    let k = layer.kh * layer.kw * cin;
    let hw = h * w;
    let mut patches = vec![R::zero(); hw * k];
    let mut dpatches = if need_input_grad {
        vec![R::zero(); hw * k]
    } else {
        Vec::new()
    };
    let mut dx = need_input_grad.then(|| Tensor4::zeros([n, h, w, cin]));

    for b in 0..n {
        let g = &dout.data()[b * hw * cout..(b + 1) * hw * cout];
        for row in g.chunks_exact(cout) {
            for (db, gv) in grad.bias.iter_mut().zip(row) {
                *db += *gv;
            }
        }
        im2col(
            &x.data()[b * hw * cin..(b + 1) * hw * cin],
            h,
            w,
            layer,
            &mut patches,
        );
        // dW += Pᵀ·G
        R::gemm(
            k,
            hw,
            cout,
            &patches,
            (1, k),
            g,
            (cout, 1),
            R::one(),
            &mut grad.weight,
            (cout, 1),
        );
        if let Some(dx) = dx.as_mut() {
            // dP = G·Wᵀ
            R::gemm(
                hw,
                cout,
                k,
                g,
                (cout, 1),
                &layer.weight,
                (1, cout),
                R::zero(),
                &mut dpatches,
                (k, 1),
            );
            col2im(
                &dpatches,
                h,
                w,
                layer,
                &mut dx.data_mut()[b * hw * cin..(b + 1) * hw * cin],
            );
        }
    }
    Ok(dx)
}
