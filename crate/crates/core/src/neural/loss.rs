//! Masked per-bit binary cross-entropy on logits.
//!
//! An LLR `z` is the logit of bit = 1, so the per-bit loss is
//! `softplus(z) - b·z`, computed in the overflow-free form
//! `max(z, 0) - b·z + ln(1 + e^{-|z|})`.

use crate::error::{invalid_arg, Result};

use super::tensor::{Real, Tensor4};

/// Expand a resource-element mask to a per-bit mask, or pass a per-bit mask
/// through unchanged.
fn bit_selected(mask: &[bool], llr_len: usize, bits_per_re: usize) -> Result<Vec<bool>> {
    if mask.len() == llr_len {
        Ok(mask.to_vec())
    } else if mask.len() * bits_per_re == llr_len {
        Ok(mask
            .iter()
            .flat_map(|m| std::iter::repeat_n(*m, bits_per_re))
            .collect())
    } else {
        Err(invalid_arg(format!(
            "mask length {} fits neither {} resource elements nor {} bits",
            mask.len(),
            llr_len / bits_per_re.max(1),
            llr_len
        )))
    }
}

#[inline]
fn bce<R: Real>(z: R, bit: u8) -> R {
    let b = if bit != 0 { R::one() } else { R::zero() };
    z.max(R::zero()) - b * z + (-z.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid<R: Real>(z: R) -> R {
    if z >= R::zero() {
        R::one() / (R::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (R::one() + e)
    }
}

fn check(llrs_len: usize, bits: &[u8]) -> Result<()> {
    if bits.len() != llrs_len {
        return Err(invalid_arg(format!(
            "label length {} does not match {} LLRs",
            bits.len(),
            llrs_len
        )));
    }
    Ok(())
}

/// Mean BCE over the selected bits.
///
/// `bits` has one entry per LLR. `mask` is either one flag per resource
/// element (`batch·T·F`) or one per bit.
pub fn masked_bce_loss<R: Real>(llrs: &Tensor4<R>, bits: &[u8], mask: &[bool]) -> Result<R> {
    let z = llrs.data();
    check(z.len(), bits)?;
    let sel = bit_selected(mask, z.len(), llrs.channels())?;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for ((zv, b), s) in z.iter().zip(bits).zip(&sel) {
        if *s {
            sum += bce(*zv, *b).as_f64();
            count += 1;
        }
    }
    if count == 0 {
        return Err(invalid_arg("loss mask selects no bits"));
    }
    Ok(R::of(sum / count as f64))
}

/// Loss and its gradient w.r.t. the LLRs.
pub fn masked_bce_grad<R: Real>(
    llrs: &Tensor4<R>,
    bits: &[u8],
    mask: &[bool],
) -> Result<(R, Tensor4<R>)> {
    let loss = masked_bce_loss(llrs, bits, mask)?;
    let z = llrs.data();
    let sel = bit_selected(mask, z.len(), llrs.channels())?;
    let count = sel.iter().filter(|s| **s).count();
    let scale = R::one() / R::of(count as f64);
    let mut grad = Tensor4::zeros(llrs.shape());
    for (((g, zv), b), s) in grad.data_mut().iter_mut().zip(z).zip(bits).zip(&sel) {
        if *s {
            let target = if *b != 0 { R::one() } else { R::zero() };
            *g = (sigmoid(*zv) - target) * scale;
        }
    }
    Ok((loss, grad))
}
