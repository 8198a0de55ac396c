use crate::error::{invalid_arg, Result};

/// Hard decision on an LLR: positive means 1; a tie at 0 goes to 0.
#[inline]
pub fn hard_bit(llr: f64) -> u8 {
    (llr > 0.0) as u8
}

/// Fraction of differing bits.
pub fn ber(hard_bits: &[u8], true_bits: &[u8]) -> Result<f64> {
    if hard_bits.len() != true_bits.len() {
        return Err(invalid_arg(format!(
            "bit sequences differ in length ({} vs {})",
            hard_bits.len(),
            true_bits.len()
        )));
    }
    if hard_bits.is_empty() {
        return Err(invalid_arg("cannot compute a BER over zero bits"));
    }
    let errors = hard_bits
        .iter()
        .zip(true_bits)
        .filter(|(a, b)| a != b)
        .count();
    Ok(errors as f64 / hard_bits.len() as f64)
}

/// Mean of each complete, non-overlapping window; a trailing partial window
/// is dropped.
pub fn windowed_ber(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(invalid_arg("window must be at least 1"));
    }
    Ok(series
        .chunks_exact(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect())
}
