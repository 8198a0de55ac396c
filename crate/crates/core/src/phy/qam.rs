//! Square QAM with per-axis reflected Gray labels.
//!
//! A symbol carries `m = log2 Q` bits, most significant first. The first
//! `m/2` bits select the in-phase level, the rest the quadrature level. On
//! each axis the `m/2`-bit label `l` sits at level `g = gray⁻¹(l)` with
//! amplitude `(√Q − 1 − 2g)·a`, so label 0 is the most positive level and
//! neighbouring levels differ in exactly one bit. `a = 1/√(2(Q−1)/3)` gives
//! unit average energy (`1/√2`, `1/√10`, `1/√42` for Q = 4, 16, 64).
//!
//! QPSK example: bits `00` map to `(1 + 1j)/√2`, bits `11` to `(−1 − 1j)/√2`.

use crate::error::{config_err, invalid_arg, Result};

use super::Cplx;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    q: usize,
    bits: usize,
    axis_bits: usize,
    /// Amplitude of each axis label.
    axis_amp: Vec<f64>,
    points: Vec<Cplx>,
}

#[inline]
fn gray_decode(mut l: usize) -> usize {
    let mut g = l;
    while l > 0 {
        l >>= 1;
        g ^= l;
    }
    g
}

impl Constellation {
    pub fn new(q: usize) -> Result<Self> {
        if ![4, 16, 64].contains(&q) {
            return Err(config_err(format!("unsupported modulation order {q}")));
        }
        let bits = q.trailing_zeros() as usize;
        let axis_bits = bits / 2;
        let side = 1usize << axis_bits;
        let scale = 1.0 / (2.0 * (q as f64 - 1.0) / 3.0).sqrt();
        let axis_amp: Vec<f64> = (0..side)
            .map(|label| (side as f64 - 1.0 - 2.0 * gray_decode(label) as f64) * scale)
            .collect();
        let points = (0..q)
            .map(|idx| Cplx::new(axis_amp[idx >> axis_bits], axis_amp[idx & (side - 1)]))
            .collect();
        Ok(Self {
            q,
            bits,
            axis_bits,
            axis_amp,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.q
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    pub fn points(&self) -> &[Cplx] {
        &self.points
    }

    #[inline]
    pub fn point(&self, index: usize) -> Cplx {
        self.points[index]
    }

    /// Bits of a symbol index, most significant first.
    pub fn bits_of(&self, index: usize, out: &mut [u8]) {
        for (j, b) in out.iter_mut().enumerate().take(self.bits) {
            *b = ((index >> (self.bits - 1 - j)) & 1) as u8;
        }
    }

    pub fn index_of(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, b| (acc << 1) | (*b as usize & 1))
    }

    /// Map a bit sequence to unit-energy symbols.
    pub fn map(&self, bits: &[u8]) -> Result<Vec<Cplx>> {
        if bits.len() % self.bits != 0 {
            return Err(invalid_arg(format!(
                "{} bits is not a multiple of {} bits per symbol",
                bits.len(),
                self.bits
            )));
        }
        Ok(bits
            .chunks_exact(self.bits)
            .map(|c| self.point(self.index_of(c)))
            .collect())
    }

    fn nearest_axis(&self, x: f64) -> usize {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (l, a) in self.axis_amp.iter().enumerate() {
            let d = (x - a).abs();
            if d < bd {
                bd = d;
                best = l;
            }
        }
        best
    }

    /// Index of the nearest constellation point.
    pub fn hard_demap(&self, s: Cplx) -> usize {
        (self.nearest_axis(s.re) << self.axis_bits) | self.nearest_axis(s.im)
    }

    /// Max-log LLRs of one equalized symbol; positive means bit 1.
    ///
    /// `LLR_b = snr · (min_{x: b=0} |s − x|² − min_{x: b=1} |s − x|²)`,
    /// evaluated per axis since the labeling is separable.
    pub fn maxlog_llr(&self, s: Cplx, snr: f64, out: &mut [f64]) {
        let nb = self.axis_bits;
        for (axis, r) in [s.re, s.im].into_iter().enumerate() {
            let mut best = [[f64::INFINITY; 2]; 3];
            for (label, a) in self.axis_amp.iter().enumerate() {
                let d = (r - a) * (r - a);
                for (j, slot) in best.iter_mut().enumerate().take(nb) {
                    let bit = (label >> (nb - 1 - j)) & 1;
                    if d < slot[bit] {
                        slot[bit] = d;
                    }
                }
            }
            for j in 0..nb {
                out[axis * nb + j] = snr * (best[j][0] - best[j][1]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qpsk_labels() {
        let c = Constellation::new(4).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert_eq!(c.map(&[0, 0]).unwrap()[0], Cplx::new(r, r));
        assert_eq!(c.map(&[1, 1]).unwrap()[0], Cplx::new(-r, -r));
        assert_eq!(c.map(&[0, 1]).unwrap()[0], Cplx::new(r, -r));
    }

    #[test]
    fn unit_energy_and_scale() {
        for q in [4, 16, 64] {
            let c = Constellation::new(q).unwrap();
            let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / q as f64;
            assert!((e - 1.0).abs() < 1e-12, "Q={q}: {e}");
        }
        let c = Constellation::new(64).unwrap();
        let min_re = c
            .points()
            .iter()
            .map(|p| p.re.abs())
            .fold(f64::INFINITY, f64::min);
        assert!((min_re - 1.0 / 42f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn neighbours_differ_in_one_bit() {
        for q in [4, 16, 64] {
            let c = Constellation::new(q).unwrap();
            let pts = c.points();
            let dmin = 2.0
                * c.axis_amp
                    .iter()
                    .map(|a| a.abs())
                    .fold(f64::INFINITY, f64::min);
            for i in 0..q {
                for j in 0..q {
                    let d = (pts[i] - pts[j]).norm();
                    if (d - dmin).abs() < 1e-9 {
                        assert_eq!((i ^ j).count_ones(), 1, "Q={q}: {i} vs {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn map_demap_is_identity() {
        for q in [4, 16, 64] {
            let c = Constellation::new(q).unwrap();
            for i in 0..q {
                assert_eq!(c.hard_demap(c.point(i)), i);
                let mut bits = vec![0; c.bits_per_symbol()];
                c.bits_of(i, &mut bits);
                assert_eq!(c.index_of(&bits), i);
            }
        }
    }

    #[test]
    fn bad_lengths_and_orders() {
        assert!(Constellation::new(8).is_err());
        assert!(Constellation::new(16).unwrap().map(&[0, 1, 1]).is_err());
    }

    #[test]
    fn llr_signs_match_bits_on_points() {
        for q in [4, 16, 64] {
            let c = Constellation::new(q).unwrap();
            let m = c.bits_per_symbol();
            let mut llr = vec![0.0; m];
            let mut bits = vec![0; m];
            for i in 0..q {
                c.maxlog_llr(c.point(i), 100.0, &mut llr);
                c.bits_of(i, &mut bits);
                for j in 0..m {
                    assert_eq!(llr[j] > 0.0, bits[j] == 1, "Q={q} idx={i} bit={j}");
                }
            }
        }
    }

    #[test]
    fn midpoint_gives_zero_llr() {
        let c = Constellation::new(16).unwrap();
        // Points 0b0000 and 0b0100 differ only in the second I bit.
        let (a, b) = (c.point(0b0000), c.point(0b0100));
        assert_eq!(a.im, b.im);
        let mid = (a + b) / 2.0;
        let mut llr = [0.0; 4];
        c.maxlog_llr(mid, 5.0, &mut llr);
        assert!(llr[1].abs() < 1e-12);
    }

    #[test]
    fn qpsk_closed_form() {
        let c = Constellation::new(4).unwrap();
        let s = Cplx::new(0.37, -1.2);
        let snr = 3.5;
        let mut llr = [0.0; 2];
        c.maxlog_llr(s, snr, &mut llr);
        let k = 4.0 * snr / 2f64.sqrt();
        // bit 1 ⇔ negative amplitude, hence the minus sign
        assert!((llr[0] + k * s.re).abs() < 1e-12);
        assert!((llr[1] + k * s.im).abs() < 1e-12);
    }
}
