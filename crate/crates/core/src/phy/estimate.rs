//! LS channel estimation, grid interpolation, LMMSE equalization and
//! max-log demapping: the classical baseline chain.

use std::collections::BTreeMap;

use crate::error::{invalid_arg, Error, Result};
use crate::pilots::{PilotMask, PilotPlan};

use super::channel::{ChannelRealization, RxGrid};
use super::qam::Constellation;
use super::Cplx;

/// A channel estimate over the full grid has the same layout as a channel
/// realization.
pub type ChannelEstimate = ChannelRealization;

/// Post-equalization SNRs are capped here so noiseless inputs keep finite
/// LLRs.
const MAX_SNR: f64 = 1e12;

/// LS estimates `y/s` at the usable pilots.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotEstimates {
    pub t: usize,
    pub f: usize,
    pub k: usize,
    pub points: Vec<(usize, usize)>,
    /// `points.len() × k`, antenna fastest.
    pub values: Vec<Cplx>,
}

/// Equalized symbols with their post-equalization SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    pub t: usize,
    pub f: usize,
    pub symbols: Vec<Cplx>,
    pub snr: Vec<f64>,
    pub erased: Vec<bool>,
}

/// LS estimates at every plan pilot not in `mask`.
pub fn ls_estimate(rx: &RxGrid, plan: &PilotPlan, mask: &PilotMask) -> Result<PilotEstimates> {
    if (rx.t, rx.f) != (plan.t, plan.f) {
        return Err(invalid_arg("received grid and pilot plan differ in size"));
    }
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (i, &(t, f)) in plan.positions.iter().enumerate() {
        if mask.contains(t, f) {
            continue;
        }
        let s = plan.symbols[i];
        if s.norm_sqr() == 0.0 {
            return Err(Error::Estimation(format!(
                "pilot at ({t}, {f}) has a zero symbol"
            )));
        }
        points.push((t, f));
        for k in 0..rx.k {
            values.push(rx.at(t, f, k) / s);
        }
    }
    if points.is_empty() {
        return Err(Error::Estimation("no unmasked pilots".into()));
    }
    Ok(PilotEstimates {
        t: rx.t,
        f: rx.f,
        k: rx.k,
        points,
        values,
    })
}

/// Linear interpolation of `samples` (sorted by coordinate) at every integer
/// coordinate in `0..len`, holding the end values beyond the outermost
/// samples.
fn interp_line(samples: &[(usize, Cplx)], len: usize) -> Vec<Cplx> {
    let mut out = Vec::with_capacity(len);
    let mut seg = 0;
    for x in 0..len {
        let (x0, v0) = samples[0];
        let (xl, vl) = samples[samples.len() - 1];
        if x <= x0 {
            out.push(v0);
        } else if x >= xl {
            out.push(vl);
        } else {
            while samples[seg + 1].0 < x {
                seg += 1;
            }
            let (a, va) = samples[seg];
            let (b, vb) = samples[seg + 1];
            let w = (x - a) as f64 / (b - a) as f64;
            out.push(va * (1.0 - w) + vb * w);
        }
    }
    out
}

/// Fill the grid from pilot estimates: linear along frequency within each
/// pilot-bearing symbol, then linear along time between those symbols, with
/// nearest-value extrapolation at the edges.
pub fn interpolate(est: &PilotEstimates) -> Result<ChannelEstimate> {
    if est.points.is_empty() {
        return Err(Error::Estimation(
            "no pilot estimates to interpolate".into(),
        ));
    }
    let (tn, fn_, kn) = (est.t, est.f, est.k);
    let mut h = vec![Cplx::new(0.0, 0.0); tn * fn_ * kn];
    for k in 0..kn {
        let mut rows: BTreeMap<usize, Vec<(usize, Cplx)>> = BTreeMap::new();
        for (i, &(t, f)) in est.points.iter().enumerate() {
            rows.entry(t).or_default().push((f, est.values[i * kn + k]));
        }
        let full_rows: Vec<(usize, Vec<Cplx>)> = rows
            .into_iter()
            .map(|(t, mut s)| {
                s.sort_by_key(|(f, _)| *f);
                (t, interp_line(&s, fn_))
            })
            .collect();
        for f in 0..fn_ {
            let column: Vec<(usize, Cplx)> = full_rows.iter().map(|(t, r)| (*t, r[f])).collect();
            for (t, v) in interp_line(&column, tn).into_iter().enumerate() {
                h[(t * fn_ + f) * kn + k] = v;
            }
        }
    }
    Ok(ChannelRealization {
        t: tn,
        f: fn_,
        k: kn,
        h,
    })
}

/// Per-element LMMSE with MRC across antennas:
/// `ŝ = Σ_k ĥ*_k y_k / (Σ_k |ĥ_k|² + σ²)`, post-eq SNR `Σ_k |ĥ_k|² / σ²`.
pub fn lmmse_equalize(rx: &RxGrid, hhat: &ChannelEstimate, noise_var: f64) -> Result<Equalized> {
    if (rx.t, rx.f, rx.k) != (hhat.t, hhat.f, hhat.k) {
        return Err(invalid_arg(
            "received grid and channel estimate differ in shape",
        ));
    }
    let n = rx.t * rx.f;
    let mut symbols = Vec::with_capacity(n);
    let mut snr = Vec::with_capacity(n);
    let mut erased = Vec::with_capacity(n);
    for i in 0..n {
        let ys = &rx.data[i * rx.k..(i + 1) * rx.k];
        let hs = &hhat.h[i * rx.k..(i + 1) * rx.k];
        let gain: f64 = hs.iter().map(|h| h.norm_sqr()).sum();
        if gain == 0.0 {
            symbols.push(Cplx::new(0.0, 0.0));
            snr.push(0.0);
            erased.push(true);
            continue;
        }
        let mf: Cplx = hs.iter().zip(ys).map(|(h, y)| h.conj() * y).sum();
        symbols.push(mf / (gain + noise_var));
        snr.push((gain / noise_var).min(MAX_SNR));
        erased.push(false);
    }
    Ok(Equalized {
        t: rx.t,
        f: rx.f,
        symbols,
        snr,
        erased,
    })
}

/// Max-log LLRs for every element, `T × F × log2 Q`; erased elements get 0.
pub fn maxlog_llr(eq: &Equalized, constellation: &Constellation) -> Vec<f64> {
    let m = constellation.bits_per_symbol();
    let mut out = vec![0.0; eq.symbols.len() * m];
    for (i, chunk) in out.chunks_exact_mut(m).enumerate() {
        if !eq.erased[i] {
            constellation.maxlog_llr(eq.symbols[i], eq.snr[i], chunk);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{apply_channel, draw_channel, ComplexGrid, LinkConfig, TdlProfile};
    use crate::pilots::PilotPlan;

    fn plan_at(t: usize, f: usize, positions: Vec<(usize, usize)>) -> PilotPlan {
        let c = Constellation::new(4).unwrap();
        let idx = (0..positions.len()).map(|i| i % 4).collect();
        PilotPlan::from_parts(t, f, &c, positions, idx, None).unwrap()
    }

    fn grid_from(h: &ChannelRealization, plan: &PilotPlan) -> RxGrid {
        let mut tx = ComplexGrid::zeros(h.t, h.f);
        for (i, &(t, f)) in plan.positions.iter().enumerate() {
            tx.data[t * h.f + f] = plan.symbols[i];
        }
        apply_channel(&tx, h, 0.0, 0).unwrap()
    }

    #[test]
    fn flat_channel_is_recovered_everywhere() {
        let c = Cplx::new(0.3, -1.1);
        let h = ChannelRealization {
            t: 4,
            f: 6,
            k: 1,
            h: vec![c; 24],
        };
        let plan = plan_at(4, 6, vec![(1, 2), (3, 5)]);
        let est = ls_estimate(&grid_from(&h, &plan), &plan, &PilotMask::empty(4, 6)).unwrap();
        let hh = interpolate(&est).unwrap();
        assert!(hh.h.iter().all(|v| (v - c).norm() < 1e-12));
    }

    #[test]
    fn full_pilot_symbol_gives_exact_block_fading_estimate() {
        let cfg = LinkConfig {
            t: 5,
            f: 12,
            k: 2,
            q: 4,
            ..LinkConfig::default()
        };
        let h = draw_channel(&TdlProfile::with_spread(800e-9).unwrap(), &cfg, 4);
        let plan = plan_at(5, 12, (0..12).map(|f| (2, f)).collect());
        let est = ls_estimate(&grid_from(&h, &plan), &plan, &PilotMask::empty(5, 12)).unwrap();
        let hh = interpolate(&est).unwrap();
        for (a, b) in hh.h.iter().zip(&h.h) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn linear_in_frequency_is_exact_between_pilots() {
        let (tn, fn_) = (4, 20);
        let mut hv = Vec::new();
        for _t in 0..tn {
            for f in 0..fn_ {
                hv.push(Cplx::new(0.5 + 0.1 * f as f64, -0.2 + 0.03 * f as f64));
            }
        }
        let h = ChannelRealization {
            t: tn,
            f: fn_,
            k: 1,
            h: hv,
        };
        let plan = plan_at(tn, fn_, vec![(0, 2), (0, 9), (0, 17), (3, 4), (3, 15)]);
        let est = ls_estimate(&grid_from(&h, &plan), &plan, &PilotMask::empty(tn, fn_)).unwrap();
        let hh = interpolate(&est).unwrap();
        for t in 0..tn {
            for f in 4..=15 {
                assert!((hh.at(t, f, 0) - h.at(t, f, 0)).norm() < 1e-12, "({t},{f})");
            }
        }
    }

    #[test]
    fn masked_pilots_are_not_used() {
        let h = ChannelRealization::identity(2, 3, 1);
        let plan = plan_at(2, 3, vec![(0, 0)]);
        let rx = grid_from(&h, &plan);
        let mask = PilotMask::new(2, 3, vec![(0, 0)]);
        assert!(matches!(
            ls_estimate(&rx, &plan, &mask),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn lmmse_limits() {
        let rx = RxGrid {
            t: 1,
            f: 2,
            k: 1,
            data: vec![Cplx::new(0.4, 0.2), Cplx::new(-1.0, 3.0)],
        };
        let hh = ChannelRealization::identity(1, 2, 1);
        let eq = lmmse_equalize(&rx, &hh, 1e-12).unwrap();
        for (s, y) in eq.symbols.iter().zip(&rx.data) {
            assert!((s - y).norm() < 1e-9);
        }

        let zero = ChannelRealization {
            h: vec![Cplx::new(0.0, 0.0); 2],
            ..hh
        };
        let eq = lmmse_equalize(&rx, &zero, 0.1).unwrap();
        assert!(eq.erased.iter().all(|e| *e));
        let llr = maxlog_llr(&eq, &Constellation::new(4).unwrap());
        assert!(llr.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lmmse_shrinks_by_wiener_factor() {
        let h = Cplx::new(0.6, -0.9);
        let s = Cplx::new(0.7071, -0.7071);
        let nv = 0.25;
        let rx = RxGrid {
            t: 1,
            f: 1,
            k: 1,
            data: vec![h * s],
        };
        let hh = ChannelRealization {
            t: 1,
            f: 1,
            k: 1,
            h: vec![h],
        };
        let eq = lmmse_equalize(&rx, &hh, nv).unwrap();
        let g = h.norm_sqr();
        assert!((eq.symbols[0] - s * (g / (g + nv))).norm() < 1e-14);
        assert!((eq.snr[0] - g / nv).abs() < 1e-14);
    }

    /// Matrix-form MMSE filter w = (h hᴴ + σ² I)⁻¹ h, solved as an explicit
    /// 2×2 system; wᴴy must equal the closed form hᴴy/(‖h‖² + σ²).
    #[test]
    fn matches_matrix_mmse_oracle() {
        use rand::Rng;
        let mut rng = crate::seeds::rng_from(31);
        for _ in 0..50 {
            let h: Vec<Cplx> = (0..2)
                .map(|_| Cplx::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let y: Vec<Cplx> = (0..2)
                .map(|_| Cplx::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let nv: f64 = rng.random_range(0.01..1.0);
            // A = h hᴴ + σ² I, 2×2 Hermitian; w = A⁻¹ h.
            let a00 = h[0] * h[0].conj() + nv;
            let a01 = h[0] * h[1].conj();
            let a10 = h[1] * h[0].conj();
            let a11 = h[1] * h[1].conj() + nv;
            let det = a00 * a11 - a01 * a10;
            let w0 = (a11 * h[0] - a01 * h[1]) / det;
            let w1 = (-a10 * h[0] + a00 * h[1]) / det;
            let oracle = w0.conj() * y[0] + w1.conj() * y[1];

            let rx = RxGrid {
                t: 1,
                f: 1,
                k: 2,
                data: y.clone(),
            };
            let hh = ChannelRealization {
                t: 1,
                f: 1,
                k: 2,
                h: h.clone(),
            };
            let eq = lmmse_equalize(&rx, &hh, nv).unwrap();
            assert!((eq.symbols[0] - oracle).norm() < 1e-12);
        }
    }
}
