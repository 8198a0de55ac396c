//! Tapped-delay-line block fading and AWGN on the post-FFT resource grid.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, invalid_arg, Result};
use crate::seeds;

use super::{Cplx, LinkConfig};

/// Power-weighted standard deviation of tap delays.
pub fn rms_delay_spread(delays: &[f64], powers: &[f64]) -> f64 {
    let total: f64 = powers.iter().sum();
    let mean: f64 = delays.iter().zip(powers).map(|(d, p)| d * p).sum::<f64>() / total;
    let second: f64 = delays
        .iter()
        .zip(powers)
        .map(|(d, p)| (d - mean) * (d - mean) * p)
        .sum::<f64>()
        / total;
    second.sqrt()
}

/// Tap delays (seconds) and normalized average powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdlProfile {
    pub delays_s: Vec<f64>,
    pub powers: Vec<f64>,
    pub rms_delay_spread_s: f64,
}

impl TdlProfile {
    /// Default tap count of [`TdlProfile::exponential`].
    pub const TAPS: usize = 8;
    /// Default per-tap power decay in dB.
    pub const DECAY_DB: f64 = 3.0;

    /// Build from explicit taps; powers are normalized to unit sum.
    pub fn new(delays_s: Vec<f64>, powers: Vec<f64>) -> Result<Self> {
        if delays_s.is_empty() || delays_s.len() != powers.len() {
            return Err(config_err(
                "tap delays and powers must be non-empty and equal length",
            ));
        }
        if delays_s[0] != 0.0 {
            return Err(config_err("first tap must be at delay 0"));
        }
        if delays_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config_err("tap delays must be strictly increasing"));
        }
        if powers.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(config_err("tap powers must be finite and non-negative"));
        }
        let total: f64 = powers.iter().sum();
        if !(total > 0.0) {
            return Err(config_err("tap powers sum to zero"));
        }
        let powers: Vec<f64> = powers.iter().map(|p| p / total).collect();
        let rms = rms_delay_spread(&delays_s, &powers);
        Ok(Self {
            delays_s,
            powers,
            rms_delay_spread_s: rms,
        })
    }

    /// Flat fading: one tap at delay 0.
    pub fn single_tap() -> Self {
        Self {
            delays_s: vec![0.0],
            powers: vec![1.0],
            rms_delay_spread_s: 0.0,
        }
    }

    /// Exponential power-delay profile with equally spaced taps whose
    /// spacing is chosen so the RMS delay spread equals `rms_s`.
    pub fn exponential(rms_s: f64, taps: usize, decay_db_per_tap: f64) -> Result<Self> {
        if !(rms_s >= 0.0 && rms_s.is_finite()) {
            return Err(config_err(format!(
                "delay spread {rms_s} must be finite and >= 0"
            )));
        }
        if rms_s == 0.0 || taps == 1 {
            if rms_s != 0.0 {
                return Err(config_err(
                    "a single tap cannot have a non-zero delay spread",
                ));
            }
            return Ok(Self::single_tap());
        }
        if taps == 0 {
            return Err(config_err("profile needs at least one tap"));
        }
        let raw: Vec<f64> = (0..taps)
            .map(|p| 10f64.powf(-decay_db_per_tap * p as f64 / 10.0))
            .collect();
        let total: f64 = raw.iter().sum();
        let powers: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let unit: Vec<f64> = (0..taps).map(|p| p as f64).collect();
        let spacing = rms_s / rms_delay_spread(&unit, &powers);
        let delays_s = unit.iter().map(|u| u * spacing).collect();
        Ok(Self {
            delays_s,
            powers,
            rms_delay_spread_s: rms_s,
        })
    }

    /// Default-shaped profile at the given RMS delay spread.
    pub fn with_spread(rms_s: f64) -> Result<Self> {
        Self::exponential(rms_s, Self::TAPS, Self::DECAY_DB)
    }

    /// `E[H(f) H*(f + lag)] = Σ_p P_p e^{+j2π·lag·τ_p}`.
    pub fn frequency_correlation(&self, lag_hz: f64) -> Cplx {
        self.delays_s
            .iter()
            .zip(&self.powers)
            .map(|(d, p)| Cplx::from_polar(*p, 2.0 * PI * lag_hz * d))
            .sum()
    }
}

/// Transmit grid, `T × F`, row-major in (t, f).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    pub t: usize,
    pub f: usize,
    pub data: Vec<Cplx>,
}

impl ComplexGrid {
    pub fn zeros(t: usize, f: usize) -> Self {
        Self {
            t,
            f,
            data: vec![Cplx::new(0.0, 0.0); t * f],
        }
    }

    #[inline]
    pub fn at(&self, t: usize, f: usize) -> Cplx {
        self.data[t * self.f + f]
    }
}

/// Received grid, `T × F × K`, row-major in (t, f, k).
#[derive(Debug, Clone, PartialEq)]
pub struct RxGrid {
    pub t: usize,
    pub f: usize,
    pub k: usize,
    pub data: Vec<Cplx>,
}

impl RxGrid {
    #[inline]
    pub fn at(&self, t: usize, f: usize, k: usize) -> Cplx {
        self.data[(t * self.f + f) * self.k + k]
    }
}

/// Per-element channel coefficients, `T × F × K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub t: usize,
    pub f: usize,
    pub k: usize,
    pub h: Vec<Cplx>,
}

impl ChannelRealization {
    /// `h = 1` everywhere.
    pub fn identity(t: usize, f: usize, k: usize) -> Self {
        Self {
            t,
            f,
            k,
            h: vec![Cplx::new(1.0, 0.0); t * f * k],
        }
    }

    #[inline]
    pub fn at(&self, t: usize, f: usize, k: usize) -> Cplx {
        self.h[(t * self.f + f) * self.k + k]
    }
}

fn complex_normal<R: Rng>(rng: &mut R, var: f64) -> Cplx {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Cplx::new(re * s, im * s)
}

/// Draw one block-fading realization: per antenna, taps `a_p ~ CN(0, P_p)`
/// and `H[f] = Σ_p a_p e^{−j2π f Δf τ_p}`, repeated over all T symbols.
pub fn draw_channel(profile: &TdlProfile, cfg: &LinkConfig, seed: u64) -> ChannelRealization {
    let mut rng = seeds::rng_from(seed);
    let (t, f, k) = (cfg.t, cfg.f, cfg.k);
    // phasor[p][f]
    let phasors: Vec<Vec<Cplx>> = profile
        .delays_s
        .iter()
        .map(|d| {
            (0..f)
                .map(|sc| {
                    Cplx::from_polar(1.0, -2.0 * PI * sc as f64 * cfg.subcarrier_spacing_hz * d)
                })
                .collect()
        })
        .collect();
    let mut row = vec![Cplx::new(0.0, 0.0); f * k];
    for ant in 0..k {
        let taps: Vec<Cplx> = profile
            .powers
            .iter()
            .map(|p| complex_normal(&mut rng, *p))
            .collect();
        for sc in 0..f {
            row[sc * k + ant] = taps.iter().zip(&phasors).map(|(a, ph)| a * ph[sc]).sum();
        }
    }
    let mut h = Vec::with_capacity(t * f * k);
    for _ in 0..t {
        h.extend_from_slice(&row);
    }
    ChannelRealization { t, f, k, h }
}

/// `y = h·s + w` with `w ~ CN(0, σ²)` per element and antenna.
pub fn apply_channel(
    tx: &ComplexGrid,
    h: &ChannelRealization,
    noise_var: f64,
    seed: u64,
) -> Result<RxGrid> {
    if tx.t != h.t || tx.f != h.f {
        return Err(invalid_arg(format!(
            "transmit grid {}x{} does not match channel {}x{}",
            tx.t, tx.f, h.t, h.f
        )));
    }
    if !(noise_var >= 0.0) {
        return Err(invalid_arg("noise variance must be non-negative"));
    }
    let mut rng = seeds::rng_from(seed);
    let k = h.k;
    let mut data = Vec::with_capacity(tx.data.len() * k);
    for (i, s) in tx.data.iter().enumerate() {
        for ant in 0..k {
            let mut y = h.h[i * k + ant] * s;
            if noise_var > 0.0 {
                y += complex_normal(&mut rng, noise_var);
            }
            data.push(y);
        }
    }
    Ok(RxGrid {
        t: tx.t,
        f: tx.f,
        k,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LinkConfig {
        LinkConfig {
            t: 3,
            f: 16,
            k: 2,
            q: 4,
            ..LinkConfig::default()
        }
    }

    #[test]
    fn profile_hits_target_spread() {
        for tau in [1e-9, 45e-9, 405e-9, 3.3e-6] {
            let p = TdlProfile::with_spread(tau).unwrap();
            assert_eq!(p.delays_s.len(), 8);
            assert!((p.powers.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let rms = rms_delay_spread(&p.delays_s, &p.powers);
            assert!((rms - tau).abs() / tau < 1e-12);
        }
    }

    #[test]
    fn invalid_profiles() {
        assert!(TdlProfile::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(TdlProfile::new(vec![1e-9], vec![1.0]).is_err());
        assert!(TdlProfile::exponential(-1.0, 8, 3.0).is_err());
        assert!(TdlProfile::exponential(1e-8, 1, 3.0).is_err());
    }

    #[test]
    fn single_tap_is_flat_with_unit_mean_power() {
        let p = TdlProfile::single_tap();
        let c = cfg();
        let mut acc = 0.0;
        let n = 20_000;
        for s in 0..n {
            let h = draw_channel(&p, &c, s);
            let h0 = h.at(0, 0, 0);
            for f in 0..c.f {
                assert_eq!(h.at(2, f, 0), h0);
            }
            acc += h0.norm_sqr();
        }
        let mean = acc / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn block_fading_is_constant_in_time() {
        let p = TdlProfile::with_spread(300e-9).unwrap();
        let h = draw_channel(&p, &cfg(), 3);
        for t in 1..3 {
            for f in 0..16 {
                for k in 0..2 {
                    assert_eq!(h.at(t, f, k), h.at(0, f, k));
                }
            }
        }
        assert_ne!(h.at(0, 0, 0), h.at(0, 0, 1));
    }

    #[test]
    fn identity_channel_without_noise() {
        let tx = ComplexGrid {
            t: 2,
            f: 2,
            data: vec![
                Cplx::new(1.0, 2.0),
                Cplx::new(-1.0, 0.5),
                Cplx::new(0.0, 1.0),
                Cplx::new(3.0, 0.0),
            ],
        };
        let h = ChannelRealization::identity(2, 2, 3);
        let y = apply_channel(&tx, &h, 0.0, 1).unwrap();
        for t in 0..2 {
            for f in 0..2 {
                for k in 0..3 {
                    assert_eq!(y.at(t, f, k), tx.at(t, f));
                }
            }
        }
    }

    #[test]
    fn noiseless_channel_is_invertible() {
        let c = cfg();
        let h = draw_channel(&TdlProfile::with_spread(100e-9).unwrap(), &c, 9);
        let tx = ComplexGrid {
            t: 3,
            f: 16,
            data: (0..48)
                .map(|i| Cplx::new(i as f64, -(i as f64) / 2.0))
                .collect(),
        };
        let y = apply_channel(&tx, &h, 0.0, 0).unwrap();
        for t in 0..3 {
            for f in 0..16 {
                for k in 0..2 {
                    let s = y.at(t, f, k) / h.at(t, f, k);
                    assert!((s - tx.at(t, f)).norm() < 1e-9);
                }
            }
        }
        assert!(apply_channel(&ComplexGrid::zeros(2, 16), &h, 0.0, 0).is_err());
    }

    #[test]
    fn noise_variance_is_as_requested() {
        let c = LinkConfig {
            t: 50,
            f: 1000,
            k: 2,
            ..cfg()
        };
        let h = draw_channel(&TdlProfile::with_spread(50e-9).unwrap(), &c, 1);
        let tx = ComplexGrid {
            t: 50,
            f: 1000,
            data: vec![Cplx::new(0.6, -0.8); 50_000],
        };
        let nv = 0.37;
        let y = apply_channel(&tx, &h, nv, 77).unwrap();
        let mut acc = 0.0;
        for t in 0..50 {
            for f in 0..1000 {
                for k in 0..2 {
                    acc += (y.at(t, f, k) - h.at(t, f, k) * tx.at(t, f)).norm_sqr();
                }
            }
        }
        let est = acc / 100_000.0;
        assert!((est / nv - 1.0).abs() < 0.02, "{est}");
    }
}
