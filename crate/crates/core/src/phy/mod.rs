//! Physical layer: constellations, fading channel, classical receiver chain
//! and error counting.

mod channel;
mod estimate;
mod frame;
mod metrics;
mod qam;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

pub use channel::{
    apply_channel, draw_channel, rms_delay_spread, ChannelRealization, ComplexGrid, RxGrid,
    TdlProfile,
};
pub use estimate::{
    interpolate, lmmse_equalize, ls_estimate, maxlog_llr, ChannelEstimate, Equalized,
    PilotEstimates,
};
pub use frame::{simulate_frame, Frame};
pub use metrics::{ber, hard_bit, windowed_ber};
pub use qam::Constellation;

/// Complex sample type used throughout the physical layer.
pub type Cplx = Complex64;

/// Link dimensions and noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// OFDM symbols per frame.
    #[serde(rename = "T")]
    pub t: usize,
    /// Subcarriers.
    #[serde(rename = "F")]
    pub f: usize,
    /// Receive antennas.
    #[serde(rename = "K")]
    pub k: usize,
    /// Modulation order.
    #[serde(rename = "Q")]
    pub q: usize,
    pub subcarrier_spacing_hz: f64,
    /// SNR per receive antenna for unit-energy symbols and unit-power
    /// channels. Ignored when `noise_var` is set.
    pub snr_db: f64,
    /// Linear noise variance; overrides `snr_db`.
    pub noise_var: Option<f64>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            t: 14,
            f: 64,
            k: 2,
            q: 64,
            subcarrier_spacing_hz: 15e3,
            snr_db: 20.0,
            noise_var: None,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if ![4, 16, 64].contains(&self.q) {
            return Err(config_err(format!(
                "modulation order {} not in {{4, 16, 64}}",
                self.q
            )));
        }
        if self.t == 0 || self.f == 0 || self.k == 0 {
            return Err(config_err("T, F and K must be at least 1"));
        }
        if !(self.subcarrier_spacing_hz > 0.0) {
            return Err(config_err("subcarrier spacing must be positive"));
        }
        let nv = self.noise_variance();
        if !(nv > 0.0 && nv.is_finite()) {
            return Err(config_err(format!("noise variance {nv} must be positive")));
        }
        Ok(())
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_var
            .unwrap_or_else(|| snr_db_to_noise_var(self.snr_db))
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr_db = snr_db;
        self.noise_var = None;
        self
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.q.trailing_zeros() as usize
    }

    pub fn resource_elements(&self) -> usize {
        self.t * self.f
    }

    /// Neural input channels, 2(K+1)+1.
    pub fn input_channels(&self) -> usize {
        2 * (self.k + 1) + 1
    }
}

pub fn snr_db_to_noise_var(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}
