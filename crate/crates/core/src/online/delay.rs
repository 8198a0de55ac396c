use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Timing of one receiver, in any consistent time unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayParams {
    /// Pre-inference (transmission) delay.
    pub t_d: f64,
    /// Post-inference (decoding) delay.
    pub d_d: f64,
    /// Inference delay of one sample.
    pub i_d: f64,
    /// Cost of a backward pass relative to inference.
    #[serde(default = "default_z")]
    pub z: f64,
    /// Fine-tuning mini-batch size.
    pub n: u64,
    /// Samples inferred in parallel.
    #[serde(default = "default_m")]
    pub m: u64,
}

fn default_z() -> f64 {
    2.0
}

fn default_m() -> u64 {
    1
}

impl DelayParams {
    /// `I_d / max(T_d, D_d)`.
    pub fn v(&self) -> f64 {
        self.i_d / self.t_d.max(self.d_d)
    }

    pub fn backprop_delay(&self) -> f64 {
        backprop_delay(self.z, self.i_d, self.m, self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_d > 0.0 && self.d_d > 0.0 && self.i_d > 0.0) {
            return Err(config_err("delays T_d, D_d and I_d must be positive"));
        }
        if !(self.z >= 0.0 && self.z.is_finite()) {
            return Err(config_err("Z must be finite and non-negative"));
        }
        if self.n == 0 || self.m == 0 {
            return Err(config_err("N and M must be at least 1"));
        }
        if self.t_d.max(self.d_d) < self.i_d && self.m as f64 > self.v().ceil() {
            return Err(config_err(format!(
                "M = {} exceeds ceil(V) = {} while inference is the bottleneck",
                self.m,
                self.v().ceil()
            )));
        }
        Ok(())
    }
}

/// `B_d = Z · I_d · M / N`.
pub fn backprop_delay(z: f64, i_d: f64, m: u64, n: u64) -> f64 {
    z * (i_d * m as f64) / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelayCase {
    /// Enough slack to update after every mini-batch.
    I,
    /// Inference-bound with `N ≥ Z·M`.
    II,
    /// Inference-bound with `N = M`.
    III,
}

/// When the online model is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdatePolicy {
    /// `None` when the parameters fall outside all three cases.
    pub case: Option<DelayCase>,
    /// Update on every mini-batch whose index is a multiple of this; 0
    /// disables updates.
    pub cadence: u64,
    /// Set when the delay model matched no case and fell back to
    /// `FALLBACK_CADENCE`.
    #[serde(default)]
    pub fallback: bool,
}

impl UpdatePolicy {
    pub const FALLBACK_CADENCE: u64 = 3;

    pub fn every(cadence: u64) -> Self {
        Self {
            case: None,
            cadence,
            fallback: false,
        }
    }

    pub fn never() -> Self {
        Self::every(0)
    }

    #[inline]
    pub fn fires(&self, batch_index: u64) -> bool {
        self.cadence != 0 && batch_index % self.cadence == 0
    }
}

/// Map delay parameters to a case and cadence. Total: parameters that fit
/// none of the cases get cadence 3 and `case = None`.
pub fn classify_case(dp: &DelayParams) -> UpdatePolicy {
    let slack = dp.t_d.max(dp.d_d);
    let bd = dp.backprop_delay();
    let zm = dp.z * dp.m as f64;
    if slack >= dp.i_d + bd {
        return UpdatePolicy {
            case: Some(DelayCase::I),
            cadence: 1,
            fallback: false,
        };
    }
    if slack < dp.i_d {
        if dp.n as f64 >= zm {
            // ceil(1 + ZM/N) with ZM/N in [0, 1]
            let cadence = if zm > 0.0 { 2 } else { 1 };
            return UpdatePolicy {
                case: Some(DelayCase::II),
                cadence,
                fallback: false,
            };
        }
        if dp.n == dp.m {
            return UpdatePolicy {
                case: Some(DelayCase::III),
                cadence: 3,
                fallback: false,
            };
        }
    }
    UpdatePolicy {
        case: None,
        cadence: UpdatePolicy::FALLBACK_CADENCE,
        fallback: true,
    }
}
