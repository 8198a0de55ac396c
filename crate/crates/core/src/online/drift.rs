use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::seeds::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftVariant {
    /// Fixed step every `period_samples` (slow cadence).
    StepSlow,
    /// Fixed step every `period_samples` (fast cadence).
    StepFast,
    /// Random steps at random intervals.
    RandomWalk,
    /// No drift.
    Constant,
}

/// How the mean RMS delay spread evolves over received samples. All delays
/// are in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSchedule {
    pub variant: DriftVariant,
    pub initial_ns: f64,
    pub min_ns: f64,
    pub max_ns: f64,
    /// Step size of the step variants.
    pub step_ns: f64,
    /// Samples between steps of the step variants.
    pub period_samples: u64,
    /// Random-walk steps are drawn from `U(0, walk_step_max_ns)`.
    pub walk_step_max_ns: f64,
    /// Random-walk intervals are drawn from `U(walk_interval_min, walk_interval_max)` samples.
    pub walk_interval_min: u64,
    pub walk_interval_max: u64,
    /// Probability that a random-walk step keeps the previous direction.
    pub persistence: f64,
    /// Per-sample spreads are drawn from `U(τ̄, τ̄ + spread_width_ns)`.
    pub spread_width_ns: f64,
}

impl Default for DriftSchedule {
    fn default() -> Self {
        Self::step_slow(16)
    }
}

impl DriftSchedule {
    fn base(variant: DriftVariant, period_samples: u64) -> Self {
        Self {
            variant,
            initial_ns: 40.0,
            min_ns: 40.0,
            max_ns: 400.0,
            step_ns: 20.0,
            period_samples,
            walk_step_max_ns: 40.0,
            walk_interval_min: 160,
            walk_interval_max: 2400,
            persistence: 0.8,
            spread_width_ns: 10.0,
        }
    }

    /// 20 ns every 1000 mini-batches.
    pub fn step_slow(batch_size: u64) -> Self {
        Self::base(DriftVariant::StepSlow, 1000 * batch_size)
    }

    /// 20 ns every 480 samples.
    pub fn step_fast() -> Self {
        Self::base(DriftVariant::StepFast, 480)
    }

    pub fn random_walk() -> Self {
        Self::base(DriftVariant::RandomWalk, 0)
    }

    pub fn constant(tau_ns: f64) -> Self {
        Self {
            initial_ns: tau_ns,
            min_ns: tau_ns,
            max_ns: tau_ns,
            ..Self::base(DriftVariant::Constant, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_ns >= 0.0 && self.min_ns <= self.max_ns && self.max_ns.is_finite()) {
            return Err(config_err("drift bounds must satisfy 0 <= min <= max"));
        }
        if !(self.min_ns..=self.max_ns).contains(&self.initial_ns) {
            return Err(config_err("initial delay spread outside the drift bounds"));
        }
        if !(self.spread_width_ns >= 0.0) {
            return Err(config_err("spread width must be non-negative"));
        }
        match self.variant {
            DriftVariant::StepSlow | DriftVariant::StepFast => {
                if self.period_samples == 0 {
                    return Err(config_err("step drift needs a positive period"));
                }
                if !(self.step_ns >= 0.0) {
                    return Err(config_err("step size must be non-negative"));
                }
                if self.step_ns > self.max_ns - self.min_ns && self.step_ns > 0.0 {
                    return Err(config_err("step size exceeds the drift range"));
                }
            }
            DriftVariant::RandomWalk => {
                if self.walk_interval_min == 0 || self.walk_interval_min > self.walk_interval_max {
                    return Err(config_err(
                        "random-walk intervals must satisfy 1 <= min <= max",
                    ));
                }
                if !(self.walk_step_max_ns >= 0.0)
                    || self.walk_step_max_ns > self.max_ns - self.min_ns
                {
                    return Err(config_err(
                        "random-walk step bound must lie within the drift range",
                    ));
                }
                if !(0.0..=1.0).contains(&self.persistence) {
                    return Err(config_err("persistence must be a probability"));
                }
            }
            DriftVariant::Constant => {}
        }
        Ok(())
    }
}

/// One change of the mean delay spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEvent {
    pub at_sample: u64,
    /// Samples since the previous event (or since the start).
    pub interval: u64,
    /// Magnitude of the step before reflection.
    pub step_ns: f64,
    pub tau_mean_ns: f64,
}

/// Evolving mean delay spread.
#[derive(Debug, Clone)]
pub struct DriftState {
    schedule: DriftSchedule,
    tau_mean_ns: f64,
    direction: f64,
    next_change: u64,
    last_change: u64,
    rng: ChaCha8Rng,
}

impl DriftState {
    pub fn new(schedule: DriftSchedule, seed: u64) -> Result<Self> {
        schedule.validate()?;
        let mut rng = seeds::rng(seed, 0, Purpose::Drift, 0);
        let next_change = match schedule.variant {
            DriftVariant::StepSlow | DriftVariant::StepFast => schedule.period_samples,
            DriftVariant::RandomWalk => {
                rng.random_range(schedule.walk_interval_min..=schedule.walk_interval_max)
            }
            DriftVariant::Constant => u64::MAX,
        };
        Ok(Self {
            schedule,
            tau_mean_ns: schedule.initial_ns,
            direction: 1.0,
            next_change,
            last_change: 0,
            rng,
        })
    }

    pub fn tau_mean_ns(&self) -> f64 {
        self.tau_mean_ns
    }

    fn reflect(&mut self, step: f64) {
        let (lo, hi) = (self.schedule.min_ns, self.schedule.max_ns);
        let mut next = self.tau_mean_ns + self.direction * step;
        if next > hi {
            next = 2.0 * hi - next;
            self.direction = -1.0;
        } else if next < lo {
            next = 2.0 * lo - next;
            self.direction = 1.0;
        }
        self.tau_mean_ns = next.clamp(lo, hi);
    }

    /// Apply every change scheduled at or before `elapsed_samples`.
    pub fn advance(&mut self, elapsed_samples: u64) -> Vec<DriftEvent> {
        let mut events = Vec::new();
        let s = self.schedule;
        while self.next_change <= elapsed_samples {
            let at = self.next_change;
            let step = match s.variant {
                DriftVariant::StepSlow | DriftVariant::StepFast => {
                    self.next_change += s.period_samples;
                    s.step_ns
                }
                DriftVariant::RandomWalk => {
                    if !self.rng.random_bool(s.persistence) {
                        self.direction = -self.direction;
                    }
                    self.next_change += self
                        .rng
                        .random_range(s.walk_interval_min..=s.walk_interval_max);
                    self.rng.random_range(0.0..=s.walk_step_max_ns)
                }
                DriftVariant::Constant => unreachable!("constant drift never schedules a change"),
            };
            self.reflect(step);
            events.push(DriftEvent {
                at_sample: at,
                interval: at - self.last_change,
                step_ns: step,
                tau_mean_ns: self.tau_mean_ns,
            });
            self.last_change = at;
        }
        events
    }

    /// Mean delay spread after `elapsed_samples` samples.
    pub fn drift_next(&mut self, elapsed_samples: u64) -> f64 {
        self.advance(elapsed_samples);
        self.tau_mean_ns
    }
}

/// Per-sample delay spread in seconds, `U(τ̄, τ̄ + width)`.
pub fn sample_tau_s(
    tau_mean_ns: f64,
    width_ns: f64,
    master: u64,
    batch_index: u64,
    sample: u64,
) -> f64 {
    let mut rng = seeds::rng(master, batch_index, Purpose::DelaySpread, sample);
    let u: f64 = rng.random();
    (tau_mean_ns + u * width_ns) * 1e-9
}
