use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::neural::{AdamConfig, ModelParams, Real};
use crate::phy::{simulate_frame, LinkConfig};
use crate::pilots::{make_plan, select_mask, PilotDesign, PilotMask};

use super::delay::UpdatePolicy;
use super::drift::{sample_tau_s, DriftSchedule, DriftState};
use super::trainer::{detect_batch, Architecture, MiniBatch, TrainerState};

/// Everything a continual run needs besides the starting model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinualConfig {
    pub link: LinkConfig,
    pub design: PilotDesign,
    pub mask_fraction: f64,
    pub architecture: Architecture,
    pub policy: UpdatePolicy,
    pub schedule: DriftSchedule,
    pub batches: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Also run a frozen copy of the starting model on the same frames.
    pub with_fixed: bool,
}

impl ContinualConfig {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.design.validate(&self.link)?;
        self.schedule.validate()?;
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(config_err("mask fraction must lie in [0, 1]"));
        }
        if self.batch_size == 0 || self.batches == 0 {
            return Err(config_err("batch size and batch count must be positive"));
        }
        if !(self.adam.lr >= 0.0) {
            return Err(config_err("learning rate must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub batch: u64,
    pub tau_mean_ns: f64,
    pub ber_adaptive: f64,
    pub ber_fixed: Option<f64>,
    pub loss: Option<f64>,
    pub updated: bool,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinualTrace {
    pub rows: Vec<TraceRow>,
    pub forward_passes: u64,
    pub updates: u64,
    pub skipped: u64,
}

impl ContinualTrace {
    pub fn adaptive(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ber_adaptive).collect()
    }

    pub fn fixed(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.ber_fixed).collect()
    }
}

/// Build mini-batch `index`: plan, mask and frames, with per-frame spreads
/// around `tau_mean_ns`.
pub fn make_batch(
    link: &LinkConfig,
    design: &PilotDesign,
    mask_fraction: f64,
    tau_mean_ns: f64,
    spread_width_ns: f64,
    batch_size: usize,
    seed: u64,
    index: u64,
) -> Result<MiniBatch> {
    let plan = make_plan(design, link, seed, index)?;
    let mask = select_mask(&plan, mask_fraction, seed)?;
    let frames = (0..batch_size as u64)
        .map(|s| {
            let tau = sample_tau_s(tau_mean_ns, spread_width_ns, seed, index, s);
            simulate_frame(link, &plan, tau, seed, index, s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MiniBatch {
        index,
        plan,
        mask,
        frames,
    })
}

fn batch_ber(results: &[crate::receiver::DetectionResult], batch: &MiniBatch) -> Result<f64> {
    let mut errors = 0;
    let mut bits = 0;
    for (r, fr) in results.iter().zip(&batch.frames) {
        errors += r.bit_errors(&fr.data_bits)?;
        bits += fr.data_bits.len();
    }
    Ok(errors as f64 / bits as f64)
}

/// Detect-and-adapt over `cfg.batches` mini-batches under drift.
pub fn run_continual<R: Real>(
    cfg: &ContinualConfig,
    initial: &ModelParams<R>,
) -> Result<ContinualTrace> {
    cfg.validate()?;
    let mut drift = DriftState::new(cfg.schedule, cfg.seed)?;
    let mut trainer = TrainerState::new(cfg.architecture, initial.clone(), cfg.adam);
    let empty = PilotMask::empty(cfg.link.t, cfg.link.f);
    let mut rows = Vec::with_capacity(cfg.batches as usize);
    for b in 0..cfg.batches {
        let tau = drift.drift_next(b * cfg.batch_size as u64);
        let batch = make_batch(
            &cfg.link,
            &cfg.design,
            cfg.mask_fraction,
            tau,
            cfg.schedule.spread_width_ns,
            cfg.batch_size,
            cfg.seed,
            b,
        )?;
        let out = trainer.step(&batch, &cfg.policy)?;
        let ber_fixed = if cfg.with_fixed {
            let fixed = detect_batch(
                initial,
                &batch,
                cfg.architecture.detection_mask(&batch, &empty),
            )?;
            Some(batch_ber(&fixed, &batch)?)
        } else {
            None
        };
        rows.push(TraceRow {
            batch: b,
            tau_mean_ns: tau,
            ber_adaptive: batch_ber(&out.results, &batch)?,
            ber_fixed,
            loss: out.loss,
            updated: out.updated,
            version: out.results[0].version.unwrap_or_default(),
        });
        if (b + 1) % 500 == 0 {
            log::info!(
                "continual: batch {} of {}, tau {tau} ns",
                b + 1,
                cfg.batches
            );
        }
    }
    Ok(ContinualTrace {
        rows,
        forward_passes: trainer.forward_passes,
        updates: trainer.updates,
        skipped: trainer.skipped,
    })
}
