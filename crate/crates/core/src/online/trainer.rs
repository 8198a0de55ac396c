use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::neural::{
    adam_step, conet_backward, conet_forward, conet_infer, AdamConfig, AdamState, ModelParams,
    Real, SharedParams, Tensor4,
};
use crate::phy::Frame;
use crate::pilots::{build_input, labels_for, Labels, PilotMask, PilotPlan};
use crate::receiver::DetectionResult;

use super::delay::UpdatePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Inference on a live network with every pilot visible; a clone trains
    /// on the masked grid and is copied into the live network.
    I,
    /// One network; its single forward pass on the masked grid serves both
    /// detection and training.
    II,
}

impl Architecture {
    /// Pilots hidden from the detection path.
    pub fn detection_mask<'a>(&self, batch: &'a MiniBatch, empty: &'a PilotMask) -> &'a PilotMask {
        match self {
            Architecture::I => empty,
            Architecture::II => &batch.mask,
        }
    }
}

/// Frames received under one pilot plan and one mask.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub index: u64,
    pub plan: PilotPlan,
    pub mask: PilotMask,
    pub frames: Vec<Frame>,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Stacked network input, one sample per frame.
    pub fn input<R: Real>(&self, mask: &PilotMask) -> Result<Tensor4<R>> {
        let parts = self
            .frames
            .iter()
            .map(|fr| build_input::<R>(&fr.rx, &self.plan, fr.noise_var, mask).map(|i| i.tensor))
            .collect::<Result<Vec<_>>>()?;
        Tensor4::stack(&parts)
    }

    /// Masked-pilot labels for every frame, concatenated in sample order.
    pub fn labels(&self) -> Result<Labels> {
        let one = labels_for(&self.plan, &self.mask)?;
        let n = self.len();
        Ok(Labels {
            bits_per_symbol: one.bits_per_symbol,
            bits: one.bits.repeat(n),
            mask: one.mask.repeat(n),
        })
    }
}

/// Detect every frame of a batch with one parameter set.
pub fn detect_batch<R: Real>(
    params: &ModelParams<R>,
    batch: &MiniBatch,
    mask: &PilotMask,
) -> Result<Vec<DetectionResult>> {
    let out = conet_infer(params, &batch.input::<R>(mask)?)?;
    Ok((0..batch.len())
        .map(|n| DetectionResult::from_output(&out, n, &batch.plan, params.version))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub results: Vec<DetectionResult>,
    /// Masked-pilot loss, when it was computed.
    pub loss: Option<f64>,
    pub updated: bool,
    /// The cadence fired but the update was dropped (non-finite loss or
    /// gradient).
    pub skipped: bool,
}

enum Nets<R> {
    Parallel {
        live: Arc<SharedParams<R>>,
        clone: ModelParams<R>,
    },
    Single(ModelParams<R>),
}

/// Online receiver that detects and fine-tunes mini-batch by mini-batch.
pub struct TrainerState<R> {
    pub architecture: Architecture,
    nets: Nets<R>,
    pub adam: AdamState<R>,
    /// Mini-batches processed.
    pub batches: u64,
    /// Forward passes, counted per frame.
    pub forward_passes: u64,
    pub updates: u64,
    pub skipped: u64,
}

impl<R: Real> TrainerState<R> {
    pub fn new(architecture: Architecture, params: ModelParams<R>, adam: AdamConfig) -> Self {
        let state = AdamState::new(&params, adam);
        let nets = match architecture {
            Architecture::I => Nets::Parallel {
                clone: params.clone(),
                live: Arc::new(SharedParams::new(params)),
            },
            Architecture::II => Nets::Single(params),
        };
        Self {
            architecture,
            nets,
            adam: state,
            batches: 0,
            forward_passes: 0,
            updates: 0,
            skipped: 0,
        }
    }

    /// Parameters currently used for detection.
    pub fn detection_params(&self) -> Arc<ModelParams<R>> {
        match &self.nets {
            Nets::Parallel { live, .. } => live.snapshot(),
            Nets::Single(p) => Arc::new(p.clone()),
        }
    }

    /// Shared live slot (Architecture I only).
    pub fn live(&self) -> Option<Arc<SharedParams<R>>> {
        match &self.nets {
            Nets::Parallel { live, .. } => Some(live.clone()),
            Nets::Single(_) => None,
        }
    }

    pub fn into_params(self) -> ModelParams<R> {
        match self.nets {
            Nets::Parallel { live, .. } => (*live.snapshot()).clone(),
            Nets::Single(p) => p,
        }
    }

    /// Process one mini-batch: detect every frame, and update the model when
    /// `policy` fires on this batch index and the batch carries masked
    /// pilots.
    pub fn step(&mut self, batch: &MiniBatch, policy: &UpdatePolicy) -> Result<StepOutcome> {
        if batch.is_empty() {
            return Err(invalid_arg("empty mini-batch"));
        }
        let train = policy.fires(batch.index) && !batch.mask.is_empty();
        let n = batch.len() as u64;
        let outcome = match &mut self.nets {
            Nets::Parallel { live, clone } => {
                let empty = PilotMask::empty(batch.plan.t, batch.plan.f);
                let snapshot = live.snapshot();
                let (results, training) = std::thread::scope(|s| {
                    let inference = s.spawn(|| detect_batch(&snapshot, batch, &empty));
                    let training = if train {
                        Some(train_step(clone, &mut self.adam, batch, None))
                    } else {
                        None
                    };
                    (
                        inference.join().expect("inference thread panicked"),
                        training,
                    )
                });
                let results = results?;
                self.forward_passes += n;
                let (loss, updated) = match training {
                    Some(t) => {
                        self.forward_passes += n;
                        let (loss, updated) = t?;
                        if updated {
                            live.publish(clone)?;
                        }
                        (Some(loss), updated)
                    }
                    None => (None, false),
                };
                StepOutcome {
                    results,
                    loss,
                    updated,
                    skipped: train && !updated,
                }
            }
            Nets::Single(params) => {
                let input = batch.input::<R>(&batch.mask)?;
                let (out, cache) = conet_forward(params, &input)?;
                self.forward_passes += n;
                let results = (0..batch.len())
                    .map(|i| DetectionResult::from_output(&out, i, &batch.plan, params.version))
                    .collect();
                let (loss, updated) = if train {
                    let (loss, updated) =
                        train_step(params, &mut self.adam, batch, Some((&out, &cache)))?;
                    (Some(loss), updated)
                } else if !batch.mask.is_empty() {
                    let labels = batch.labels()?;
                    let loss = crate::neural::masked_bce_loss(&out, &labels.bits, &labels.mask)?;
                    (Some(loss.as_f64()), false)
                } else {
                    (None, false)
                };
                StepOutcome {
                    results,
                    loss,
                    updated,
                    skipped: train && !updated,
                }
            }
        };
        self.batches += 1;
        if outcome.updated {
            self.updates += 1;
        }
        if outcome.skipped {
            self.skipped += 1;
            log::warn!(
                "batch {}: non-finite loss or gradient, update skipped",
                batch.index
            );
        }
        Ok(outcome)
    }
}

/// One Adam step on the masked-pilot loss. Returns the loss and whether the
/// parameters changed.
fn train_step<R: Real>(
    params: &mut ModelParams<R>,
    adam: &mut AdamState<R>,
    batch: &MiniBatch,
    forward: Option<(&Tensor4<R>, &crate::neural::ActivationCache<R>)>,
) -> Result<(f64, bool)> {
    let labels = batch.labels()?;
    let owned;
    let (out, cache) = match forward {
        Some(f) => f,
        None => {
            owned = conet_forward(params, &batch.input::<R>(&batch.mask)?)?;
            (&owned.0, &owned.1)
        }
    };
    let (loss, grads) = conet_backward(params, cache, out, &labels.bits, &labels.mask)?;
    let loss = loss.as_f64();
    if !loss.is_finite() || !grads.is_finite() {
        return Ok((loss, false));
    }
    adam_step(params, &grads, adam)?;
    Ok((loss, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_params, CoNetConfig};
    use crate::phy::{simulate_frame, LinkConfig};
    use crate::pilots::{make_plan, select_mask, PilotDesign};

    fn small_link() -> LinkConfig {
        LinkConfig {
            t: 6,
            f: 12,
            q: 4,
            snr_db: 15.0,
            ..LinkConfig::default()
        }
    }

    fn net() -> CoNetConfig {
        CoNetConfig {
            hidden: 4,
            blocks: 1,
            out_channels: 2,
            ..CoNetConfig::default()
        }
    }

    fn batch(cfg: &LinkConfig, index: u64, fraction: f64) -> MiniBatch {
        let design = PilotDesign::FullyScattered { density: 0.25 };
        let plan = make_plan(&design, cfg, 4, index).unwrap();
        let mask = select_mask(&plan, fraction, 4).unwrap();
        let frames = (0..3)
            .map(|s| simulate_frame(cfg, &plan, 50e-9, 4, index, s).unwrap())
            .collect();
        MiniBatch {
            index,
            plan,
            mask,
            frames,
        }
    }

    #[test]
    fn forward_pass_counts() {
        let cfg = small_link();
        let b = batch(&cfg, 0, 0.5);
        let p = init_params::<f64>(net(), 1).unwrap();
        let mut one = TrainerState::new(Architecture::I, p.clone(), AdamConfig::with_lr(1e-3));
        let mut two = TrainerState::new(Architecture::II, p, AdamConfig::with_lr(1e-3));
        for _ in 0..3 {
            assert!(one.step(&b, &UpdatePolicy::every(1)).unwrap().updated);
            assert!(two.step(&b, &UpdatePolicy::every(1)).unwrap().updated);
        }
        assert_eq!(one.forward_passes, 2 * 3 * 3);
        assert_eq!(two.forward_passes, 3 * 3);
    }

    #[test]
    fn repeated_batch_loss_drops() {
        let cfg = small_link();
        let b = batch(&cfg, 0, 0.5);
        let p = init_params::<f64>(net(), 2).unwrap();
        for arch in [Architecture::I, Architecture::II] {
            let mut ts = TrainerState::new(arch, p.clone(), AdamConfig::with_lr(1e-2));
            let first = ts.step(&b, &UpdatePolicy::every(1)).unwrap().loss.unwrap();
            let second = ts.step(&b, &UpdatePolicy::every(1)).unwrap().loss.unwrap();
            assert!(second <= first, "{arch:?}: {second} > {first}");
        }
    }

    #[test]
    fn never_firing_matches_a_fixed_receiver() {
        let cfg = small_link();
        let p = init_params::<f64>(net(), 3).unwrap();
        for arch in [Architecture::I, Architecture::II] {
            let mut ts = TrainerState::new(arch, p.clone(), AdamConfig::default());
            for i in 0..4 {
                let b = batch(&cfg, i, 0.5);
                let out = ts.step(&b, &UpdatePolicy::never()).unwrap();
                let empty = PilotMask::empty(cfg.t, cfg.f);
                let fixed = detect_batch(&p, &b, arch.detection_mask(&b, &empty)).unwrap();
                assert_eq!(out.results, fixed);
                assert!(!out.updated);
            }
            assert_eq!(*ts.detection_params(), p);
        }
    }

    #[test]
    fn no_mask_means_no_update() {
        let cfg = small_link();
        let p = init_params::<f64>(net(), 3).unwrap();
        let mut ts = TrainerState::new(Architecture::II, p.clone(), AdamConfig::default());
        for i in 0..3 {
            let out = ts
                .step(&batch(&cfg, i, 0.0), &UpdatePolicy::every(1))
                .unwrap();
            assert!(!out.updated && out.loss.is_none());
        }
        assert_eq!(ts.into_params(), p);
    }

    #[test]
    fn one_version_per_batch_and_cadence() {
        let cfg = small_link();
        let p = init_params::<f64>(net(), 5).unwrap();
        let mut ts = TrainerState::new(Architecture::I, p, AdamConfig::default());
        let policy = UpdatePolicy::every(2);
        let mut last: Option<u64> = None;
        for i in 0..6 {
            let out = ts.step(&batch(&cfg, i, 0.5), &policy).unwrap();
            let versions: Vec<_> = out.results.iter().map(|r| r.version).collect();
            assert!(versions.iter().all(|v| *v == versions[0]));
            assert_eq!(out.updated, i % 2 == 0);
            if let Some(prev) = last {
                assert!(versions[0].unwrap() >= prev);
            }
            last = versions[0];
        }
        assert_eq!(ts.updates, 3);
    }

    #[test]
    fn input_contents_per_architecture() {
        let cfg = small_link();
        let b = batch(&cfg, 0, 0.5);
        let empty = PilotMask::empty(cfg.t, cfg.f);
        let l = cfg.input_channels();
        let pilots_seen = |mask: &PilotMask| {
            let x = b.input::<f64>(mask).unwrap();
            x.sample(0)
                .data()
                .chunks_exact(l)
                .filter(|px| px[2 * cfg.k] != 0.0 || px[2 * cfg.k + 1] != 0.0)
                .count()
        };
        assert_eq!(
            pilots_seen(Architecture::I.detection_mask(&b, &empty)),
            b.plan.len()
        );
        assert_eq!(
            pilots_seen(Architecture::II.detection_mask(&b, &empty)),
            b.plan.len() - b.mask.len()
        );
    }
}
