//! Continual learning: update cadence from receiver timing, delay-spread
//! drift, the two fine-tuning architectures and the detect-and-adapt loop.

mod delay;
mod drift;
mod run;
mod trainer;

pub use delay::{backprop_delay, classify_case, DelayCase, DelayParams, UpdatePolicy};
pub use drift::{sample_tau_s, DriftEvent, DriftSchedule, DriftState, DriftVariant};
pub use run::{make_batch, run_continual, ContinualConfig, ContinualTrace, TraceRow};
pub use trainer::{detect_batch, Architecture, MiniBatch, StepOutcome, TrainerState};
