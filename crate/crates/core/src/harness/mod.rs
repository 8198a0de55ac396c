//! Experiment configuration, drivers and output files.

mod config;
mod experiments;
mod output;

pub use config::{
    apply_overrides, ChannelSection, ContinualSection, Distribution, ExperimentConfig,
    GradcheckSection, ModelSection, PilotKind, PilotSection, ReceiverKind, ShiftSection,
    SweepSection, TrainingSection,
};
pub use experiments::*;
pub use output::{render_csv, write_csv, write_json, Provenance, SCHEMA_VERSION};
