//! Link-level OFDM simulation and online fine-tuning of a neural soft-bit
//! receiver.
//!
//! The crate is organised bottom-up:
//!
//! - [`neural`]: dense tensors, a compact two-subnet convolutional receiver
//!   network, masked BCE loss, reverse-mode gradients and Adam.
//! - [`phy`]: QAM mapping, tapped-delay-line fading, AWGN, LS/LMMSE
//!   baselines and max-log demapping.
//! - [`pilots`]: learning-demodulation pilot plans, masking and the receiver
//!   input tensor.
//! - [`receiver`]: neural and LMMSE detectors behind one result type.
//! - [`online`]: update-cadence delay model, delay-spread drift schedules and
//!   the two fine-tuning architectures.
//! - [`harness`]: configuration, experiment drivers and CSV output used by
//!   the `olrx` binary.

pub mod error;
pub mod harness;
pub mod neural;
pub mod online;
pub mod phy;
pub mod pilots;
pub mod receiver;
pub mod seeds;

pub use error::{Error, Result};
