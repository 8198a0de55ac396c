//! Parameter slot shared between an inference context and a trainer.
//!
//! Readers take an `Arc` snapshot and run a whole forward pass on it;
//! [`SharedParams::publish`] builds the new parameter set off to the side and
//! swaps the pointer, so a reader sees either the old or the new version,
//! never a mix.

use std::sync::{Arc, RwLock};

use crate::error::{config_err, Result};

use super::conet::ModelParams;
use super::tensor::Real;

#[derive(Debug)]
pub struct SharedParams<R> {
    slot: RwLock<Arc<ModelParams<R>>>,
}

impl<R: Real> SharedParams<R> {
    pub fn new(params: ModelParams<R>) -> Self {
        Self {
            slot: RwLock::new(Arc::new(params)),
        }
    }

    pub fn snapshot(&self) -> Arc<ModelParams<R>> {
        self.slot.read().expect("parameter lock poisoned").clone()
    }

    pub fn version(&self) -> u64 {
        self.snapshot().version
    }

    /// Copy `src` in as the next version. Returns that version.
    pub fn publish(&self, src: &ModelParams<R>) -> Result<u64> {
        let mut next = src.clone();
        let mut slot = self.slot.write().expect("parameter lock poisoned");
        if !slot.is_congruent(src) {
            return Err(config_err("publish: parameter structures differ"));
        }
        next.version = slot.version.max(src.version) + 1;
        let version = next.version;
        *slot = Arc::new(next);
        Ok(version)
    }
}
