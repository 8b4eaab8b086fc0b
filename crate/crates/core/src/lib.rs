//! memtrack: a tracker-agnostic memory-bank policy engine for video object
//! segmentation, plus a deterministic synthetic world to exercise it.
//!
//! The crate is organized around the per-frame pipeline: [`mask`] holds the
//! pixel-set kernels, [`hypothesis`] scores and refines the three per-frame
//! candidate masks, [`memory`] keeps the curated stores that condition the
//! next frame, [`tracker`] drives whole sequences under one of four memory
//! policies, [`synth`] renders scripted scenes and emulates a noisy mask
//! proposer, and [`metrics`] evaluates runs and sweeps.
//!
//! With the default `parallel` feature, scenario rendering and ablation
//! sweeps fan out via rayon; without it everything runs sequentially behind
//! the same API.

pub mod error;
pub mod hypothesis;
pub mod mask;
pub mod memory;
pub mod metrics;
pub mod par;
pub mod synth;
pub mod tracker;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

/// Identifier of one tracked object category.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
