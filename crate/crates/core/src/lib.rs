//! Multi-object tracking core for low-light scenes.
//!
//! Everything here is pure computation over `alloc` collections: box
//! geometry, the constant-velocity Kalman motion model with observation
//! centric re-update, appearance-gated association, cost-based
//! pseudo-label assignment, semi-supervised loss arithmetic, the adaptive
//! teacher update loop, the low-light augmentation pipeline, MOT metrics
//! and a synthetic scenario generator. File formats and the command line
//! live in the `crtrack` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod anu;
pub mod asa;
pub mod association;
pub mod augment;
pub mod error;
pub mod geometry;
pub mod lap;
pub mod metrics;
pub mod motion;
pub mod ssl_loss;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, Detection, EmbeddingVec, Prediction, PseudoBox};
