//! Tractogram filtering toolkit.
//!
//! Labels white-matter streamlines as plausible / implausible / inconclusive
//! by combining four rule-based supervisors, and trains a multi-branch 1D
//! convolutional classifier to replicate those labels from five
//! per-streamline descriptors. Includes an ablation harness that measures
//! each descriptor's predictive value by substituting its data with noise.

pub mod ablation;
pub mod dataset;
pub mod descriptor;
pub mod ensemble;
pub mod error;
pub mod geom;
pub mod metrics;
pub mod nn;
pub mod sampler;
pub mod seed;
pub mod sh;
pub mod streamline;
pub mod supervisors;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
