//! From-scratch differentiable layers, the star-shaped multi-branch network,
//! and Adam optimization.

pub mod adam;
pub mod layers;
pub mod star;
pub mod train;

pub use adam::Adam;
pub use layers::{softmax_xent, BatchNorm1d, Conv1d, Linear};
pub use star::{DescriptorBatch, StarConfig, StarNetwork, StarTape, SUPERVISOR_NAMES};
