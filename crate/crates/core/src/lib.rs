//! Compact 2.5D hand keypoint network for memory- and compute-constrained
//! targets.
//!
//! * [`tensor`]: planar / interleaved tensors and kernel-stack packing
//! * [`conv`]: reference, packed and comb-dilated convolution kernels
//! * [`graph`]: architecture description, weights, accounting, forward pass
//! * [`loss`]: multi-task training losses with analytic gradients
//! * [`postprocess`]: amplitude synthesis, heatmap decoding, visibility gating, depth lifting

pub mod config;
pub mod conv;
pub mod error;
pub mod graph;
pub mod loss;
pub mod postprocess;
pub mod tensor;

pub use error::{Error, Result};
