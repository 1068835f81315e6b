//! Tree annotation for airborne LiDAR point clouds.
//!
//! The detection pipeline removes ground and noise ([`ground`]), voxelizes the
//! remaining returns into a sparse bit-tree ([`voxel`]), keeps voxels whose
//! pulses produced many returns and groups them into connected regions that
//! pass size and shape tests ([`detect`]). [`kernels`] holds the point-set
//! and tensor kernels used by learned classifiers, and [`eval`] scores
//! detections against ground truth.

pub mod cli;
pub mod cloud_io;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod ground;
pub mod kernels;
pub mod scene;
mod spatial;
pub mod voxel;

pub use error::{Error, Result};
