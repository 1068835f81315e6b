//! Deterministic point-set and tensor kernels used by learned tree
//! classifiers: furthest point sampling, ball-query grouping, k-NN
//! inverse-distance interpolation, block sampling, class-weighted
//! cross-entropy and a reference 3D convolution.

mod conv;
mod interp;
mod loss;
mod sampling;

pub use conv::{conv3d_forward, ConvSpec, Volume};
pub use interp::{idw_interpolate, IDW_EPSILON};
pub use loss::{class_weights, weighted_cross_entropy, ClassCounts, LossInput};
pub use sampling::{ball_query, farthest_point_sampling, sample_blocks, BallGroup};

use crate::error::{argument, Result};

/// Sampling and grouping layer geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub n_centroids: usize,
    pub radius: f64,
    pub group_size: usize,
    pub coord_dim: usize,
    pub feature_dim: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { n_centroids: 1024, radius: 1.5, group_size: 32, coord_dim: 3, feature_dim: 3 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_centroids == 0 {
            return Err(argument("kernel.n_centroids must be >= 1"));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(argument("kernel.radius must be > 0"));
        }
        if self.group_size == 0 {
            return Err(argument("kernel.group_size must be >= 1"));
        }
        if self.coord_dim != 3 {
            return Err(argument("kernel.coord_dim must be 3"));
        }
        Ok(())
    }

    /// Shape of the grouped output: `(N_l, K, d + C)`.
    pub fn grouped_shape(&self) -> (usize, usize, usize) {
        (self.n_centroids, self.group_size, self.coord_dim + self.feature_dim)
    }
}

pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}
