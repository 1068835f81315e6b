//! TOML run configuration. Every key is optional; unknown keys are errors.
//!
//! ```toml
//! [pmf]
//! cell_size = 1.0
//! max_window = 40.0
//! max_distance = 3.5
//! initial_distance = 0.5
//! slope = 1.0
//! window_base = 2
//!
//! [sor]
//! k = 8
//! sigma_mult = 2.0
//!
//! [grid]
//! resolution = 0.390625
//! dims = 256            # or [nx, ny, nz]; omitted: cover the cloud
//! origin = [0.0, 0.0, 0.0]  # omitted: the cloud's minimum corner
//!
//! [detector]
//! ret_thresh = 3
//! comp_threshold = 20
//! aspect_limit = 2.0
//! connectivity = 18
//!
//! [kernel]
//! n_centroids = 1024
//! radius = 1.5
//! group_size = 32
//! block_size = 15.0
//! n_points = 4096
//! n_blocks = 16
//!
//! [eval]
//! radius = 1.5
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::cloud_io::Bounds;
use crate::detect::DetectorConfig;
use crate::error::{Error, Result};
use crate::eval::DEFAULT_MATCH_RADIUS;
use crate::ground::{PmfParams, SorParams};
use crate::kernels::KernelConfig;
use crate::voxel::{Connectivity, GridSpec};

/// Edge of a 100 m tile split into 256 voxels.
pub const DEFAULT_RESOLUTION: f64 = 100.0 / 256.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub resolution: f64,
    pub dims: Option<[u32; 3]>,
    pub origin: Option<[f64; 3]>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { resolution: DEFAULT_RESOLUTION, dims: None, origin: None }
    }
}

impl GridConfig {
    /// Resolves missing origin and dims against the cloud bounds.
    pub fn spec_for(&self, bounds: &Bounds) -> Result<GridSpec> {
        let b = bounds.aabb();
        let origin = self.origin.or(b.map(|b| b.min)).unwrap_or([0.0; 3]);
        let dims = match (self.dims, b) {
            (Some(d), _) => d,
            (None, Some(b)) => {
                let n = |a: usize| (((b.max[a] - origin[a]) / self.resolution).floor() as i64 + 1).clamp(1, 1 << 18) as u32;
                [n(0), n(1), n(2)]
            }
            (None, None) => [1; 3],
        };
        GridSpec::new(origin, self.resolution, dims)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub block_size: f64,
    pub n_points: usize,
    pub n_blocks: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { block_size: 15.0, n_points: 4096, n_blocks: 16 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pmf: PmfParams,
    pub sor: SorParams,
    pub grid: GridConfig,
    pub detector: DetectorConfig,
    pub kernel: KernelConfig,
    pub sampling: SamplingConfig,
    pub eval_radius: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pmf: PmfParams::default(),
            sor: SorParams::default(),
            grid: GridConfig::default(),
            detector: DetectorConfig::default(),
            kernel: KernelConfig::default(),
            sampling: SamplingConfig::default(),
            eval_radius: DEFAULT_MATCH_RADIUS,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Raw {
    pmf: RawPmf,
    sor: RawSor,
    grid: RawGrid,
    detector: RawDetector,
    kernel: RawKernel,
    eval: RawEval,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawPmf {
    cell_size: Option<f64>,
    max_window: Option<f64>,
    max_distance: Option<f64>,
    initial_distance: Option<f64>,
    slope: Option<f64>,
    window_base: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSor {
    k: Option<i64>,
    sigma_mult: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawDims {
    Cube(i64),
    Box([i64; 3]),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGrid {
    resolution: Option<f64>,
    dims: Option<RawDims>,
    origin: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDetector {
    ret_thresh: Option<i64>,
    comp_threshold: Option<i64>,
    aspect_limit: Option<f64>,
    connectivity: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawKernel {
    n_centroids: Option<i64>,
    radius: Option<f64>,
    group_size: Option<i64>,
    block_size: Option<f64>,
    n_points: Option<i64>,
    n_blocks: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawEval {
    radius: Option<f64>,
}

fn invalid(field: &str, rule: &str, got: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field} must be {rule}, got {got}"))
}

fn int(field: &str, v: Option<i64>, min: i64, default: i64) -> Result<i64> {
    match v {
        None => Ok(default),
        Some(x) if x < min || x > u32::MAX as i64 => Err(invalid(field, &format!(">= {min}"), x)),
        Some(x) => Ok(x),
    }
}

fn positive(field: &str, v: Option<f64>, default: f64) -> Result<f64> {
    match v {
        None => Ok(default),
        Some(x) if !(x.is_finite() && x > 0.0) => Err(invalid(field, "> 0", x)),
        Some(x) => Ok(x),
    }
}

fn non_negative(field: &str, v: Option<f64>, default: f64) -> Result<f64> {
    match v {
        None => Ok(default),
        Some(x) if !(x.is_finite() && x >= 0.0) => Err(invalid(field, ">= 0", x)),
        Some(x) => Ok(x),
    }
}

/// Re-labels a validation failure from the library as a config error.
fn recheck(r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Argument(m) => Error::Config(m),
        other => other,
    })
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: Raw = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let d = RunConfig::default();

        let pmf = PmfParams {
            cell_size: positive("pmf.cell_size", raw.pmf.cell_size, d.pmf.cell_size)?,
            max_window: positive("pmf.max_window", raw.pmf.max_window, d.pmf.max_window)?,
            max_distance: non_negative("pmf.max_distance", raw.pmf.max_distance, d.pmf.max_distance)?,
            initial_distance: non_negative("pmf.initial_distance", raw.pmf.initial_distance, d.pmf.initial_distance)?,
            slope: non_negative("pmf.slope", raw.pmf.slope, d.pmf.slope)?,
            window_base: int("pmf.window_base", raw.pmf.window_base, 2, d.pmf.window_base as i64)? as u32,
        };
        recheck(pmf.validate())?;

        let sor = SorParams {
            k: int("sor.k", raw.sor.k, 1, d.sor.k as i64)? as usize,
            sigma_mult: positive("sor.sigma_mult", raw.sor.sigma_mult, d.sor.sigma_mult)?,
        };

        let dims = match raw.grid.dims {
            None => None,
            Some(RawDims::Cube(n)) => {
                let n = int("grid.dims", Some(n), 1, 0)? as u32;
                Some([n; 3])
            }
            Some(RawDims::Box(v)) => {
                let mut out = [0; 3];
                for a in 0..3 {
                    out[a] = int("grid.dims", Some(v[a]), 1, 0)? as u32;
                }
                Some(out)
            }
        };
        if let Some(o) = raw.grid.origin {
            if o.iter().any(|v| !v.is_finite()) {
                return Err(invalid("grid.origin", "finite", format!("{o:?}")));
            }
        }
        let grid = GridConfig {
            resolution: positive("grid.resolution", raw.grid.resolution, d.grid.resolution)?,
            dims,
            origin: raw.grid.origin,
        };
        if let Some(dims) = grid.dims {
            recheck(GridSpec::new(grid.origin.unwrap_or([0.0; 3]), grid.resolution, dims).map(|_| ()))?;
        }

        let connectivity = match raw.detector.connectivity {
            None => d.detector.connectivity,
            Some(n) => u32::try_from(n)
                .ok()
                .and_then(|n| Connectivity::try_from(n).ok())
                .ok_or_else(|| invalid("detector.connectivity", "6, 18 or 26", n))?,
        };
        let detector = DetectorConfig {
            ret_thresh: int("detector.ret_thresh", raw.detector.ret_thresh, 0, d.detector.ret_thresh as i64)? as u32,
            comp_threshold: int("detector.comp_threshold", raw.detector.comp_threshold, 1, d.detector.comp_threshold as i64)? as usize,
            aspect_limit: match raw.detector.aspect_limit {
                Some(a) if !(a.is_finite() && a > 1.0) => return Err(invalid("detector.aspect_limit", "> 1", a)),
                a => a.unwrap_or(d.detector.aspect_limit),
            },
            connectivity,
        };

        let kernel = KernelConfig {
            n_centroids: int("kernel.n_centroids", raw.kernel.n_centroids, 1, d.kernel.n_centroids as i64)? as usize,
            radius: positive("kernel.radius", raw.kernel.radius, d.kernel.radius)?,
            group_size: int("kernel.group_size", raw.kernel.group_size, 1, d.kernel.group_size as i64)? as usize,
            ..d.kernel
        };
        let sampling = SamplingConfig {
            block_size: positive("kernel.block_size", raw.kernel.block_size, d.sampling.block_size)?,
            n_points: int("kernel.n_points", raw.kernel.n_points, 1, d.sampling.n_points as i64)? as usize,
            n_blocks: int("kernel.n_blocks", raw.kernel.n_blocks, 1, d.sampling.n_blocks as i64)? as usize,
        };

        Ok(RunConfig {
            pmf,
            sor,
            grid,
            detector,
            kernel,
            sampling,
            eval_radius: positive("eval.radius", raw.eval.radius, d.eval_radius)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}
