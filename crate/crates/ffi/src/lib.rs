//! C ABI over `canopy-core`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`CanopyStatus`]; on failure [`canopy_last_error_message`] describes the
//! most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use canopy_core::cloud_io::{read_cloud_file, PointCloud, PointRecord};
use canopy_core::detect::{detect_trees, DetectorConfig, TreeRegion};
use canopy_core::eval::{match_stems, prf, EvalCounts};
use canopy_core::ground::{PmfParams, SorParams};
use canopy_core::kernels::farthest_point_sampling;
use canopy_core::voxel::{voxelize, Connectivity, GridSpec, SparseVoxelGrid, VoxelIndex};
use canopy_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CanopyStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Io = 3,
    Parse = 4,
    Format = 5,
    Unsupported = 6,
    Internal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CanopyStatus, msg: impl Into<String>) -> CanopyStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> CanopyStatus {
    let status = match &e {
        Error::Argument(_) | Error::Config(_) | Error::Validation(_) => CanopyStatus::InvalidArgument,
        Error::Io(_) => CanopyStatus::Io,
        Error::Parse { .. } => CanopyStatus::Parse,
        Error::Format(_) | Error::Truncated(_) => CanopyStatus::Format,
        Error::Unsupported(_) => CanopyStatus::Unsupported,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into [`CanopyStatus::Internal`].
fn guard(f: impl FnOnce() -> CanopyStatus) -> CanopyStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(CanopyStatus::Internal, "internal error"))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(CanopyStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn canopy_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Point cloud handle.
pub struct CanopyCloud(PointCloud);

/// Reads a `.las` file or a whitespace-separated text cloud.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn canopy_cloud_read(path: *const c_char, out: *mut *mut CanopyCloud) -> CanopyStatus {
    non_null!(path, out);
    guard(|| {
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(CanopyStatus::InvalidArgument, "path is not UTF-8");
        };
        match read_cloud_file(Path::new(path)) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(CanopyCloud(c)));
                CanopyStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Builds a cloud from `n` interleaved xyz triples. `number_of_returns` may
/// be null (every point then has a single return).
///
/// # Safety
/// `xyz` must hold `3 * n` values and `number_of_returns`, when not null,
/// `n` values.
#[no_mangle]
pub unsafe extern "C" fn canopy_cloud_from_xyz(
    xyz: *const f64,
    number_of_returns: *const u8,
    n: usize,
    out: *mut *mut CanopyCloud,
) -> CanopyStatus {
    non_null!(out);
    if n > 0 {
        non_null!(xyz);
    }
    guard(|| {
        let coords = if n == 0 { &[][..] } else { std::slice::from_raw_parts(xyz, 3 * n) };
        let records = (0..n).map(|i| {
            let nr = if number_of_returns.is_null() { 1 } else { *number_of_returns.add(i) };
            PointRecord::at(coords[3 * i], coords[3 * i + 1], coords[3 * i + 2]).with_returns(1, nr)
        });
        match PointCloud::from_records(records) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(CanopyCloud(c)));
                CanopyStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `cloud` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn canopy_cloud_len(cloud: *const CanopyCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `cloud` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn canopy_cloud_free(cloud: *mut CanopyCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Pipeline settings; start from [`canopy_detect_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CanopyDetectParams {
    pub pmf_cell_size: f64,
    pub pmf_max_window: f64,
    pub pmf_max_distance: f64,
    pub pmf_initial_distance: f64,
    pub pmf_slope: f64,
    pub sor_k: u32,
    pub sor_sigma_mult: f64,
    /// Voxel edge in metres; the grid covers the cloud.
    pub grid_resolution: f64,
    pub ret_thresh: u32,
    pub comp_threshold: u32,
    pub aspect_limit: f64,
    /// 6, 18 or 26.
    pub connectivity: u32,
}

#[no_mangle]
pub extern "C" fn canopy_detect_params_default() -> CanopyDetectParams {
    let (pmf, sor, det) = (PmfParams::default(), SorParams::default(), DetectorConfig::default());
    CanopyDetectParams {
        pmf_cell_size: pmf.cell_size,
        pmf_max_window: pmf.max_window,
        pmf_max_distance: pmf.max_distance,
        pmf_initial_distance: pmf.initial_distance,
        pmf_slope: pmf.slope,
        sor_k: sor.k as u32,
        sor_sigma_mult: sor.sigma_mult,
        grid_resolution: canopy_core::config::DEFAULT_RESOLUTION,
        ret_thresh: det.ret_thresh,
        comp_threshold: det.comp_threshold as u32,
        aspect_limit: det.aspect_limit,
        connectivity: det.connectivity.count() as u32,
    }
}

/// Detected trees handle.
pub struct CanopyTrees(Vec<TreeRegion>);

/// One detected tree: stem position, trunk box and voxel count.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CanopyTree {
    pub stem_x: f64,
    pub stem_y: f64,
    pub min_x: f64,
    pub min_y: f64,
    pub min_z: f64,
    pub max_x: f64,
    pub max_y: f64,
    pub max_z: f64,
    pub size: usize,
}

/// # Safety
/// `cloud` must be a live handle, `params` null (defaults) or valid, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn canopy_detect_trees(
    cloud: *const CanopyCloud,
    params: *const CanopyDetectParams,
    out: *mut *mut CanopyTrees,
) -> CanopyStatus {
    non_null!(cloud, out);
    guard(|| {
        let p = params.as_ref().copied().unwrap_or_else(|| canopy_detect_params_default());
        let Ok(connectivity) = Connectivity::try_from(p.connectivity) else {
            return fail(CanopyStatus::InvalidArgument, format!("connectivity must be 6, 18 or 26, got {}", p.connectivity));
        };
        let pmf = PmfParams {
            cell_size: p.pmf_cell_size,
            max_window: p.pmf_max_window,
            max_distance: p.pmf_max_distance,
            initial_distance: p.pmf_initial_distance,
            slope: p.pmf_slope,
            ..PmfParams::default()
        };
        let sor = SorParams { k: p.sor_k as usize, sigma_mult: p.sor_sigma_mult };
        let det = DetectorConfig {
            ret_thresh: p.ret_thresh,
            comp_threshold: p.comp_threshold as usize,
            aspect_limit: p.aspect_limit,
            connectivity,
        };
        let cloud = &(*cloud).0;
        let run = || -> canopy_core::Result<Vec<TreeRegion>> {
            pmf.validate()?;
            let spec = canopy_core::config::GridConfig { resolution: p.grid_resolution, dims: None, origin: None }
                .spec_for(&cloud.bounds())?;
            detect_trees(cloud, &spec, &pmf, &sor, &det)
        };
        match run() {
            Ok(t) => {
                *out = Box::into_raw(Box::new(CanopyTrees(t)));
                CanopyStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `trees` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn canopy_trees_len(trees: *const CanopyTrees) -> usize {
    trees.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `trees` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn canopy_trees_get(trees: *const CanopyTrees, index: usize, out: *mut CanopyTree) -> CanopyStatus {
    non_null!(trees, out);
    let trees = &*trees;
    let Some(r) = trees.0.get(index) else {
        return fail(CanopyStatus::InvalidArgument, format!("tree index {index} out of range"));
    };
    let b = &r.trunk_box;
    *out = CanopyTree {
        stem_x: r.stem[0],
        stem_y: r.stem[1],
        min_x: b.min[0],
        min_y: b.min[1],
        min_z: b.min[2],
        max_x: b.max[0],
        max_y: b.max[1],
        max_z: b.max[2],
        size: r.size,
    };
    CanopyStatus::Ok
}

/// # Safety
/// `trees` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn canopy_trees_free(trees: *mut CanopyTrees) {
    if !trees.is_null() {
        drop(Box::from_raw(trees));
    }
}

/// Sparse voxel grid handle.
pub struct CanopyGrid(SparseVoxelGrid);

/// Voxelizes `cloud` into a grid with minimum corner `origin[3]`, edge
/// `resolution` and `dims[3]` voxels per axis.
///
/// # Safety
/// `origin` and `dims` must each hold three values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn canopy_voxelize(
    cloud: *const CanopyCloud,
    origin: *const f64,
    resolution: f64,
    dims: *const u32,
    out: *mut *mut CanopyGrid,
) -> CanopyStatus {
    non_null!(cloud, origin, dims, out);
    guard(|| {
        let o = std::slice::from_raw_parts(origin, 3);
        let d = std::slice::from_raw_parts(dims, 3);
        let grid = GridSpec::new([o[0], o[1], o[2]], resolution, [d[0], d[1], d[2]]).and_then(|s| voxelize(&(*cloud).0, &s));
        match grid {
            Ok(g) => {
                *out = Box::into_raw(Box::new(CanopyGrid(g)));
                CanopyStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `grid` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn canopy_grid_occupied_count(grid: *const CanopyGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.occupied_count())
}

/// Points that fell outside the grid.
///
/// # Safety
/// `grid` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn canopy_grid_dropped(grid: *const CanopyGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.dropped())
}

/// # Safety
/// `grid` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn canopy_grid_is_occupied(grid: *const CanopyGrid, i: u32, j: u32, k: u32, out: *mut bool) -> CanopyStatus {
    non_null!(grid, out);
    let grid = &*grid;
    match grid.0.is_occupied(VoxelIndex::new(i, j, k)) {
        Ok(v) => {
            *out = v;
            CanopyStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// # Safety
/// `grid` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn canopy_grid_free(grid: *mut CanopyGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CanopyReport {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

/// Precision, recall and F-score; ratios with a zero denominator are 0.
#[no_mangle]
pub extern "C" fn canopy_prf(tp: u64, fp: u64, fn_: u64) -> CanopyReport {
    let r = prf(EvalCounts::new(tp, fp, fn_));
    CanopyReport { tp, fp, fn_, precision: r.precision, recall: r.recall, f_score: r.f_score }
}

/// One-to-one stem matching within `radius`; stems are interleaved xy
/// pairs.
///
/// # Safety
/// `predicted` must hold `2 * n_predicted` values, `truth` `2 * n_truth`
/// values (either may be null when its count is 0), `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn canopy_match_stems(
    predicted: *const f64,
    n_predicted: usize,
    truth: *const f64,
    n_truth: usize,
    radius: f64,
    out: *mut CanopyReport,
) -> CanopyStatus {
    non_null!(out);
    if (n_predicted > 0 && predicted.is_null()) || (n_truth > 0 && truth.is_null()) {
        return fail(CanopyStatus::NullPointer, "stem array is null");
    }
    guard(|| {
        let pairs = |p: *const f64, n: usize| -> Vec<[f64; 2]> {
            if n == 0 {
                return Vec::new();
            }
            std::slice::from_raw_parts(p, 2 * n).chunks_exact(2).map(|c| [c[0], c[1]]).collect()
        };
        match match_stems(&pairs(predicted, n_predicted), &pairs(truth, n_truth), radius) {
            Ok(m) => {
                let c = m.counts;
                *out = canopy_prf(c.tp, c.fp, c.fn_);
                CanopyStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Furthest point sampling of `m` of `n` interleaved xyz points starting at
/// `start`; writes `m` indices to `out_indices`.
///
/// # Safety
/// `points` must hold `3 * n` values and `out_indices` room for `m`.
#[no_mangle]
pub unsafe extern "C" fn canopy_fps(points: *const f64, n: usize, m: usize, start: usize, out_indices: *mut usize) -> CanopyStatus {
    non_null!(points, out_indices);
    guard(|| {
        let pts: Vec<[f64; 3]> = std::slice::from_raw_parts(points, 3 * n).chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        match farthest_point_sampling(&pts, m, start) {
            Ok(sel) => {
                std::slice::from_raw_parts_mut(out_indices, m).copy_from_slice(&sel);
                CanopyStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
