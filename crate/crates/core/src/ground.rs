//! Ground and noise removal: progressive morphological filtering over a
//! minimum-elevation grid, and statistical outlier removal on k-NN distances.

use rayon::prelude::*;

use crate::cloud_io::{PointCloud, Raster};
use crate::error::{argument, Result};
use crate::spatial::KdIndex;

/// Progressive morphological filter settings. Distances are in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmfParams {
    pub cell_size: f64,
    pub max_window: f64,
    pub max_distance: f64,
    pub initial_distance: f64,
    pub slope: f64,
    pub window_base: u32,
}

impl Default for PmfParams {
    fn default() -> Self {
        PmfParams {
            cell_size: 1.0,
            max_window: 40.0,
            max_distance: 3.5,
            initial_distance: 0.5,
            slope: 1.0,
            window_base: 2,
        }
    }
}

/// One filtering stage: square window of side `2 * radius + 1` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmfStage {
    pub radius: usize,
    pub threshold: f64,
}

impl PmfParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.cell_size) {
            return Err(argument("pmf.cell_size must be > 0"));
        }
        if !(self.max_window.is_finite() && self.max_window >= self.cell_size) {
            return Err(argument("pmf.max_window must be >= pmf.cell_size"));
        }
        if !(self.initial_distance.is_finite() && self.initial_distance >= 0.0) {
            return Err(argument("pmf.initial_distance must be >= 0"));
        }
        if !(self.max_distance.is_finite() && self.initial_distance <= self.max_distance) {
            return Err(argument("pmf.initial_distance must be <= pmf.max_distance"));
        }
        if !(self.slope.is_finite() && self.slope >= 0.0) {
            return Err(argument("pmf.slope must be >= 0"));
        }
        if self.window_base < 2 {
            return Err(argument("pmf.window_base must be >= 2"));
        }
        Ok(())
    }

    /// Window radii `base^k` (in cells) while the window fits in
    /// `max_window`, then one final stage clamped to `max_window`.
    ///
    /// The elevation threshold grows with the window width accumulated since
    /// the first stage: `initial + slope * (w_k - w_0) * cell`, capped at
    /// `max_distance`.
    pub fn schedule(&self) -> Vec<PmfStage> {
        let max_radius = ((self.max_window / self.cell_size - 1.0) / 2.0).floor().max(0.0) as usize;
        let mut radii = Vec::new();
        let mut r = 1usize;
        loop {
            if r >= max_radius {
                if radii.last().is_none_or(|&last| max_radius > last) {
                    radii.push(max_radius);
                }
                break;
            }
            radii.push(r);
            r = r.saturating_mul(self.window_base as usize);
        }
        let width = |r: usize| (2 * r + 1) as f64;
        let w0 = width(radii[0]);
        radii
            .into_iter()
            .map(|radius| PmfStage {
                radius,
                threshold: (self.initial_distance + self.slope * (width(radius) - w0) * self.cell_size)
                    .min(self.max_distance),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SorParams {
    pub k: usize,
    pub sigma_mult: f64,
}

impl Default for SorParams {
    fn default() -> Self {
        SorParams { k: 8, sigma_mult: 2.0 }
    }
}

impl SorParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(argument("sor.k must be >= 1"));
        }
        if !(self.sigma_mult.is_finite() && self.sigma_mult > 0.0) {
            return Err(argument("sor.sigma_mult must be > 0"));
        }
        Ok(())
    }
}

/// Per-point flags; for ground filtering `true` means ground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundMask {
    pub flags: Vec<bool>,
    pub retained_count: usize,
}

impl GroundMask {
    pub fn from_flags(flags: Vec<bool>) -> Self {
        let retained_count = flags.iter().filter(|&&f| f).count();
        GroundMask { flags, retained_count }
    }

    /// One `0`/`1` per line.
    pub fn write<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for &f in &self.flags {
            writeln!(w, "{}", u8::from(f))?;
        }
        w.flush()
    }
}

/// Minimum z per grid cell, anchored at the cloud's minimum corner. Empty
/// cells take the value of the nearest non-empty cell (Euclidean distance in
/// cells, ties to the earliest cell in row-major order).
pub fn grid_min_surface(cloud: &PointCloud, cell_size: f64) -> Result<Raster> {
    if cloud.is_empty() {
        return Err(argument("cannot build a surface from an empty cloud"));
    }
    let grid = Raster::covering(&cloud.bounds(), cell_size)?;
    let (w, h) = (grid.width(), grid.height());
    let mut min = vec![f64::INFINITY; w * h];
    for p in cloud.positions() {
        let (c, r) = grid.cell_of(p[0], p[1]).expect("non-empty grid");
        let v = &mut min[r * w + c];
        *v = v.min(p[2]);
    }
    let filled: Vec<f64> = (0..w * h)
        .map(|idx| {
            if min[idx].is_finite() {
                min[idx]
            } else {
                min[nearest_filled(&min, w, h, idx % w, idx / w)]
            }
        })
        .collect();
    grid.with_band(filled)
}

fn nearest_filled(vals: &[f64], w: usize, h: usize, col: usize, row: usize) -> usize {
    let mut best: Option<(i64, usize)> = None;
    let (c, r) = (col as i64, row as i64);
    let max_ring = (w.max(h)) as i64;
    for ring in 1..=max_ring {
        if let Some((d2, _)) = best {
            if ring * ring > d2 {
                break;
            }
        }
        for dr in -ring..=ring {
            for dc in -ring..=ring {
                if dr.abs() != ring && dc.abs() != ring {
                    continue;
                }
                let (cc, rr) = (c + dc, r + dr);
                if cc < 0 || rr < 0 || cc >= w as i64 || rr >= h as i64 {
                    continue;
                }
                let idx = rr as usize * w + cc as usize;
                if !vals[idx].is_finite() {
                    continue;
                }
                let d2 = dc * dc + dr * dr;
                if best.is_none_or(|(bd, bi)| d2 < bd || (d2 == bd && idx < bi)) {
                    best = Some((d2, idx));
                }
            }
        }
    }
    best.expect("surface has at least one occupied cell").1
}

fn window_filter(src: &[f64], w: usize, h: usize, radius: usize, pick: fn(f64, f64) -> f64) -> Vec<f64> {
    // A truncated square window is the product of two truncated intervals.
    let mut rows = vec![0.0; src.len()];
    for r in 0..h {
        let line = &src[r * w..(r + 1) * w];
        for c in 0..w {
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(w - 1);
            rows[r * w + c] = line[lo..=hi].iter().copied().reduce(pick).unwrap();
        }
    }
    let mut out = vec![0.0; src.len()];
    for c in 0..w {
        for r in 0..h {
            let lo = r.saturating_sub(radius);
            let hi = (r + radius).min(h - 1);
            out[r * w + c] = (lo..=hi).map(|rr| rows[rr * w + c]).reduce(pick).unwrap();
        }
    }
    out
}

/// Grey-scale opening of band 0: windowed minimum, then windowed maximum,
/// over a `(2 * radius + 1)`-cell square truncated at the edges.
pub fn morphological_open(surface: &Raster, window_radius: usize) -> Raster {
    let (w, h) = (surface.width(), surface.height());
    let vals = surface.band(0);
    if window_radius == 0 || w == 0 || h == 0 {
        return surface.with_band(vals).expect("same geometry");
    }
    let eroded = window_filter(&vals, w, h, window_radius, f64::min);
    let opened = window_filter(&eroded, w, h, window_radius, f64::max);
    surface.with_band(opened).expect("same geometry")
}

/// Classifies ground points with a progressive morphological filter.
///
/// Each stage opens the current surface; cells whose surface drops by more
/// than the stage threshold are non-ground, and the opened surface feeds the
/// next stage. A point is ground when its cell was never flagged and it lies
/// within the last threshold of the last opened surface.
pub fn pmf_ground_mask(cloud: &PointCloud, params: &PmfParams) -> Result<GroundMask> {
    params.validate()?;
    let mut surface = grid_min_surface(cloud, params.cell_size)?;
    let stages = params.schedule();
    let mut flagged = vec![false; surface.width() * surface.height()];
    for stage in &stages {
        let opened = morphological_open(&surface, stage.radius);
        for (i, (before, after)) in surface.values().iter().zip(opened.values()).enumerate() {
            if before - after > stage.threshold {
                flagged[i] = true;
            }
        }
        surface = opened;
    }
    let last = stages.last().map_or(params.initial_distance, |s| s.threshold);
    let w = surface.width();
    let flags = cloud
        .positions()
        .iter()
        .map(|p| {
            let (c, r) = surface.cell_of(p[0], p[1]).expect("non-empty grid");
            let idx = r * w + c;
            !flagged[idx] && p[2] - surface.values()[idx] <= last
        })
        .collect();
    Ok(GroundMask::from_flags(flags))
}

/// Mean distance from every point to its `k` nearest neighbours.
pub fn mean_knn_distances(points: &[[f64; 3]], k: usize) -> Vec<f64> {
    let index = KdIndex::new(points);
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = index.knn(*p, k, Some(i));
            nn.iter().map(|(d2, _)| d2.sqrt()).sum::<f64>() / nn.len() as f64
        })
        .collect()
}

/// Flags points (`true` = outlier) whose mean k-NN distance exceeds
/// `mean + sigma_mult * std` of that statistic over the cloud.
pub fn statistical_outlier_mask(cloud: &PointCloud, params: &SorParams) -> Result<Vec<bool>> {
    params.validate()?;
    let n = cloud.len();
    if n <= params.k {
        return Err(argument(format!(
            "outlier removal needs more than k={} points, cloud has {n}",
            params.k
        )));
    }
    let stat = mean_knn_distances(cloud.positions(), params.k);
    let mean = stat.iter().sum::<f64>() / n as f64;
    let var = stat.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let limit = mean + params.sigma_mult * var.sqrt();
    Ok(stat.iter().map(|&d| d > limit).collect())
}
