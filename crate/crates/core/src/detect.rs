//! Multi-return tree detection.
//!
//! Voxels whose pulses produced more than `ret_thresh` returns are grouped
//! into connected components; components larger than `comp_threshold` with a
//! roughly square footprint become [`TreeRegion`]s. The module also turns
//! per-window classifier labels into per-voxel labels by overlap voting.

use std::collections::HashMap;
use std::io::Write;

use crate::cloud_io::{Aabb, PointCloud};
use crate::error::{argument, Result};
use crate::ground::{pmf_ground_mask, statistical_outlier_mask, PmfParams, SorParams};
use crate::voxel::{neighbors, voxelize, Connectivity, GridSpec, SparseVoxelGrid, VoxelIndex};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Voxels need strictly more returns than this.
    pub ret_thresh: u32,
    /// Components need strictly more voxels than this.
    pub comp_threshold: usize,
    /// Footprints are kept while `max(ex/ey, ey/ex) < aspect_limit`.
    pub aspect_limit: f64,
    pub connectivity: Connectivity,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            ret_thresh: 3,
            comp_threshold: 20,
            aspect_limit: 2.0,
            connectivity: Connectivity::Eighteen,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.comp_threshold < 1 {
            return Err(argument("detector.comp_threshold must be >= 1"));
        }
        if !(self.aspect_limit.is_finite() && self.aspect_limit > 1.0) {
            return Err(argument("detector.aspect_limit must be > 1"));
        }
        Ok(())
    }
}

/// A detected tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeRegion {
    /// Member voxels, sorted.
    pub voxels: Vec<VoxelIndex>,
    pub size: usize,
    pub bbox_min: VoxelIndex,
    pub bbox_max: VoxelIndex,
    /// Footprint centroid in metres.
    pub stem: [f64; 2],
    /// Footprint from ground level up to the top of the highest voxel.
    pub trunk_box: Aabb,
}

/// Occupied voxels whose maximum number of returns exceeds `ret_thresh`.
pub fn filter_high_return_voxels(grid: &SparseVoxelGrid, ret_thresh: u32) -> Vec<VoxelIndex> {
    grid.occupied_voxels()
        .into_iter()
        .filter(|(_, p)| p.max_returns as u32 > ret_thresh)
        .map(|(v, _)| v)
        .collect()
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Partitions `voxels` into maximal connected subsets. Each component is
/// sorted; components are ordered by their smallest member. Duplicate input
/// voxels are ignored.
pub fn connected_components(
    voxels: &[VoxelIndex],
    connectivity: Connectivity,
    dims: [u32; 3],
) -> Result<Vec<Vec<VoxelIndex>>> {
    let mut set: Vec<VoxelIndex> = voxels.to_vec();
    set.sort_unstable();
    set.dedup();
    if let Some(v) = set.iter().find(|v| (0..3).any(|a| v.as_array()[a] >= dims[a])) {
        return Err(argument(format!("voxel {:?} outside grid {dims:?}", v.as_array())));
    }
    let slot: HashMap<VoxelIndex, usize> = set.iter().enumerate().map(|(n, v)| (*v, n)).collect();
    let mut ds = DisjointSet::new(set.len());
    for (n, v) in set.iter().enumerate() {
        for nb in neighbors(*v, connectivity, dims)? {
            // each edge once
            if nb > *v {
                if let Some(&m) = slot.get(&nb) {
                    ds.union(n, m);
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<VoxelIndex>> = HashMap::new();
    for (n, v) in set.iter().enumerate() {
        groups.entry(ds.find(n)).or_default().push(*v);
    }
    // members were pushed in sorted order
    let mut out: Vec<Vec<VoxelIndex>> = groups.into_values().collect();
    out.sort_unstable_by_key(|c| c[0]);
    Ok(out)
}

/// Footprint extents in voxels along x and y.
pub fn footprint_extents(voxels: &[VoxelIndex]) -> (u32, u32) {
    let (mut lo, mut hi) = ([u32::MAX; 2], [0u32; 2]);
    for v in voxels {
        lo[0] = lo[0].min(v.i);
        lo[1] = lo[1].min(v.j);
        hi[0] = hi[0].max(v.i);
        hi[1] = hi[1].max(v.j);
    }
    (hi[0] - lo[0] + 1, hi[1] - lo[1] + 1)
}

/// Whether a footprint is close enough to square.
pub fn passes_aspect(ex: u32, ey: u32, aspect_limit: f64) -> bool {
    let (a, b) = (ex as f64, ey as f64);
    (a / b).max(b / a) < aspect_limit
}

fn region_from(voxels: Vec<VoxelIndex>, spec: &GridSpec, ground: impl Fn(&Aabb) -> f64) -> TreeRegion {
    let mut lo = [u32::MAX; 3];
    let mut hi = [0u32; 3];
    for v in &voxels {
        let a = v.as_array();
        for x in 0..3 {
            lo[x] = lo[x].min(a[x]);
            hi[x] = hi[x].max(a[x]);
        }
    }
    let mut columns: Vec<(u32, u32)> = voxels.iter().map(|v| (v.i, v.j)).collect();
    columns.sort_unstable();
    columns.dedup();
    let res = spec.resolution;
    let n = columns.len() as f64;
    let cx = columns.iter().map(|c| c.0 as f64 + 0.5).sum::<f64>() / n;
    let cy = columns.iter().map(|c| c.1 as f64 + 0.5).sum::<f64>() / n;
    let stem = [spec.origin[0] + cx * res, spec.origin[1] + cy * res];
    let min = spec.voxel_min_corner(lo.into());
    let top = spec.voxel_min_corner(hi.into());
    let mut trunk_box = Aabb {
        min,
        max: [top[0] + res, top[1] + res, top[2] + res],
    };
    trunk_box.min[2] = ground(&trunk_box);
    TreeRegion {
        size: voxels.len(),
        bbox_min: lo.into(),
        bbox_max: hi.into(),
        stem,
        trunk_box,
        voxels,
    }
}

fn extract_with(
    components: Vec<Vec<VoxelIndex>>,
    spec: &GridSpec,
    config: &DetectorConfig,
    ground: impl Fn(&Aabb) -> f64,
) -> Vec<TreeRegion> {
    components
        .into_iter()
        .filter(|c| c.len() > config.comp_threshold)
        .filter(|c| {
            let (ex, ey) = footprint_extents(c);
            passes_aspect(ex, ey, config.aspect_limit)
        })
        .map(|c| region_from(c, spec, &ground))
        .collect()
}

/// Applies the size and aspect tests to `components` and localizes stems.
/// Trunk boxes start at `ground_elevation`.
pub fn extract_tree_regions(
    components: Vec<Vec<VoxelIndex>>,
    grid: &SparseVoxelGrid,
    config: &DetectorConfig,
    ground_elevation: f64,
) -> Vec<TreeRegion> {
    extract_with(components, grid.spec(), config, |_| ground_elevation)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Ground, outlier and voxel stages shared by [`detect_trees`] and callers
/// that want the intermediate products.
#[derive(Debug, Clone)]
pub struct Detection {
    pub ground: Vec<bool>,
    /// Indices of the points that were voxelized.
    pub kept: Vec<usize>,
    pub grid: Option<SparseVoxelGrid>,
    pub regions: Vec<TreeRegion>,
}

/// Full pipeline: ground filter, outlier removal on the non-ground points,
/// voxelization, return thresholding, connected components and region tests.
///
/// Trunk boxes start at the median ground height inside their footprint,
/// or the tile-wide ground median when the footprint holds no ground points.
pub fn detect_trees(
    cloud: &PointCloud,
    grid_spec: &GridSpec,
    pmf: &PmfParams,
    sor: &SorParams,
    config: &DetectorConfig,
) -> Result<Vec<TreeRegion>> {
    Ok(run_detection(cloud, grid_spec, pmf, sor, config)?.regions)
}

pub fn run_detection(
    cloud: &PointCloud,
    grid_spec: &GridSpec,
    pmf: &PmfParams,
    sor: &SorParams,
    config: &DetectorConfig,
) -> Result<Detection> {
    config.validate()?;
    sor.validate()?;
    grid_spec.validate()?;
    if cloud.is_empty() {
        return Err(argument("cannot detect trees in an empty cloud"));
    }
    let ground = pmf_ground_mask(cloud, pmf)?.flags;
    let non_ground: Vec<usize> = (0..cloud.len()).filter(|&i| !ground[i]).collect();
    let mut detection = Detection { ground, kept: Vec::new(), grid: None, regions: Vec::new() };
    if non_ground.is_empty() {
        return Ok(detection);
    }
    let candidates = cloud.select(&non_ground);
    // Too few points for neighbour statistics: keep them all.
    let kept: Vec<usize> = if candidates.len() > sor.k {
        let outlier = statistical_outlier_mask(&candidates, sor)?;
        non_ground.iter().zip(outlier).filter(|(_, o)| !o).map(|(&i, _)| i).collect()
    } else {
        non_ground
    };
    let grid = voxelize(&cloud.select(&kept), grid_spec)?;
    let high = filter_high_return_voxels(&grid, config.ret_thresh);
    let components = connected_components(&high, config.connectivity, grid_spec.dims)?;

    let ground_pts: Vec<[f64; 3]> = cloud
        .positions()
        .iter()
        .zip(&detection.ground)
        .filter(|(_, g)| **g)
        .map(|(p, _)| *p)
        .collect();
    let tile_median = median(&mut ground_pts.iter().map(|p| p[2]).collect::<Vec<_>>()).unwrap_or(grid_spec.origin[2]);
    let ground_level = |b: &Aabb| {
        let mut zs: Vec<f64> = ground_pts
            .iter()
            .filter(|p| p[0] >= b.min[0] && p[0] <= b.max[0] && p[1] >= b.min[1] && p[1] <= b.max[1])
            .map(|p| p[2])
            .collect();
        median(&mut zs).unwrap_or(tile_median)
    };
    detection.regions = extract_with(components, grid.spec(), config, ground_level);
    detection.kept = kept;
    detection.grid = Some(grid);
    Ok(detection)
}

/// Tree CSV: `tree_id,stem_x,stem_y,min_x,min_y,max_x,max_y,max_z,size`,
/// ids starting at 1.
pub fn write_tree_csv<W: Write>(regions: &[TreeRegion], mut w: W) -> Result<()> {
    writeln!(w, "tree_id,stem_x,stem_y,min_x,min_y,max_x,max_y,max_z,size")?;
    for (n, r) in regions.iter().enumerate() {
        let b = &r.trunk_box;
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            n + 1,
            r.stem[0],
            r.stem[1],
            b.min[0],
            b.min[1],
            b.max[0],
            b.max[1],
            b.max[2],
            r.size
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Axis-aligned voxel box `[start, start + size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowExtent {
    pub start: [u32; 3],
    pub size: [u32; 3],
}

impl WindowExtent {
    pub fn contains(&self, v: VoxelIndex) -> bool {
        let a = v.as_array();
        (0..3).all(|x| a[x] >= self.start[x] && a[x] < self.start[x] + self.size[x])
    }
}

fn window_starts(n: u32, w: u32, stride: u32) -> Vec<u32> {
    let mut starts: Vec<u32> = (0..).map(|s| s * stride).take_while(|s| s + w <= n).collect();
    if starts.last().is_some_and(|&s| s + w < n) {
        starts.push(n - w);
    }
    starts
}

/// Windows sliding over x and y with the given strides. The last row and
/// column sit flush with the grid edge; each window spans the full grid
/// height.
pub fn sliding_windows(dims: [u32; 3], window: [u32; 3], stride: [u32; 2]) -> Result<Vec<WindowExtent>> {
    if (0..3).any(|a| window[a] == 0 || window[a] > dims[a]) {
        return Err(argument(format!("window {window:?} does not fit grid {dims:?}")));
    }
    if stride.contains(&0) {
        return Err(argument("window stride must be >= 1"));
    }
    let xs = window_starts(dims[0], window[0], stride[0]);
    let ys = window_starts(dims[1], window[1], stride[1]);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &x in &xs {
        for &y in &ys {
            out.push(WindowExtent { start: [x, y, 0], size: [window[0], window[1], dims[2]] });
        }
    }
    Ok(out)
}

/// Per-voxel window votes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteField {
    dims: [u32; 3],
    votes: Vec<u32>,
    positives: Vec<u32>,
}

impl VoteField {
    fn slot(&self, v: VoxelIndex) -> usize {
        ((v.i as usize * self.dims[1] as usize) + v.j as usize) * self.dims[2] as usize + v.k as usize
    }

    pub fn votes(&self, v: VoxelIndex) -> u32 {
        self.votes[self.slot(v)]
    }

    pub fn positives(&self, v: VoxelIndex) -> u32 {
        self.positives[self.slot(v)]
    }

    /// Share of positive votes; `None` for an uncovered voxel.
    pub fn confidence(&self, v: VoxelIndex) -> Option<f64> {
        let n = self.votes(v);
        (n > 0).then(|| self.positives(v) as f64 / n as f64)
    }

    /// CSV `i,j,k,votes,positives` for every covered voxel.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,k,votes,positives")?;
        let (ny, nz) = (self.dims[1] as usize, self.dims[2] as usize);
        for (n, (&v, &p)) in self.votes.iter().zip(&self.positives).enumerate() {
            if v > 0 {
                writeln!(w, "{},{},{},{v},{p}", n / nz / ny, (n / nz) % ny, n % nz)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Fuses overlapping window labels: a voxel is positive when strictly more
/// than `threshold` of the windows covering it are positive.
pub fn vote_fusion(
    windows: &[(WindowExtent, bool)],
    dims: [u32; 3],
    threshold: f64,
) -> Result<(VoteField, Vec<VoxelIndex>)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(argument(format!("vote threshold {threshold} outside [0, 1]")));
    }
    let total = dims.iter().map(|&d| d as usize).product();
    let mut field = VoteField { dims, votes: vec![0; total], positives: vec![0; total] };
    for (ext, positive) in windows {
        if (0..3).any(|a| ext.start[a] as u64 + ext.size[a] as u64 > dims[a] as u64) {
            return Err(argument(format!("window {ext:?} exceeds grid {dims:?}")));
        }
        for i in ext.start[0]..ext.start[0] + ext.size[0] {
            for j in ext.start[1]..ext.start[1] + ext.size[1] {
                let base = field.slot(VoxelIndex::new(i, j, ext.start[2]));
                for s in base..base + ext.size[2] as usize {
                    field.votes[s] += 1;
                    if *positive {
                        field.positives[s] += 1;
                    }
                }
            }
        }
    }
    let (ny, nz) = (dims[1] as usize, dims[2] as usize);
    let positive = (0..total)
        .filter(|&s| field.votes[s] > 0 && field.positives[s] as f64 / field.votes[s] as f64 > threshold)
        .map(|s| VoxelIndex::new((s / nz / ny) as u32, ((s / nz) % ny) as u32, (s % nz) as u32))
        .collect();
    Ok((field, positive))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud_io::PointRecord;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(i: u32, j: u32, k: u32) -> VoxelIndex {
        VoxelIndex::new(i, j, k)
    }

    fn grid_with(voxels: &[(VoxelIndex, u8)], dims: u32) -> SparseVoxelGrid {
        let spec = GridSpec::new([0.0; 3], 1.0, [dims; 3]).unwrap();
        let recs: Vec<PointRecord> = voxels
            .iter()
            .map(|(v, n)| PointRecord::at(v.i as f64 + 0.5, v.j as f64 + 0.5, v.k as f64 + 0.5).with_returns(1, *n))
            .collect();
        voxelize(&PointCloud::from_records(recs).unwrap(), &spec).unwrap()
    }

    #[test]
    fn return_threshold_is_strict() {
        let g = grid_with(&[(v(0, 0, 0), 4), (v(1, 0, 0), 3), (v(2, 0, 0), 7)], 4);
        assert_eq!(filter_high_return_voxels(&g, 3), vec![v(0, 0, 0), v(2, 0, 0)]);
        let empty = grid_with(&[], 4);
        assert!(filter_high_return_voxels(&empty, 3).is_empty());
    }

    #[test]
    fn raising_threshold_shrinks_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vox: Vec<(VoxelIndex, u8)> = (0..300)
            .map(|_| (v(rng.random_range(0..16), rng.random_range(0..16), rng.random_range(0..16)), rng.random_range(1..8)))
            .collect();
        let g = grid_with(&vox, 16);
        for t in 0..8 {
            let lo = filter_high_return_voxels(&g, t);
            let hi = filter_high_return_voxels(&g, t + 1);
            assert!(hi.iter().all(|x| lo.contains(x)));
        }
    }

    #[test]
    fn single_voxel_component() {
        let c = connected_components(&[v(3, 3, 3)], Connectivity::Eighteen, [8; 3]).unwrap();
        assert_eq!(c, vec![vec![v(3, 3, 3)]]);
    }

    #[test]
    fn corner_contact_depends_on_connectivity() {
        let pair = [v(1, 1, 1), v(2, 2, 2)];
        assert_eq!(connected_components(&pair, Connectivity::Eighteen, [4; 3]).unwrap().len(), 2);
        assert_eq!(connected_components(&pair, Connectivity::TwentySix, [4; 3]).unwrap().len(), 1);
        let edge = [v(1, 1, 1), v(2, 2, 1)];
        assert_eq!(connected_components(&edge, Connectivity::Six, [4; 3]).unwrap().len(), 2);
        assert_eq!(connected_components(&edge, Connectivity::Eighteen, [4; 3]).unwrap().len(), 1);
    }

    #[test]
    fn out_of_range_component_input() {
        assert!(connected_components(&[v(4, 0, 0)], Connectivity::Six, [4; 3]).is_err());
    }

    /// Depth-first flood fill over a dense occupancy array.
    fn flood_fill(occ: &[bool], n: u32, conn: Connectivity) -> Vec<Vec<VoxelIndex>> {
        let idx = |v: VoxelIndex| ((v.i * n + v.j) * n + v.k) as usize;
        let mut seen = vec![false; occ.len()];
        let mut comps = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let s = v(i, j, k);
                    if !occ[idx(s)] || seen[idx(s)] {
                        continue;
                    }
                    let mut comp = Vec::new();
                    let mut stack = vec![s];
                    seen[idx(s)] = true;
                    while let Some(c) = stack.pop() {
                        comp.push(c);
                        for d in conn.offsets() {
                            let a = [c.i as i64 + d[0] as i64, c.j as i64 + d[1] as i64, c.k as i64 + d[2] as i64];
                            if a.iter().any(|&x| x < 0 || x >= n as i64) {
                                continue;
                            }
                            let nb = v(a[0] as u32, a[1] as u32, a[2] as u32);
                            if occ[idx(nb)] && !seen[idx(nb)] {
                                seen[idx(nb)] = true;
                                stack.push(nb);
                            }
                        }
                    }
                    comp.sort();
                    comps.push(comp);
                }
            }
        }
        comps
    }

    #[test]
    fn components_match_flood_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for conn in [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix] {
            for _ in 0..10 {
                let n = 16u32;
                let occ: Vec<bool> = (0..n * n * n).map(|_| rng.random_bool(0.3)).collect();
                let set: Vec<VoxelIndex> = (0..n * n * n)
                    .filter(|&s| occ[s as usize])
                    .map(|s| v(s / n / n, (s / n) % n, s % n))
                    .collect();
                let got = connected_components(&set, conn, [n; 3]).unwrap();
                assert_eq!(got, flood_fill(&occ, n, conn));
            }
        }
    }

    fn cube(at: [u32; 3], side: [u32; 3]) -> Vec<VoxelIndex> {
        let mut out = Vec::new();
        for i in 0..side[0] {
            for j in 0..side[1] {
                for k in 0..side[2] {
                    out.push(v(at[0] + i, at[1] + j, at[2] + k));
                }
            }
        }
        out
    }

    #[test]
    fn size_test_is_strict() {
        let g = grid_with(&[], 32);
        let cfg = DetectorConfig { comp_threshold: 27, ..Default::default() };
        assert!(extract_tree_regions(vec![cube([0, 0, 0], [3, 3, 3])], &g, &cfg, 0.0).is_empty());
        let cfg = DetectorConfig { comp_threshold: 26, ..Default::default() };
        assert_eq!(extract_tree_regions(vec![cube([0, 0, 0], [3, 3, 3])], &g, &cfg, 0.0).len(), 1);
    }

    #[test]
    fn elongated_footprint_rejected() {
        let g = grid_with(&[], 32);
        let cfg = DetectorConfig::default();
        assert!(extract_tree_regions(vec![cube([0, 0, 0], [10, 4, 2])], &g, &cfg, 0.0).is_empty());
        assert!(extract_tree_regions(vec![cube([0, 0, 0], [4, 10, 2])], &g, &cfg, 0.0).is_empty());
        // exactly 2 is rejected too
        assert!(extract_tree_regions(vec![cube([0, 0, 0], [8, 4, 2])], &g, &cfg, 0.0).is_empty());
        assert_eq!(extract_tree_regions(vec![cube([0, 0, 0], [7, 4, 2])], &g, &cfg, 0.0).len(), 1);
    }

    #[test]
    fn cube_region_geometry() {
        let g = grid_with(&[], 32);
        let r = extract_tree_regions(vec![cube([10, 4, 6], [5, 5, 5])], &g, &DetectorConfig::default(), -1.5);
        assert_eq!(r.len(), 1);
        let r = &r[0];
        assert_eq!(r.size, 125);
        assert_eq!(r.stem, [12.5, 6.5]);
        assert_eq!((r.bbox_min, r.bbox_max), (v(10, 4, 6), v(14, 8, 10)));
        assert_eq!(r.trunk_box.min, [10.0, 4.0, -1.5]);
        assert_eq!(r.trunk_box.max, [15.0, 9.0, 11.0]);
    }

    proptest! {
        #[test]
        fn aspect_test_is_symmetric(ex in 1u32..60, ey in 1u32..60, limit in 1.01f64..5.0) {
            prop_assert_eq!(passes_aspect(ex, ey, limit), passes_aspect(ey, ex, limit));
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(sliding_windows([40, 40, 100], [20, 20, 100], [10, 10]).unwrap().len(), 9);
        assert_eq!(sliding_windows([20, 20, 100], [20, 20, 100], [10, 10]).unwrap().len(), 1);
        let w = sliding_windows([50, 20, 100], [20, 20, 100], [10, 10]).unwrap();
        let xs: Vec<u32> = w.iter().map(|e| e.start[0]).collect();
        assert_eq!(xs, vec![0, 10, 20, 30]);
        let w = sliding_windows([45, 20, 100], [20, 20, 100], [10, 10]).unwrap();
        let xs: Vec<u32> = w.iter().map(|e| e.start[0]).collect();
        assert_eq!(xs, vec![0, 10, 20, 25]);
        assert!(sliding_windows([10, 40, 100], [20, 20, 100], [10, 10]).is_err());
    }

    #[test]
    fn vote_boundaries() {
        let dims = [1, 1, 1];
        let ext = WindowExtent { start: [0; 3], size: [1; 3] };
        let labels = |pos: usize| -> Vec<(WindowExtent, bool)> { (0..5).map(|n| (ext, n < pos)).collect() };
        let (f, p) = vote_fusion(&labels(3), dims, 0.4).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(f.confidence(v(0, 0, 0)), Some(0.6));
        let (_, p) = vote_fusion(&labels(2), dims, 0.4).unwrap();
        assert!(p.is_empty());
        let (f, p) = vote_fusion(&[], dims, 0.4).unwrap();
        assert!(p.is_empty());
        assert_eq!(f.confidence(v(0, 0, 0)), None);
    }

    #[test]
    fn vote_positive_set_shrinks_with_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let dims = [40, 40, 10];
        let windows: Vec<(WindowExtent, bool)> = sliding_windows(dims, [20, 20, 10], [10, 10])
            .unwrap()
            .into_iter()
            .map(|w| (w, rng.random_bool(0.5)))
            .collect();
        let mut prev = usize::MAX;
        for t in [0.0, 0.2, 0.4, 0.5, 0.75, 1.0] {
            let n = vote_fusion(&windows, dims, t).unwrap().1.len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn tree_csv_layout() {
        let g = grid_with(&[], 32);
        let r = extract_tree_regions(vec![cube([0, 0, 0], [5, 5, 5])], &g, &DetectorConfig::default(), 0.0);
        let mut buf = Vec::new();
        write_tree_csv(&r, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "tree_id,stem_x,stem_y,min_x,min_y,max_x,max_y,max_z,size");
        assert_eq!(lines[1], "1,2.500000,2.500000,0.000000,0.000000,5.000000,5.000000,5.000000,125");
    }
}
