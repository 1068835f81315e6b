//! Sparse voxel grids.
//!
//! Occupancy is held in a bit-tree with 4x4x4 branching: every node is one
//! 64-bit word whose set bits mark non-empty children, and leaf words mark
//! occupied voxels. Only non-empty nodes are stored, level by level in
//! tree order, so a child is found by counting the set bits that precede it
//! (a rank query). Per-voxel payloads are stored in the same order as the
//! leaf bits.
//!
//! ## Binary dump
//!
//! All values little-endian:
//!
//! ```text
//! "SVG1"
//! origin: 3 x f64, resolution: f64, dims: 3 x u32
//! level count: u32
//! per level: word count u64, then that many u64 words
//! payload count u64, then per occupied voxel sorted by (i * ny + j) * nz + k:
//!     linear index u64, max_returns u8, mean_intensity f64, point_count u32
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::cloud_io::{Bounds, PointCloud};
use crate::error::{argument, Error, Result};

pub const DUMP_MAGIC: &[u8; 4] = b"SVG1";
const BRANCH_BITS: u32 = 2;
const MAX_LEVELS: u32 = 10;

/// Integer voxel coordinates; ordering is lexicographic in `(i, j, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelIndex {
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl VoxelIndex {
    pub const fn new(i: u32, j: u32, k: u32) -> Self {
        VoxelIndex { i, j, k }
    }

    pub fn as_array(&self) -> [u32; 3] {
        [self.i, self.j, self.k]
    }
}

impl From<[u32; 3]> for VoxelIndex {
    fn from(a: [u32; 3]) -> Self {
        VoxelIndex::new(a[0], a[1], a[2])
    }
}

/// Placement and size of a voxel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub resolution: f64,
    pub dims: [u32; 3],
}

impl GridSpec {
    pub fn new(origin: [f64; 3], resolution: f64, dims: [u32; 3]) -> Result<Self> {
        let spec = GridSpec { origin, resolution, dims };
        spec.validate()?;
        Ok(spec)
    }

    /// A cubic tile of edge `tile_size` metres split into `dims` voxels per
    /// axis. A 100 m tile at 256 gives 0.390625 m voxels.
    pub fn tile(origin: [f64; 3], tile_size: f64, dims: u32) -> Result<Self> {
        GridSpec::new(origin, tile_size / dims as f64, [dims; 3])
    }

    /// Smallest grid at `resolution` anchored at the minimum corner of
    /// `bounds` that holds every point.
    pub fn covering(bounds: &Bounds, resolution: f64) -> Result<Self> {
        let Some(b) = bounds.aabb() else {
            return GridSpec::new([0.0; 3], resolution, [1; 3]);
        };
        let ext = b.extent();
        let n = |e: f64| ((e / resolution).ceil() as u32).max(1);
        GridSpec::new(b.min, resolution, [n(ext[0]), n(ext[1]), n(ext[2])])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(argument("grid.resolution must be > 0"));
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return Err(argument("grid.origin must be finite"));
        }
        let limit = 1u64 << (BRANCH_BITS * MAX_LEVELS);
        if self.dims.iter().any(|&d| d == 0 || d as u64 > limit) {
            return Err(argument(format!("grid.dims must lie in 1..={limit}")));
        }
        Ok(())
    }

    pub fn contains(&self, v: VoxelIndex) -> bool {
        v.i < self.dims[0] && v.j < self.dims[1] && v.k < self.dims[2]
    }

    pub fn voxel_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    /// Half-open floor indexing; a point on the far face of the grid joins
    /// the last voxel, anything further out is `None`.
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn voxel_of(&self, p: [f64; 3]) -> Option<VoxelIndex> {
        let mut out = [0u32; 3];
        for a in 0..3 {
            let t = (p[a] - self.origin[a]) / self.resolution;
            if !(t >= 0.0) {
                return None;
            }
            let n = self.dims[a] as f64;
            let f = t.floor();
            out[a] = if f < n {
                f as u32
            } else if t == n {
                self.dims[a] - 1
            } else {
                return None;
            };
        }
        Some(out.into())
    }

    pub fn voxel_min_corner(&self, v: VoxelIndex) -> [f64; 3] {
        let a = v.as_array();
        [0, 1, 2].map(|x| self.origin[x] + a[x] as f64 * self.resolution)
    }

    pub fn voxel_center(&self, v: VoxelIndex) -> [f64; 3] {
        let a = v.as_array();
        [0, 1, 2].map(|x| self.origin[x] + (a[x] as f64 + 0.5) * self.resolution)
    }

    /// Levels in the bit-tree: the smallest `L >= 1` with `4^L >= max dim`.
    pub fn levels(&self) -> u32 {
        let max = *self.dims.iter().max().unwrap() as u64;
        let mut levels = 1;
        while (1u64 << (BRANCH_BITS * levels)) < max {
            levels += 1;
        }
        levels
    }

    /// Row-major linear index `(i * ny + j) * nz + k`.
    pub fn linear(&self, v: VoxelIndex) -> u64 {
        (v.i as u64 * self.dims[1] as u64 + v.j as u64) * self.dims[2] as u64 + v.k as u64
    }

    pub fn from_linear(&self, n: u64) -> VoxelIndex {
        let nz = self.dims[2] as u64;
        let ny = self.dims[1] as u64;
        VoxelIndex::new((n / nz / ny) as u32, ((n / nz) % ny) as u32, (n % nz) as u32)
    }

    fn tree_key(&self, v: VoxelIndex, levels: u32) -> u64 {
        let mut key = 0u64;
        for l in 0..levels {
            key = (key << 6) | child_slot(v, levels - 1 - l) as u64;
        }
        key
    }

    fn decode_tree_key(&self, key: u64, levels: u32) -> VoxelIndex {
        let (mut i, mut j, mut k) = (0u32, 0u32, 0u32);
        for l in 0..levels {
            let slot = (key >> (6 * (levels - 1 - l))) & 63;
            i = (i << 2) | ((slot >> 4) & 3) as u32;
            j = (j << 2) | ((slot >> 2) & 3) as u32;
            k = (k << 2) | (slot & 3) as u32;
        }
        VoxelIndex::new(i, j, k)
    }
}

/// Bit of a voxel within the node `shift` levels above its leaf bit.
fn child_slot(v: VoxelIndex, shift: u32) -> u32 {
    let s = BRANCH_BITS * shift;
    (((v.i >> s) & 3) << 4) | (((v.j >> s) & 3) << 2) | ((v.k >> s) & 3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelPayload {
    /// Largest `number_of_returns` of the points in the voxel.
    pub max_returns: u8,
    pub mean_intensity: f64,
    pub point_count: u32,
}

/// Voxel adjacency: shared face, face or edge, or any contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Connectivity {
    pub fn count(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Neighbour offsets in lexicographic order.
    pub fn offsets(self) -> Vec<[i32; 3]> {
        let max_l1 = match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        };
        let mut out = Vec::with_capacity(self.count() as usize);
        for dx in -1..=1i32 {
            for dy in -1..=1i32 {
                for dz in -1..=1i32 {
                    let l1 = dx.abs() + dy.abs() + dz.abs();
                    if l1 > 0 && l1 <= max_l1 {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

impl TryFrom<u32> for Connectivity {
    type Error = Error;

    fn try_from(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(argument(format!("connectivity must be 6, 18 or 26, got {n}"))),
        }
    }
}

/// In-bounds neighbours of `v` under `connectivity`, lexicographic order.
pub fn neighbors(v: VoxelIndex, connectivity: Connectivity, dims: [u32; 3]) -> Result<Vec<VoxelIndex>> {
    let a = v.as_array();
    if (0..3).any(|x| a[x] >= dims[x]) {
        return Err(argument(format!("voxel {a:?} outside grid {dims:?}")));
    }
    Ok(connectivity
        .offsets()
        .into_iter()
        .filter_map(|d| {
            let mut n = [0u32; 3];
            for x in 0..3 {
                let c = a[x] as i64 + d[x] as i64;
                if c < 0 || c >= dims[x] as i64 {
                    return None;
                }
                n[x] = c as u32;
            }
            Some(n.into())
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    max_returns: u8,
    intensity_sum: f64,
    count: u32,
}

impl Accumulator {
    fn finish(&self) -> VoxelPayload {
        VoxelPayload {
            max_returns: self.max_returns,
            mean_intensity: self.intensity_sum / self.count as f64,
            point_count: self.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseVoxelGrid {
    spec: GridSpec,
    /// Word arrays from the root (level 0) down to the leaves.
    levels: Vec<Vec<u64>>,
    /// `ranks[l][n]` = set bits in `levels[l][..n]`.
    ranks: Vec<Vec<u32>>,
    payloads: Vec<VoxelPayload>,
    dropped: usize,
}

impl SparseVoxelGrid {
    /// Builds the tree from payloads keyed by tree key (sorted, unique).
    fn from_sorted(spec: GridSpec, entries: Vec<(u64, VoxelPayload)>, dropped: usize) -> Self {
        let depth = spec.levels();
        let mut levels: Vec<Vec<u64>> = vec![Vec::new(); depth as usize];
        for (l, words) in levels.iter_mut().enumerate() {
            let below = 6 * (depth - 1 - l as u32);
            let mut current: Option<(u64, u64)> = None;
            for &(key, _) in &entries {
                let prefix = (key >> below) >> 6;
                let bit = (key >> below) & 63;
                match &mut current {
                    Some((p, w)) if *p == prefix => *w |= 1 << bit,
                    _ => {
                        if let Some((_, w)) = current {
                            words.push(w);
                        }
                        current = Some((prefix, 1 << bit));
                    }
                }
            }
            if let Some((_, w)) = current {
                words.push(w);
            }
        }
        if levels[0].is_empty() {
            levels[0].push(0);
        }
        let ranks = levels
            .iter()
            .map(|words| {
                let mut acc = 0u32;
                words
                    .iter()
                    .map(|w| {
                        let r = acc;
                        acc += w.count_ones();
                        r
                    })
                    .collect()
            })
            .collect();
        SparseVoxelGrid {
            spec,
            levels,
            ranks,
            payloads: entries.into_iter().map(|(_, p)| p).collect(),
            dropped,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Points that fell outside the grid during voxelization.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn occupied_count(&self) -> usize {
        self.payloads.len()
    }

    pub fn level_words(&self) -> &[Vec<u64>] {
        &self.levels
    }

    /// Bytes used by occupancy words, root included.
    pub fn occupancy_bytes(&self) -> usize {
        self.levels.iter().map(|l| l.len() * 8).sum()
    }

    /// Bytes held by the per-level rank tables that speed up lookups.
    pub fn rank_bytes(&self) -> usize {
        self.ranks.iter().map(|r| r.len() * 4).sum()
    }

    fn payload_slot(&self, v: VoxelIndex) -> Option<usize> {
        let depth = self.levels.len() as u32;
        let mut node = 0usize;
        for l in 0..depth {
            let word = self.levels[l as usize][node];
            let bit = child_slot(v, depth - 1 - l);
            if word & (1u64 << bit) == 0 {
                return None;
            }
            node = self.ranks[l as usize][node] as usize + (word & ((1u64 << bit) - 1)).count_ones() as usize;
        }
        Some(node)
    }

    pub fn is_occupied(&self, v: VoxelIndex) -> Result<bool> {
        if !self.spec.contains(v) {
            return Err(argument(format!("voxel {:?} outside grid {:?}", v.as_array(), self.spec.dims)));
        }
        Ok(self.payload_slot(v).is_some())
    }

    pub fn payload(&self, v: VoxelIndex) -> Option<&VoxelPayload> {
        if !self.spec.contains(v) {
            return None;
        }
        self.payload_slot(v).map(|s| &self.payloads[s])
    }

    /// Occupied voxels in tree order, recovered by walking the hierarchy.
    fn walk(&self) -> Vec<VoxelIndex> {
        let depth = self.levels.len() as u32;
        let mut frontier: Vec<u64> = vec![0];
        for l in 0..depth as usize {
            let mut next = Vec::with_capacity(frontier.len() * 4);
            for (n, prefix) in frontier.iter().enumerate() {
                let mut word = self.levels[l][n];
                while word != 0 {
                    let bit = word.trailing_zeros() as u64;
                    next.push((prefix << 6) | bit);
                    word &= word - 1;
                }
            }
            frontier = next;
        }
        frontier.into_iter().map(|key| self.spec.decode_tree_key(key, depth)).collect()
    }

    /// Every occupied voxel once, in lexicographic `(i, j, k)` order.
    pub fn occupied_voxels(&self) -> Vec<(VoxelIndex, VoxelPayload)> {
        let mut out: Vec<(VoxelIndex, VoxelPayload)> =
            self.walk().into_iter().zip(self.payloads.iter().copied()).collect();
        out.sort_unstable_by_key(|(v, _)| *v);
        out
    }

    /// Rebuilds the hierarchy from the leaf level upward and compares it
    /// with the stored words.
    pub fn hierarchy_consistent(&self) -> bool {
        let depth = self.spec.levels();
        let keys: Vec<(u64, VoxelPayload)> = self
            .walk()
            .into_iter()
            .map(|v| (self.spec.tree_key(v, depth), VoxelPayload { max_returns: 0, mean_intensity: 0.0, point_count: 0 }))
            .collect();
        let rebuilt = SparseVoxelGrid::from_sorted(self.spec, keys, 0);
        rebuilt.levels == self.levels
            && self.payloads.len() == self.levels[depth as usize - 1].iter().map(|w| w.count_ones() as usize).sum::<usize>()
    }

    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        for v in self.spec.origin {
            w.write_f64::<LE>(v)?;
        }
        w.write_f64::<LE>(self.spec.resolution)?;
        for d in self.spec.dims {
            w.write_u32::<LE>(d)?;
        }
        w.write_u32::<LE>(self.levels.len() as u32)?;
        for words in &self.levels {
            w.write_u64::<LE>(words.len() as u64)?;
            for &word in words {
                w.write_u64::<LE>(word)?;
            }
        }
        let mut table: Vec<(u64, VoxelPayload)> = self
            .occupied_voxels()
            .into_iter()
            .map(|(v, p)| (self.spec.linear(v), p))
            .collect();
        table.sort_unstable_by_key(|e| e.0);
        w.write_u64::<LE>(table.len() as u64)?;
        for (idx, p) in table {
            w.write_u64::<LE>(idx)?;
            w.write_u8(p.max_returns)?;
            w.write_f64::<LE>(p.mean_intensity)?;
            w.write_u32::<LE>(p.point_count)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a dump and checks its words against the payload table.
    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let trunc = |e: std::io::Error| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated("voxel dump ends early".into())
            } else {
                Error::Io(e)
            }
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(trunc)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Format("missing SVG1 signature".into()));
        }
        let mut origin = [0.0; 3];
        for o in &mut origin {
            *o = r.read_f64::<LE>().map_err(trunc)?;
        }
        let resolution = r.read_f64::<LE>().map_err(trunc)?;
        let mut dims = [0u32; 3];
        for d in &mut dims {
            *d = r.read_u32::<LE>().map_err(trunc)?;
        }
        let spec = GridSpec::new(origin, resolution, dims).map_err(|e| Error::Format(e.to_string()))?;
        let depth = r.read_u32::<LE>().map_err(trunc)?;
        if depth != spec.levels() {
            return Err(Error::Format(format!("{depth} levels, grid needs {}", spec.levels())));
        }
        let mut levels = Vec::new();
        for _ in 0..depth {
            let n = r.read_u64::<LE>().map_err(trunc)?;
            let mut words = Vec::with_capacity(n.min(1 << 24) as usize);
            for _ in 0..n {
                words.push(r.read_u64::<LE>().map_err(trunc)?);
            }
            levels.push(words);
        }
        let n = r.read_u64::<LE>().map_err(trunc)?;
        let mut entries = Vec::with_capacity(n.min(1 << 24) as usize);
        for _ in 0..n {
            let idx = r.read_u64::<LE>().map_err(trunc)?;
            if idx >= spec.voxel_count() {
                return Err(Error::Format(format!("voxel index {idx} outside grid")));
            }
            let p = VoxelPayload {
                max_returns: r.read_u8().map_err(trunc)?,
                mean_intensity: r.read_f64::<LE>().map_err(trunc)?,
                point_count: r.read_u32::<LE>().map_err(trunc)?,
            };
            entries.push((spec.tree_key(spec.from_linear(idx), depth), p));
        }
        entries.sort_unstable_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Format("duplicate voxel in payload table".into()));
        }
        let grid = SparseVoxelGrid::from_sorted(spec, entries, 0);
        if grid.levels != levels {
            return Err(Error::Format("occupancy words disagree with payload table".into()));
        }
        Ok(grid)
    }
}

/// Bins points into `spec`. Payloads take the maximum `number_of_returns`
/// and the mean intensity of each voxel's points; points outside the grid
/// are counted in [`SparseVoxelGrid::dropped`].
pub fn voxelize(cloud: &PointCloud, spec: &GridSpec) -> Result<SparseVoxelGrid> {
    spec.validate()?;
    let depth = spec.levels();
    let mut keyed: Vec<(u64, u32)> = Vec::with_capacity(cloud.len());
    let mut dropped = 0;
    for (n, p) in cloud.positions().iter().enumerate() {
        match spec.voxel_of(*p) {
            Some(v) => keyed.push((spec.tree_key(v, depth), n as u32)),
            None => dropped += 1,
        }
    }
    keyed.sort_unstable();
    let returns = cloud.numbers_of_returns();
    let intensity = cloud.intensities();
    let mut entries: Vec<(u64, VoxelPayload)> = Vec::new();
    let mut current: Option<(u64, Accumulator)> = None;
    for (key, n) in keyed {
        let n = n as usize;
        match &mut current {
            Some((k, acc)) if *k == key => {
                acc.max_returns = acc.max_returns.max(returns[n]);
                acc.intensity_sum += intensity[n];
                acc.count += 1;
            }
            _ => {
                if let Some((k, acc)) = current.take() {
                    entries.push((k, acc.finish()));
                }
                current = Some((
                    key,
                    Accumulator { max_returns: returns[n], intensity_sum: intensity[n], count: 1 },
                ));
            }
        }
    }
    if let Some((k, acc)) = current {
        entries.push((k, acc.finish()));
    }
    Ok(SparseVoxelGrid::from_sorted(*spec, entries, dropped))
}
