//! Procedural airborne-LiDAR tiles with known tree positions: a ground
//! plane, trees with dense multi-return ellipsoidal canopies, flat-roofed
//! buildings whose edges return a few multi-return pulses, and optionally
//! an ivy-covered wall slab.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud_io::{Aabb, PointCloud, PointRecord};
use crate::error::{argument, Result};
use crate::voxel::GridSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub tile_size: f64,
    pub margin: f64,
    /// Minimum clear gap between object footprints.
    pub gap: f64,
    pub n_trees: usize,
    pub n_buildings: usize,
    pub ivy_wall: bool,
    pub ground_spacing: f64,
    /// Canopy points per cubic metre.
    pub canopy_density: f64,
    pub canopy_radius: (f64, f64),
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            tile_size: 100.0,
            margin: 8.0,
            gap: 3.0,
            n_trees: 3,
            n_buildings: 1,
            ivy_wall: false,
            ground_spacing: 0.5,
            canopy_density: 30.0,
            canopy_radius: (2.0, 3.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeTruth {
    pub stem: [f64; 2],
    pub canopy_radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub cloud: PointCloud,
    pub origin: [f64; 3],
    pub tile_size: f64,
    pub trees: Vec<TreeTruth>,
    pub buildings: Vec<Aabb>,
    pub wall: Option<Aabb>,
}

impl Scene {
    /// A cubic grid over the tile with `dims` voxels per axis, its floor a
    /// few metres below the ground.
    pub fn grid_spec(&self, dims: u32) -> Result<GridSpec> {
        GridSpec::tile(self.origin, self.tile_size, dims)
    }

    pub fn stems(&self) -> Vec<[f64; 2]> {
        self.trees.iter().map(|t| t.stem).collect()
    }
}

/// Footprint `[x0, y0, x1, y1]`.
type Footprint = [f64; 4];

fn clear_of(a: &Footprint, b: &Footprint, gap: f64) -> bool {
    a[2] + gap <= b[0] || b[2] + gap <= a[0] || a[3] + gap <= b[1] || b[3] + gap <= a[1]
}

struct Placer<'a> {
    rng: &'a mut ChaCha8Rng,
    params: &'a SceneParams,
    taken: Vec<Footprint>,
}

impl Placer<'_> {
    /// Finds a spot for a `w` x `h` footprint by rejection sampling.
    fn place(&mut self, w: f64, h: f64) -> Result<Footprint> {
        let p = self.params;
        let (lo, hi_x, hi_y) = (p.margin, p.tile_size - p.margin - w, p.tile_size - p.margin - h);
        if hi_x <= lo || hi_y <= lo {
            return Err(argument("object does not fit inside the tile margins"));
        }
        for _ in 0..10_000 {
            let x = self.rng.random_range(lo..hi_x);
            let y = self.rng.random_range(lo..hi_y);
            let f = [x, y, x + w, y + h];
            if self.taken.iter().all(|t| clear_of(t, &f, p.gap)) {
                self.taken.push(f);
                return Ok(f);
            }
        }
        Err(argument("scene too crowded to place every object"))
    }
}

fn high_returns(rng: &mut ChaCha8Rng) -> u8 {
    if rng.random_bool(0.85) {
        rng.random_range(4..=6)
    } else {
        rng.random_range(1..=3)
    }
}

fn point(x: f64, y: f64, z: f64, return_number: u8, number_of_returns: u8, intensity: f64, class: u8) -> PointRecord {
    let mut p = PointRecord::at(x, y, z).with_returns(return_number, number_of_returns).with_intensity(intensity);
    p.classification = class;
    p
}

/// Generates a scene; equal parameters and seed give identical clouds.
pub fn generate_scene(params: &SceneParams, seed: u64) -> Result<Scene> {
    if !(params.tile_size > 2.0 * params.margin && params.ground_spacing > 0.0 && params.canopy_density > 0.0) {
        return Err(argument("invalid scene parameters"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = [0.0, 0.0, 0.0];
    let tilt = [rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02)];
    let ground_z = |x: f64, y: f64| base[2] + tilt[0] * x + tilt[1] * y;

    let mut placer = Placer { rng: &mut rng, params, taken: Vec::new() };
    let mut wall_fp = None;
    if params.ivy_wall {
        let along_x = placer.rng.random_bool(0.5);
        let (w, h) = if along_x { (20.0, 2.0) } else { (2.0, 20.0) };
        wall_fp = Some(placer.place(w, h)?);
    }
    let mut building_fps = Vec::new();
    for _ in 0..params.n_buildings {
        let w = placer.rng.random_range(8.0..14.0);
        let h = placer.rng.random_range(8.0..14.0);
        building_fps.push(placer.place(w, h)?);
    }
    let mut tree_fps = Vec::new();
    for _ in 0..params.n_trees {
        let r = placer.rng.random_range(params.canopy_radius.0..=params.canopy_radius.1);
        let f = placer.place(2.0 * r, 2.0 * r)?;
        tree_fps.push((f, r));
    }

    let mut pts = Vec::new();
    let mut trees = Vec::new();
    for &(f, r) in &tree_fps {
        let (cx, cy) = (0.5 * (f[0] + f[2]), 0.5 * (f[1] + f[3]));
        let gz = ground_z(cx, cy);
        let trunk = rng.random_range(2.0..5.0);
        let half_h = rng.random_range(0.7..1.0) * r;
        let centre_z = gz + trunk + half_h;
        let volume = 4.0 / 3.0 * std::f64::consts::PI * r * r * half_h;
        let n = (volume * params.canopy_density).round() as usize;
        let mut placed = 0;
        while placed < n {
            let u = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0f64)];
            if u.iter().map(|v| v * v).sum::<f64>() > 1.0 {
                continue;
            }
            let nr = high_returns(&mut rng);
            let rn = rng.random_range(1..=nr);
            pts.push(point(cx + u[0] * r, cy + u[1] * r, centre_z + u[2] * half_h, rn, nr, rng.random_range(20.0..120.0), 5));
            placed += 1;
        }
        let trunk_r = rng.random_range(0.15..0.25);
        let mut z = gz + 0.3;
        while z < centre_z {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let nr = rng.random_range(1..=2);
            pts.push(point(cx + trunk_r * a.cos(), cy + trunk_r * a.sin(), z, nr, nr, rng.random_range(80.0..200.0), 5));
            z += rng.random_range(0.2..0.4);
        }
        trees.push(TreeTruth { stem: [cx, cy], canopy_radius: r, height: centre_z + half_h - gz });
    }

    let mut buildings = Vec::new();
    for f in &building_fps {
        let roof = ground_z(f[0], f[1]).max(ground_z(f[2], f[3])) + rng.random_range(5.0..9.0);
        let s = params.ground_spacing;
        let mut x = f[0] + 0.5 * s;
        while x < f[2] {
            let mut y = f[1] + 0.5 * s;
            while y < f[3] {
                let jx = rng.random_range(-0.2..0.2) * s;
                let jy = rng.random_range(-0.2..0.2) * s;
                pts.push(point(x + jx, y + jy, roof + rng.random_range(-0.03..0.03), 1, 1, rng.random_range(150.0..255.0), 6));
                y += s;
            }
            x += s;
        }
        // Pulses clipping the roof edge split into several returns.
        let corners = [[f[0], f[1]], [f[2], f[1]], [f[2], f[3]], [f[0], f[3]]];
        for e in 0..4 {
            let (a, b) = (corners[e], corners[(e + 1) % 4]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let mut t = rng.random_range(0.0..1.5);
            while t < len {
                let (x, y) = (a[0] + (b[0] - a[0]) * t / len, a[1] + (b[1] - a[1]) * t / len);
                let nr = rng.random_range(4..=5);
                pts.push(point(x, y, roof - rng.random_range(0.0..0.5), rng.random_range(1..=nr), nr, rng.random_range(30.0..90.0), 6));
                t += rng.random_range(1.5..3.0);
            }
        }
        buildings.push(Aabb { min: [f[0], f[1], ground_z(f[0], f[1])], max: [f[2], f[3], roof] });
    }

    let wall = wall_fp.map(|f| {
        let gz = ground_z(0.5 * (f[0] + f[2]), 0.5 * (f[1] + f[3]));
        let top = gz + rng.random_range(5.0..7.0);
        let n = ((f[2] - f[0]) * (f[3] - f[1]) * (top - gz) * params.canopy_density).round() as usize;
        for _ in 0..n {
            let x = rng.random_range(f[0]..f[2]);
            let y = rng.random_range(f[1]..f[3]);
            let z = rng.random_range(gz..top);
            let nr = high_returns(&mut rng);
            pts.push(point(x, y, z, rng.random_range(1..=nr), nr, rng.random_range(20.0..120.0), 1));
        }
        Aabb { min: [f[0], f[1], gz], max: [f[2], f[3], top] }
    });

    let s = params.ground_spacing;
    let steps = (params.tile_size / s).round() as usize;
    for a in 0..steps {
        for b in 0..steps {
            let x = (a as f64 + 0.5 + rng.random_range(-0.3..0.3)) * s;
            let y = (b as f64 + 0.5 + rng.random_range(-0.3..0.3)) * s;
            if building_fps.iter().any(|f| x >= f[0] && x <= f[2] && y >= f[1] && y <= f[3]) {
                continue;
            }
            let under_canopy = trees.iter().any(|t| (x - t.stem[0]).powi(2) + (y - t.stem[1]).powi(2) <= t.canopy_radius.powi(2));
            let (rn, nr) = if under_canopy {
                let nr = rng.random_range(3..=5);
                (nr, nr)
            } else {
                (1, 1)
            };
            let z = ground_z(x, y) + rng.random_range(-0.03..0.03);
            pts.push(point(x, y, z, rn, nr, rng.random_range(40.0..160.0), 2));
        }
    }

    let min_ground = [ground_z(0.0, 0.0), ground_z(params.tile_size, 0.0), ground_z(0.0, params.tile_size), ground_z(params.tile_size, params.tile_size)]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(Scene {
        cloud: PointCloud::from_records(pts)?,
        origin: [0.0, 0.0, (min_ground - 3.0).floor()],
        tile_size: params.tile_size,
        trees,
        buildings,
        wall,
    })
}
