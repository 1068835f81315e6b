use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dist2;
use crate::cloud_io::PointCloud;
use crate::error::{argument, Result};

/// Greedy furthest point sampling from `start_index`: each pick maximizes
/// the distance to the closest point already picked, lowest index on ties.
pub fn farthest_point_sampling(points: &[[f64; 3]], m: usize, start_index: usize) -> Result<Vec<usize>> {
    if m == 0 || m > points.len() {
        return Err(argument(format!("cannot pick {m} of {} points", points.len())));
    }
    if start_index >= points.len() {
        return Err(argument(format!("start index {start_index} out of range")));
    }
    let mut picked = Vec::with_capacity(m);
    picked.push(start_index);
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &points[start_index])).collect();
    while picked.len() < m {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in nearest.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        picked.push(best);
        let newest = points[best];
        nearest
            .par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(d, p)| *d = d.min(dist2(p, &newest)));
    }
    Ok(picked)
}

/// A ball-query neighbourhood. `empty` is set when no point fell inside the
/// radius, in which case `indices` is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BallGroup {
    pub indices: Vec<usize>,
    pub empty: bool,
}

/// For each centroid, the first `group_size` point indices (ascending)
/// within `radius`, padded by repeating the first one.
pub fn ball_query(points: &[[f64; 3]], centroids: &[[f64; 3]], radius: f64, group_size: usize) -> Result<Vec<BallGroup>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(argument("ball query radius must be > 0"));
    }
    if group_size == 0 {
        return Err(argument("ball query group size must be >= 1"));
    }
    let r2 = radius * radius;
    Ok(centroids
        .par_iter()
        .map(|c| {
            let mut indices: Vec<usize> = points
                .iter()
                .enumerate()
                .filter(|(_, p)| dist2(p, c) <= r2)
                .map(|(i, _)| i)
                .take(group_size)
                .collect();
            match indices.first().copied() {
                None => BallGroup { indices, empty: true },
                Some(first) => {
                    indices.resize(group_size, first);
                    BallGroup { indices, empty: false }
                }
            }
        })
        .collect())
}

/// Draws `n_blocks` square blocks of side `block_size` and `n_points`
/// indices from each.
///
/// Block corners are uniform over the cloud's x-y bounds (a block never
/// hangs past the far edge). Within a block, indices are drawn without
/// replacement, or with replacement when the block holds fewer than
/// `n_points`. A block at least as large as the cloud in both axes yields a
/// single block over the whole cloud. Empty draws are retried a bounded
/// number of times before an empty block is returned.
pub fn sample_blocks(
    cloud: &PointCloud,
    block_size: f64,
    n_points: usize,
    n_blocks: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    const RETRIES: usize = 32;
    let Some(b) = cloud.bounds().aabb().copied() else {
        return Err(argument("cannot sample blocks from an empty cloud"));
    };
    if !(block_size.is_finite() && block_size > 0.0) {
        return Err(argument("block size must be > 0"));
    }
    if n_points == 0 || n_blocks == 0 {
        return Err(argument("block and point counts must be >= 1"));
    }
    let ext = b.extent();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = cloud.positions();
    let whole = block_size >= ext[0] && block_size >= ext[1];
    let blocks = if whole { 1 } else { n_blocks };

    let mut out = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let mut members = Vec::new();
        for _ in 0..RETRIES {
            let corner = |rng: &mut ChaCha8Rng, a: usize| {
                let span = ext[a] - block_size;
                if span > 0.0 {
                    b.min[a] + rng.random::<f64>() * span
                } else {
                    b.min[a]
                }
            };
            let x0 = corner(&mut rng, 0);
            let y0 = corner(&mut rng, 1);
            members = positions
                .iter()
                .enumerate()
                .filter(|(_, p)| p[0] >= x0 && p[0] <= x0 + block_size && p[1] >= y0 && p[1] <= y0 + block_size)
                .map(|(i, _)| i)
                .collect();
            if !members.is_empty() {
                break;
            }
        }
        let picked = if members.is_empty() {
            Vec::new()
        } else if members.len() >= n_points {
            let mut chosen = index::sample(&mut rng, members.len(), n_points).into_vec();
            chosen.sort_unstable();
            chosen.into_iter().map(|k| members[k]).collect()
        } else {
            (0..n_points).map(|_| members[rng.random_range(0..members.len())]).collect()
        };
        out.push(picked);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::{any, prop_assert, proptest};

    /// Recomputes every candidate's distance to the whole selected set at
    /// each step.
    pub(crate) fn greedy_oracle(points: &[[f64; 3]], m: usize, start: usize) -> Vec<usize> {
        let mut sel = vec![start];
        while sel.len() < m {
            let mut best = (f64::NEG_INFINITY, 0);
            for (i, p) in points.iter().enumerate() {
                let d = sel.iter().map(|&s| dist2(p, &points[s])).fold(f64::INFINITY, f64::min);
                if d > best.0 {
                    best = (d, i);
                }
            }
            sel.push(best.1);
        }
        sel
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
        (0..n).map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]).collect()
    }

    #[test]
    fn fps_single() {
        assert_eq!(farthest_point_sampling(&[[0.0; 3], [1.0; 3]], 1, 1).unwrap(), vec![1]);
    }

    #[test]
    fn fps_collinear() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
        assert_eq!(farthest_point_sampling(&pts, 2, 0).unwrap(), vec![0, 2]);
    }

    #[test]
    fn fps_rejects_too_many() {
        assert!(matches!(farthest_point_sampling(&[[0.0; 3]], 2, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn fps_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let pts = random_points(&mut rng, 200);
        assert_eq!(farthest_point_sampling(&pts, 20, 0).unwrap(), greedy_oracle(&pts, 20, 0));
    }

    #[test]
    fn fps_rigid_motion_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let pts = random_points(&mut rng, 150);
        let (s, c) = (0.7f64.sin(), 0.7f64.cos());
        let moved: Vec<[f64; 3]> = pts
            .iter()
            .map(|p| [c * p[0] - s * p[1] + 3.0, s * p[0] + c * p[1] - 8.0, p[2] + 1.5])
            .collect();
        assert_eq!(farthest_point_sampling(&pts, 25, 7).unwrap(), farthest_point_sampling(&moved, 25, 7).unwrap());
    }

    proptest! {
        #[test]
        fn fps_min_spacing_never_grows(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, 60);
            let sel = farthest_point_sampling(&pts, 30, 0).unwrap();
            let mut prev = f64::INFINITY;
            for m in 2..=sel.len() {
                let mut min = f64::INFINITY;
                for a in 0..m {
                    for b in 0..a {
                        min = min.min(dist2(&pts[sel[a]], &pts[sel[b]]));
                    }
                }
                prop_assert!(min <= prev);
                prev = min;
            }
        }
    }

    #[test]
    fn ball_query_truncates_by_index() {
        let mut pts: Vec<[f64; 3]> = (0..40).map(|i| [0.01 * i as f64, 0.0, 0.0]).collect();
        pts.push([100.0, 0.0, 0.0]);
        let g = ball_query(&pts, &[[0.0; 3]], 1.0, 32).unwrap();
        assert_eq!(g[0].indices, (0..32).collect::<Vec<_>>());
        assert!(!g[0].empty);
    }

    #[test]
    fn ball_query_pads_with_first() {
        let mut pts = vec![[50.0, 0.0, 0.0]; 12];
        pts[7] = [0.5, 0.0, 0.0];
        pts[11] = [0.0, 0.9, 0.0];
        let g = ball_query(&pts, &[[0.0; 3]], 1.0, 4).unwrap();
        assert_eq!(g[0].indices, vec![7, 11, 7, 7]);
    }

    #[test]
    fn ball_query_empty_group() {
        let g = ball_query(&[[5.0, 0.0, 0.0]], &[[0.0; 3]], 1.0, 4).unwrap();
        assert!(g[0].empty);
        assert!(g[0].indices.is_empty());
    }

    #[test]
    fn ball_query_members_within_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pts = random_points(&mut rng, 500);
        let cents = random_points(&mut rng, 50);
        for (c, g) in cents.iter().zip(ball_query(&pts, &cents, 3.0, 16).unwrap()) {
            assert!(g.indices.iter().all(|&i| dist2(&pts[i], c) <= 9.0));
            assert!(g.empty || g.indices.len() == 16);
        }
    }

    fn grid_cloud(n: usize, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push([i as f64 * spacing, j as f64 * spacing, 0.0]);
            }
        }
        PointCloud::from_positions(&pts).unwrap()
    }

    #[test]
    fn blocks_are_contained_and_deterministic() {
        let c = grid_cloud(100, 0.5); // 49.5 m square, 10 000 points
        let a = sample_blocks(&c, 15.0, 4096, 6, 9).unwrap();
        let b = sample_blocks(&c, 15.0, 4096, 6, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        for block in &a {
            assert_eq!(block.len(), 4096);
            let xs = block.iter().map(|&i| c.positions()[i][0]);
            let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            assert!(hi - lo <= 15.0);
        }
        assert_ne!(a, sample_blocks(&c, 15.0, 4096, 6, 10).unwrap());
    }

    #[test]
    fn small_block_draws_with_replacement() {
        let c = grid_cloud(10, 1.0); // 100 points, 9 m square
        let blocks = sample_blocks(&c, 20.0, 4096, 5, 1).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].len(), 4096);
        assert!(blocks[0].iter().all(|&i| i < 100));
        let distinct: std::collections::BTreeSet<_> = blocks[0].iter().collect();
        assert!(distinct.len() <= 100);
    }

    #[test]
    fn exact_fit_block_has_no_repeats() {
        let c = grid_cloud(64, 0.25); // 4096 points
        let blocks = sample_blocks(&c, 100.0, 4096, 1, 3).unwrap();
        let distinct: std::collections::BTreeSet<_> = blocks[0].iter().collect();
        assert_eq!(distinct.len(), 4096);
    }
}
