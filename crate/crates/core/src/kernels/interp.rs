use rayon::prelude::*;

use crate::error::{argument, Result};
use crate::spatial::KdIndex;

/// Distances below this are treated as coincident.
pub const IDW_EPSILON: f64 = 1e-8;

/// Interpolates `feature_dim`-wide features (row-major in `features`) from
/// `sources` onto `queries` by inverse-distance weighting over the `k`
/// nearest sources. Nearest-neighbour ties go to the lower source index.
pub fn idw_interpolate(
    sources: &[[f64; 3]],
    features: &[f64],
    feature_dim: usize,
    queries: &[[f64; 3]],
    k: usize,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(argument("k must be >= 1"));
    }
    if sources.len() < k {
        return Err(argument(format!("need at least {k} sources, got {}", sources.len())));
    }
    if feature_dim == 0 || features.len() != sources.len() * feature_dim {
        return Err(argument(format!(
            "feature table has {} values, expected {} x {feature_dim}",
            features.len(),
            sources.len()
        )));
    }
    let index = KdIndex::new(sources);
    let rows: Vec<Vec<f64>> = queries
        .par_iter()
        .map(|q| {
            let nn = index.knn(*q, k, None);
            let row = |i: usize| &features[i * feature_dim..(i + 1) * feature_dim];
            if nn[0].0.sqrt() < IDW_EPSILON {
                return row(nn[0].1).to_vec();
            }
            let mut acc = vec![0.0; feature_dim];
            let mut total = 0.0;
            for &(d2, i) in &nn {
                let w = 1.0 / d2.sqrt().max(IDW_EPSILON);
                total += w;
                for (a, f) in acc.iter_mut().zip(row(i)) {
                    *a += w * f;
                }
            }
            acc.iter_mut().for_each(|a| *a /= total);
            acc
        })
        .collect();
    Ok(rows.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle(src: &[[f64; 3]], feat: &[f64], q: [f64; 3], k: usize) -> f64 {
        let mut d: Vec<(f64, usize)> = src
            .iter()
            .enumerate()
            .map(|(i, p)| (((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if d[0].0 < IDW_EPSILON {
            return feat[d[0].1];
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(dist, i) in &d[..k] {
            num += feat[i] / dist;
            den += 1.0 / dist;
        }
        num / den
    }

    #[test]
    fn coincident_query_copies_feature() {
        let src = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let out = idw_interpolate(&src, &[5.0, 6.0, 7.0], 1, &[[1.0, 0.0, 0.0]], 3).unwrap();
        assert_eq!(out, vec![6.0]);
    }

    #[test]
    fn far_source_barely_counts() {
        let src = [[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 100.0, 0.0]];
        let out = idw_interpolate(&src, &[10.0, 20.0, 1000.0], 1, &[[0.0; 3]], 3).unwrap();
        let expected = (10.0 + 20.0 + 1000.0 / 100.0) / (1.0 + 1.0 + 0.01);
        assert!((out[0] - expected).abs() < 1e-12);
        assert!((out[0] - 19.90).abs() < 0.01);
    }

    #[test]
    fn too_few_sources() {
        let r = idw_interpolate(&[[0.0; 3]; 2], &[1.0, 2.0], 1, &[[0.0; 3]], 3);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let src: Vec<[f64; 3]> = (0..300).map(|_| [rng.random_range(0.0..20.0), rng.random_range(0.0..20.0), rng.random_range(0.0..5.0)]).collect();
        let feat: Vec<f64> = (0..300).map(|_| rng.random_range(-50.0..50.0)).collect();
        let qs: Vec<[f64; 3]> = (0..200).map(|_| [rng.random_range(-5.0..25.0), rng.random_range(-5.0..25.0), rng.random_range(-1.0..6.0)]).collect();
        let out = idw_interpolate(&src, &feat, 1, &qs, 3).unwrap();
        for (q, v) in qs.iter().zip(&out) {
            let want = oracle(&src, &feat, *q, 3);
            assert!((v - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn multi_channel_rows_are_independent() {
        let src = [[0.0; 3], [2.0, 0.0, 0.0], [0.0, 3.0, 0.0], [9.0, 9.0, 9.0]];
        let feat = [1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0];
        let out = idw_interpolate(&src, &feat, 2, &[[0.5, 0.5, 0.0]], 3).unwrap();
        assert!((out[1] - 10.0 * out[0]).abs() < 1e-12);
    }
}
