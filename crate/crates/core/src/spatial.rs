//! Exact k-nearest-neighbour search over a k-d tree.

use std::collections::BinaryHeap;

use ordered::Dist;

mod ordered {
    /// Squared distance with a total order, ties broken by point index.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Dist(pub f64, pub usize);

    impl Eq for Dist {}

    impl PartialOrd for Dist {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    impl Ord for Dist {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
        }
    }
}

const LEAF: usize = 16;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

pub struct KdIndex<'a> {
    points: &'a [[f64; 3]],
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl<'a> KdIndex<'a> {
    pub fn new(points: &'a [[f64; 3]]) -> Self {
        let mut index = KdIndex { points, order: (0..points.len() as u32).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        index
    }

    /// Splits `order[start..end]` at the median of its widest axis.
    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
        if hi[axis] == lo[axis] {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = (start + end) / 2;
        let pts = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| pts[a as usize][axis].total_cmp(&pts[b as usize][axis]));
        let value = pts[self.order[mid] as usize][axis];
        self.nodes.push(Node::Split { axis, value, left: 0, right: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// The `k` nearest points to `q` as `(squared distance, index)`, nearest
    /// first with ties in index order, skipping `exclude`.
    pub fn knn(&self, q: [f64; 3], k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        let mut heap: BinaryHeap<Dist> = BinaryHeap::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, &q, k, exclude, &mut heap);
        }
        heap.into_sorted_vec().into_iter().map(|d| (d.0, d.1)).collect()
    }

    fn search(&self, node: usize, q: &[f64; 3], k: usize, exclude: Option<usize>, heap: &mut BinaryHeap<Dist>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let i = i as usize;
                    if Some(i) == exclude {
                        continue;
                    }
                    let p = self.points[i];
                    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                    let cand = Dist(d2, i);
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, heap);
                // Equal distances still matter for the index tie-break.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
                    self.search(far, q, k, exclude, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(pts: &[[f64; 3]], q: [f64; 3], k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, p)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &flat in &[false, true] {
            let pts: Vec<[f64; 3]> = (0..800)
                .map(|_| {
                    let z = if flat { 0.0 } else { rng.random_range(0.0..5.0) };
                    [rng.random_range(0.0..40.0), rng.random_range(0.0..20.0), z]
                })
                .collect();
            let index = KdIndex::new(&pts);
            for q in 0..pts.len() {
                assert_eq!(index.knn(pts[q], 8, Some(q)), brute(&pts, pts[q], 8, Some(q)));
            }
        }
    }

    #[test]
    fn ties_resolve_to_lower_index() {
        // Integer lattice with duplicates: many exactly equal distances.
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..3 {
                    pts.push([i as f64, j as f64, k as f64]);
                }
            }
        }
        pts.extend_from_slice(&pts.clone()[..40]);
        let index = KdIndex::new(&pts);
        for q in [[2.5, 2.5, 1.0], [0.0, 0.0, 0.0], [3.0, 3.0, 1.5], [10.0, -4.0, 2.0]] {
            for k in [1, 5, 13, 30] {
                assert_eq!(index.knn(q, k, None), brute(&pts, q, k, None));
            }
        }
    }

    #[test]
    fn fewer_points_than_k() {
        let pts = [[0.0; 3], [1.0, 0.0, 0.0]];
        assert_eq!(KdIndex::new(&pts).knn([0.0; 3], 5, None).len(), 2);
        assert!(KdIndex::new(&[]).knn([0.0; 3], 5, None).is_empty());
    }
}
