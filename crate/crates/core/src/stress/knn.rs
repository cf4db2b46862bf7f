use alloc::vec::Vec;

use super::StressTensor;
use crate::error::{Error, Result};
use crate::math::Vec3;

/// Inverse-squared-distance interpolation over the `k` nearest stored
/// points.
#[derive(Debug, Clone)]
pub struct ScatteredKnn {
    points: Vec<Vec3>,
    values: Vec<StressTensor>,
    k: usize,
    tree: KdTree,
}

impl ScatteredKnn {
    pub const DEFAULT_K: usize = 4;
    const EXACT_HIT: f64 = 1e-12;

    pub fn new(points: Vec<Vec3>, values: Vec<StressTensor>, k: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if points.len() != values.len() {
            return Err(Error::ShapeMismatch {
                expected: points.len(),
                got: values.len(),
            });
        }
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let tree = KdTree::build(&points);
        Ok(ScatteredKnn {
            points,
            values,
            k,
            tree,
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn values(&self) -> &[StressTensor] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn query(&self, p: Vec3) -> StressTensor {
        let near = self.tree.nearest(&self.points, p, self.k);
        let (d2, first) = near[0];
        if d2 < Self::EXACT_HIT * Self::EXACT_HIT || near.len() == 1 {
            return self.values[first];
        }
        let mut acc = [0.0; 6];
        let mut wsum = 0.0;
        for &(d2, i) in &near {
            let w = 1.0 / d2;
            wsum += w;
            for (a, v) in acc.iter_mut().zip(self.values[i].to_array()) {
                *a += w * v;
            }
        }
        StressTensor::from_array(acc.map(|a| a / wsum))
    }
}

/// Implicit kd-tree: `order[lo..hi]` is a subtree whose root is the median
/// element `order[(lo + hi) / 2]`, split on axis `depth % 3`.
#[derive(Debug, Clone)]
struct KdTree {
    order: Vec<usize>,
}

impl KdTree {
    fn build(points: &[Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        Self::split(&mut order, points, 0);
        KdTree { order }
    }

    fn split(order: &mut [usize], points: &[Vec3], depth: usize) {
        if order.len() <= 1 {
            return;
        }
        let axis = depth % 3;
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let (left, right) = order.split_at_mut(mid);
        Self::split(left, points, depth + 1);
        Self::split(&mut right[1..], points, depth + 1);
    }

    /// Up to `k` `(squared distance, index)` pairs, closest first. Ties are
    /// broken by index so results do not depend on traversal order.
    fn nearest(&self, points: &[Vec3], q: Vec3, k: usize) -> Vec<(f64, usize)> {
        let mut best = Vec::with_capacity(k + 1);
        self.search(points, q, k, 0, self.order.len(), 0, &mut best);
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        pts: &[Vec3],
        q: Vec3,
        k: usize,
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut Vec<(f64, usize)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let d = q - pts[idx];
        let d2 = d.dot(&d);
        let worse = |a: &(f64, usize), b: &(f64, usize)| a.0 > b.0 || (a.0 == b.0 && a.1 > b.1);
        if best.len() < k || worse(best.last().unwrap(), &(d2, idx)) {
            let pos = best
                .iter()
                .position(|e| worse(e, &(d2, idx)))
                .unwrap_or(best.len());
            best.insert(pos, (d2, idx));
            best.truncate(k);
        }
        let axis = depth % 3;
        let diff = q[axis] - pts[idx][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(pts, q, k, near.0, near.1, depth + 1, best);
        if best.len() < k || diff * diff <= best.last().unwrap().0 {
            self.search(pts, q, k, far.0, far.1, depth + 1, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn brute(points: &[Vec3], q: Vec3, k: usize) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((q - *p).dot(&(q - *p)), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all
    }

    #[test]
    fn kd_tree_matches_brute_force() {
        let mut r = SplitMix64::new(11);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| Vec3::new(r.next_f64(), r.next_f64(), r.next_f64()))
            .collect();
        let tree = KdTree::build(&pts);
        for _ in 0..200 {
            let q = Vec3::new(
                r.uniform(-0.2, 1.2),
                r.uniform(-0.2, 1.2),
                r.uniform(-0.2, 1.2),
            );
            for k in [1, 4, 7] {
                assert_eq!(tree.nearest(&pts, q, k), brute(&pts, q, k));
            }
        }
    }

    #[test]
    fn single_point_and_exact_hit() {
        let t = StressTensor::diag(1.0, 2.0, 3.0);
        let one = ScatteredKnn::new(alloc::vec![Vec3::ZERO], alloc::vec![t], 4).unwrap();
        assert_eq!(one.query(Vec3::new(0.3, 0.1, -0.2)), t);
        let pts = alloc::vec![Vec3::ZERO, Vec3::X, Vec3::Y];
        let vals = alloc::vec![t, StressTensor::ZERO, StressTensor::ZERO];
        let knn = ScatteredKnn::new(pts, vals, 3).unwrap();
        assert_eq!(knn.query(Vec3::X), StressTensor::ZERO);
        // equidistant from all three stored points
        let mid = knn.query(Vec3::new(0.5, 0.5, 0.0));
        assert!((mid.sxx - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            ScatteredKnn::new(Vec::new(), Vec::new(), 4).unwrap_err(),
            Error::EmptyPointSet
        );
    }
}
