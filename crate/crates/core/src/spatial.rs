//! Spatial indices: a hashed xy grid for fixed-radius queries over clouds and
//! an implicit k-d tree for nearest-neighbour queries over small point sets.

use std::collections::HashMap;

/// Uniform hashed grid over xy coordinates.
#[derive(Debug, Clone)]
pub struct XyGrid {
    cell: f64,
    xy: Vec<[f64; 2]>,
    buckets: HashMap<[i64; 2], Vec<usize>>,
}

impl XyGrid {
    pub fn new(xy: Vec<[f64; 2]>, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell must be positive");
        let mut buckets: HashMap<[i64; 2], Vec<usize>> = HashMap::new();
        for (i, p) in xy.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { cell, xy, buckets }
    }

    fn key(p: &[f64; 2], cell: f64) -> [i64; 2] {
        [(p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64]
    }

    pub fn len(&self) -> usize {
        self.xy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xy.is_empty()
    }

    /// Indices with `dx² + dy² ≤ r²`, ascending.
    pub fn within(&self, x: f64, y: f64, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(x, y, r, |i| out.push(i));
        out.sort_unstable();
        out
    }

    /// Visits indices within `r` in unspecified order.
    pub fn for_each_within(&self, x: f64, y: f64, r: f64, mut f: impl FnMut(usize)) {
        let r2 = r * r;
        let lo = Self::key(&[x - r, y - r], self.cell);
        let hi = Self::key(&[x + r, y + r], self.cell);
        for cx in lo[0]..=hi[0] {
            for cy in lo[1]..=hi[1] {
                let Some(bucket) = self.buckets.get(&[cx, cy]) else {
                    continue;
                };
                for &i in bucket {
                    let p = &self.xy[i];
                    let (dx, dy) = (p[0] - x, p[1] - y);
                    if dx * dx + dy * dy <= r2 {
                        f(i);
                    }
                }
            }
        }
    }
}

const LEAF: usize = 8;

/// Static k-d tree; the index permutation encodes the tree implicitly
/// (median of each range is the splitting node, axis cycles with depth).
#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    order: Vec<usize>,
}

impl<const D: usize> KdTree<D> {
    pub fn new(points: Vec<[f64; D]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        Self::build(&points, &mut order, 0);
        Self { points, order }
    }

    fn build(points: &[[f64; D]], order: &mut [usize], depth: usize) {
        if order.len() <= LEAF {
            return;
        }
        let axis = depth % D;
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let (left, right) = order.split_at_mut(mid);
        Self::build(points, left, depth + 1);
        Self::build(points, &mut right[1..], depth + 1);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn dist2(a: &[f64; D], b: &[f64; D]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    /// Nearest point as `(index, squared distance)`; ties go to the lower index.
    pub fn nearest(&self, q: &[f64; D]) -> Option<(usize, f64)> {
        self.k_nearest(q, 1).into_iter().next()
    }

    /// The `k` nearest points ordered by `(squared distance, index)`.
    pub fn k_nearest(&self, q: &[f64; D], k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search(q, k, 0, self.order.len(), 0, &mut best);
        }
        best
    }

    fn offer(k: usize, best: &mut Vec<(usize, f64)>, cand: (usize, f64)) {
        let pos = best.partition_point(|b| b.1 < cand.1 || (b.1 == cand.1 && b.0 < cand.0));
        if pos < k {
            best.insert(pos, cand);
            best.truncate(k);
        }
    }

    fn search(
        &self,
        q: &[f64; D],
        k: usize,
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut Vec<(usize, f64)>,
    ) {
        let len = hi - lo;
        if len <= LEAF {
            for &i in &self.order[lo..hi] {
                Self::offer(k, best, (i, Self::dist2(q, &self.points[i])));
            }
            return;
        }
        let axis = depth % D;
        let mid = lo + len / 2;
        let pivot = self.order[mid];
        Self::offer(k, best, (pivot, Self::dist2(q, &self.points[pivot])));
        let diff = q[axis] - self.points[pivot][axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, k, near.0, near.1, depth + 1, best);
        let worst = if best.len() < k { f64::INFINITY } else { best[k - 1].1 };
        if diff * diff <= worst {
            self.search(q, k, far.0, far.1, depth + 1, best);
        }
    }
}
