//! Static 3-d tree for exact nearest-neighbor queries.

use crate::geometry::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct KdTree<T> {
    points: Vec<[T; 3]>,
    index: Vec<usize>,
    axis: Vec<u8>,
}

#[inline]
pub(crate) fn dist_sq<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl<T: Real> KdTree<T> {
    pub fn build(points: &[Vec3<T>]) -> Self {
        let mut items: Vec<([T; 3], usize)> = points.iter().enumerate().map(|(i, p)| ([p.x, p.y, p.z], i)).collect();
        let mut axis = vec![0u8; items.len()];
        build_range(&mut items, &mut axis, 0);
        let (points, index) = items.into_iter().unzip();
        Self { points, index, axis }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Original index and squared distance of the nearest point; the lowest index wins ties.
    pub fn nearest(&self, q: &Vec3<T>) -> Option<(usize, T)> {
        if self.points.is_empty() {
            return None;
        }
        let q = [q.x, q.y, q.z];
        let mut best = (usize::MAX, T::infinity());
        self.search(0, self.points.len(), &q, &mut best);
        Some(best)
    }

    fn search(&self, lo: usize, hi: usize, q: &[T; 3], best: &mut (usize, T)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.points[mid];
        let d = dist_sq(p, q);
        let id = self.index[mid];
        if d < best.1 || (d == best.1 && id < best.0) {
            *best = (id, d);
        }
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - p[ax];
        let (near, far) = if diff < T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        if diff * diff <= best.1 {
            self.search(far.0, far.1, q, best);
        }
    }
}

fn build_range<T: Real>(items: &mut [([T; 3], usize)], axis: &mut [u8], _depth: usize) {
    if items.len() <= 1 {
        return;
    }
    let mut lo = items[0].0;
    let mut hi = items[0].0;
    for (p, _) in items.iter() {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let ax = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap().then(b.cmp(&a)))
        .unwrap();
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| a.0[ax].partial_cmp(&b.0[ax]).unwrap().then(a.1.cmp(&b.1)));
    axis[mid] = ax as u8;
    let (left, rest) = items.split_at_mut(mid);
    let (laxis, raxis) = axis.split_at_mut(mid);
    build_range(left, laxis, 0);
    build_range(&mut rest[1..], &mut raxis[1..], 0);
}

/// Exhaustive nearest neighbor with the same tie rule as [`KdTree::nearest`].
pub fn nearest_brute_force<T: Real>(points: &[Vec3<T>], q: &Vec3<T>) -> Option<(usize, T)> {
    let q = [q.x, q.y, q.z];
    let mut best: Option<(usize, T)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = dist_sq(&[p.x, p.y, p.z], &q);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best
}
