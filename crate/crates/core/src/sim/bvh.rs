//! Bounding volume hierarchy over a triangle soup with nearest-hit queries.

use crate::geometry::Vec3;
use crate::scalar::Real;
use crate::sim::mesh::TriangleMesh;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    /// Unit direction.
    pub dir: Vec3<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<T> {
    /// Distance along the ray.
    pub t: T,
    pub tri: u32,
}

impl<T: Real> Hit<T> {
    /// Nearer hit wins; equal distances resolve to the lower triangle id.
    #[inline]
    pub fn closer_than(&self, other: &Hit<T>) -> bool {
        self.t < other.t || (self.t == other.t && self.tri < other.tri)
    }
}

/// Möller–Trumbore ray/triangle test, edges inclusive. Returns `t` in `(t_min, t_max]`.
#[inline]
pub fn intersect_triangle<T: Real>(ray: &Ray<T>, tri: &[Vec3<T>; 3], t_min: T, t_max: T) -> Option<T> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.dir.cross(e2);
    let det = e1.dot(p);
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    let inv = T::one() / det;
    let s = ray.origin - tri[0];
    let u = s.dot(p) * inv;
    if u < T::zero() || u > T::one() {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.dir.dot(q) * inv;
    if v < T::zero() || u + v > T::one() {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > t_min && t <= t_max).then_some(t)
}

#[derive(Debug, Clone, Copy)]
struct Aabb<T> {
    min: Vec3<T>,
    max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    fn empty() -> Self {
        let inf = T::infinity();
        Self {
            min: Vec3::new(inf, inf, inf),
            max: Vec3::new(-inf, -inf, -inf),
        }
    }

    fn grow(&mut self, p: Vec3<T>) {
        self.min = self.min.component_min(p);
        self.max = self.max.component_max(p);
    }

    /// Entry distance of the ray into the box, if it enters before `t_max`.
    #[inline]
    fn entry(&self, origin: Vec3<T>, inv_dir: Vec3<T>, t_max: T) -> Option<T> {
        let mut lo = T::zero();
        let mut hi = t_max;
        for k in 0..3 {
            let t1 = (self.min[k] - origin[k]) * inv_dir[k];
            let t2 = (self.max[k] - origin[k]) * inv_dir[k];
            // NaN (0 · ∞) leaves the bound untouched
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
        (lo <= hi).then_some(lo)
    }
}

#[derive(Debug, Clone, Copy)]
struct Node<T> {
    bounds: Aabb<T>,
    /// Leaf: first index into `order`. Interior: index of the left child (right = left + 1).
    start: u32,
    /// Number of triangles for a leaf, 0 for interior nodes.
    count: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh<T> {
    nodes: Vec<Node<T>>,
    order: Vec<u32>,
    tris: Vec<[Vec3<T>; 3]>,
}

impl<T: Real> Bvh<T> {
    /// Builds the hierarchy with median splits on the widest centroid axis.
    pub fn build(mesh: &TriangleMesh<T>) -> Self {
        let tris: Vec<[Vec3<T>; 3]> = (0..mesh.len()).map(|i| mesh.corners(i)).collect();
        let third = T::one() / T::lit(3.0);
        let centroids: Vec<Vec3<T>> = tris.iter().map(|t| (t[0] + t[1] + t[2]) * third).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        nodes.push(Node {
            bounds: Aabb::empty(),
            start: 0,
            count: 0,
        });
        if !tris.is_empty() {
            Self::build_node(&mut nodes, 0, &mut order, 0, &tris, &centroids);
        }
        Self { nodes, order, tris }
    }

    fn build_node(
        nodes: &mut Vec<Node<T>>,
        node: usize,
        order: &mut [u32],
        offset: usize,
        tris: &[[Vec3<T>; 3]],
        centroids: &[Vec3<T>],
    ) {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &i in order.iter() {
            for v in tris[i as usize] {
                bounds.grow(v);
            }
            cbounds.grow(centroids[i as usize]);
        }
        nodes[node].bounds = bounds;
        let extent = cbounds.max - cbounds.min;
        if order.len() <= LEAF_SIZE || extent.norm_sq() == T::zero() {
            nodes[node].start = offset as u32;
            nodes[node].count = order.len() as u32;
            return;
        }
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis]
                .partial_cmp(&centroids[b as usize][axis])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let left = nodes.len();
        let blank = Node {
            bounds: Aabb::empty(),
            start: 0,
            count: 0,
        };
        nodes.push(blank);
        nodes.push(blank);
        nodes[node].start = left as u32;
        let (lo, hi) = order.split_at_mut(mid);
        Self::build_node(nodes, left, lo, offset, tris, centroids);
        Self::build_node(nodes, left + 1, hi, offset + mid, tris, centroids);
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    /// Nearest hit in `(t_min, t_max]`.
    pub fn intersect(&self, ray: &Ray<T>, t_min: T, t_max: T) -> Option<Hit<T>> {
        if self.tris.is_empty() {
            return None;
        }
        let one = T::one();
        let inv = Vec3::new(one / ray.dir.x, one / ray.dir.y, one / ray.dir.z);
        let mut best: Option<Hit<T>> = None;
        let mut limit = t_max;
        let mut stack: Vec<(u32, T)> = Vec::with_capacity(64);
        if let Some(t) = self.nodes[0].bounds.entry(ray.origin, inv, limit) {
            stack.push((0, t));
        }
        while let Some((idx, entry)) = stack.pop() {
            if entry > limit {
                continue;
            }
            let node = &self.nodes[idx as usize];
            if node.count > 0 {
                let start = node.start as usize;
                for &tri in &self.order[start..start + node.count as usize] {
                    if let Some(t) = intersect_triangle(ray, &self.tris[tri as usize], t_min, limit) {
                        let hit = Hit { t, tri };
                        if best.as_ref().is_none_or(|b| hit.closer_than(b)) {
                            best = Some(hit);
                            limit = t;
                        }
                    }
                }
            } else {
                let (l, r) = (node.start, node.start + 1);
                let el = self.nodes[l as usize].bounds.entry(ray.origin, inv, limit);
                let er = self.nodes[r as usize].bounds.entry(ray.origin, inv, limit);
                match (el, er) {
                    (Some(a), Some(b)) => {
                        // visit the nearer child first
                        if a <= b {
                            stack.push((r, b));
                            stack.push((l, a));
                        } else {
                            stack.push((l, a));
                            stack.push((r, b));
                        }
                    }
                    (Some(a), None) => stack.push((l, a)),
                    (None, Some(b)) => stack.push((r, b)),
                    (None, None) => {}
                }
            }
        }
        best
    }

    /// Reference nearest-hit query that tests every triangle.
    pub fn intersect_brute_force(&self, ray: &Ray<T>, t_min: T, t_max: T) -> Option<Hit<T>> {
        let mut best: Option<Hit<T>> = None;
        for (i, tri) in self.tris.iter().enumerate() {
            if let Some(t) = intersect_triangle(ray, tri, t_min, t_max) {
                let hit = Hit { t, tri: i as u32 };
                if best.as_ref().is_none_or(|b| hit.closer_than(b)) {
                    best = Some(hit);
                }
            }
        }
        best
    }
}
