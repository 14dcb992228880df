//! Non-learned single-class detector: ground removal, Euclidean clustering, anchor fitting.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{BoundingBox3D, PointCloud, Prediction, VehicleDims, DETECTION_RANGE};
use crate::geometry::Vec3;
use crate::manifest::DatasetManifest;
use crate::scalar::Real;
use crate::transform::box_contains;

/// Points closer than this to the fitted ground plane are ground.
pub const GROUND_BAND: f64 = 0.15;
/// Fitted planes steeper than this against the horizontal are rejected.
const MAX_GROUND_TILT_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub ground_z: f64,
    pub cluster_eps: f64,
    pub min_cluster: usize,
    pub anchor: VehicleDims<f64>,
    pub yaw_steps: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            ground_z: -0.3,
            cluster_eps: 0.7,
            min_cluster: 10,
            anchor: VehicleDims::race_car(),
            yaw_steps: 36,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cluster_eps > 0.0 && self.cluster_eps.is_finite()) {
            return Err(Error::Config(format!(
                "cluster_eps must be > 0, got {}",
                self.cluster_eps
            )));
        }
        if self.min_cluster == 0 {
            return Err(Error::Config("min_cluster must be at least 1".into()));
        }
        if self.yaw_steps == 0 {
            return Err(Error::Config("yaw_steps must be at least 1".into()));
        }
        if !self.ground_z.is_finite() {
            return Err(Error::Config("ground_z must be finite".into()));
        }
        self.anchor.validate()
    }
}

/// Ground plane `z = a·x + b·y + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GroundPlane {
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }

    /// Signed distance along the plane normal, positive above.
    pub fn distance(&self, p: Vec3<f64>) -> f64 {
        (p.z - self.height_at(p.x, p.y)) / (1.0 + self.a * self.a + self.b * self.b).sqrt()
    }
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 || d.abs() <= 1e-12 * scale * scale * scale {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut mk = m;
        for i in 0..3 {
            mk[i][k] = r[i];
        }
        *o = det(&mk) / d;
    }
    Some(out)
}

/// Least-squares plane through the lowest-z quarter of the points.
pub fn fit_ground_plane(points: &[Vec3<f64>]) -> Option<GroundPlane> {
    if points.len() < 3 {
        return None;
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| points[i].z.total_cmp(&points[j].z).then(i.cmp(&j)));
    let n = (points.len() / 4).max(3);
    let low: Vec<Vec3<f64>> = order[..n].iter().map(|&i| points[i]).collect();
    // centered coordinates keep the normal equations well conditioned
    let mean = low.iter().fold(Vec3::zero(), |acc, p| acc + *p) * (1.0 / n as f64);
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in &low {
        let d = *p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
        sxz += d.x * d.z;
        syz += d.y * d.z;
    }
    let sol = solve3([[sxx, sxy, 0.0], [sxy, syy, 0.0], [0.0, 0.0, 1.0]], [sxz, syz, 0.0])?;
    let (a, b) = (sol[0], sol[1]);
    let tilt = (a * a + b * b).sqrt().atan().to_degrees();
    if !tilt.is_finite() || tilt > MAX_GROUND_TILT_DEG {
        return None;
    }
    Some(GroundPlane {
        a,
        b,
        c: mean.z - a * mean.x - b * mean.y,
    })
}

/// Drops ground points: those within [`GROUND_BAND`] of (or below) the fitted plane, or
/// those below `ground_z` when no plane can be fitted.
pub fn remove_ground<T: Real>(cloud: &PointCloud<T>, cfg: &DetectorConfig) -> (PointCloud<T>, Option<GroundPlane>) {
    let pts: Vec<Vec3<f64>> = cloud.points.iter().map(|p| p.pos().cast()).collect();
    let plane = fit_ground_plane(&pts);
    let mut i = 0;
    let kept = cloud.filtered(|_| {
        let p = pts[i];
        i += 1;
        match &plane {
            Some(g) => g.distance(p) > GROUND_BAND,
            None => p.z >= cfg.ground_z,
        }
    });
    (kept, plane)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

fn components(parent: &mut [usize], min_cluster: usize) -> Vec<Vec<usize>> {
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..parent.len() {
        let r = find(parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= min_cluster).collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Connected components of the "within eps" relation, found through a hashed grid.
///
/// Clusters are index lists in ascending order, sorted by their first index.
pub fn cluster(points: &[Vec3<f64>], eps: f64, min_cluster: usize) -> Vec<Vec<usize>> {
    let cell = |p: &Vec3<f64>| {
        (
            (p.x / eps).floor() as i64,
            (p.y / eps).floor() as i64,
            (p.z / eps).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let eps2 = eps * eps;
    let mut parent: Vec<usize> = (0..points.len()).collect();
    for (i, p) in points.iter().enumerate() {
        let (cx, cy, cz) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &j in bucket {
                        if j > i && (*p - points[j]).norm_sq() <= eps2 {
                            union(&mut parent, i, j);
                        }
                    }
                }
            }
        }
    }
    components(&mut parent, min_cluster)
}

/// Quadratic-time reference for [`cluster`].
pub fn cluster_brute_force(points: &[Vec3<f64>], eps: f64, min_cluster: usize) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..points.len()).collect();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if (points[i] - points[j]).norm_sq() <= eps * eps {
                union(&mut parent, i, j);
            }
        }
    }
    components(&mut parent, min_cluster)
}

fn yaw_hypothesis(k: usize, steps: usize) -> f64 {
    std::f64::consts::PI * k as f64 / steps as f64
}

fn best_yaw<F: Fn(f64) -> BoundingBox3D<f64>>(
    points: &[Vec3<f64>],
    steps: usize,
    place: F,
) -> (BoundingBox3D<f64>, usize) {
    let mut best: Option<(BoundingBox3D<f64>, usize)> = None;
    for k in 0..steps {
        let b = place(yaw_hypothesis(k, steps));
        let n = points.iter().filter(|p| box_contains(&b, **p)).count();
        if best.as_ref().is_none_or(|(_, bn)| n > *bn) {
            best = Some((b, n));
        }
    }
    best.expect("at least one yaw step")
}

fn centroid(points: &[Vec3<f64>]) -> Vec3<f64> {
    points.iter().fold(Vec3::zero(), |acc, p| acc + *p) * (1.0 / points.len() as f64)
}

fn ground_height(plane: Option<&GroundPlane>, points: &[Vec3<f64>], at: Vec3<f64>) -> f64 {
    match plane {
        Some(g) => g.height_at(at.x, at.y),
        None => points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min),
    }
}

fn prediction(frame_id: &str, bbox: BoundingBox3D<f64>, contained: usize, total: usize) -> Prediction<f64> {
    Prediction {
        frame_id: frame_id.to_string(),
        bbox,
        confidence: contained as f64 / total as f64,
    }
}

/// Anchor box at the cluster centroid with the yaw containing the most points.
///
/// The box bottom sits on `ground` (or on the lowest point without a plane); ties go to the
/// smallest yaw in `[0, π)`.
pub fn fit_box(
    points: &[Vec3<f64>],
    ground: Option<&GroundPlane>,
    cfg: &DetectorConfig,
    frame_id: &str,
) -> Result<Prediction<f64>> {
    if points.is_empty() {
        return Err(Error::Validation("cannot fit a box to an empty cluster".into()));
    }
    let c = centroid(points);
    let z = ground_height(ground, points, c) + cfg.anchor.height * 0.5;
    let center = Vec3::new(c.x, c.y, z);
    let (bbox, n) = best_yaw(points, cfg.yaw_steps, |yaw| BoundingBox3D {
        center,
        dims: cfg.anchor,
        yaw,
    });
    Ok(prediction(frame_id, bbox, n, points.len()))
}

/// Like [`fit_box`], but for each yaw the box is slid away from `sensor` along any axis on
/// which the cluster is shorter than the anchor, so that its near faces touch the visible
/// surface instead of being centered on it.
pub fn fit_box_toward(
    points: &[Vec3<f64>],
    sensor: Vec3<f64>,
    ground: Option<&GroundPlane>,
    cfg: &DetectorConfig,
    frame_id: &str,
) -> Result<Prediction<f64>> {
    if points.is_empty() {
        return Err(Error::Validation("cannot fit a box to an empty cluster".into()));
    }
    let c = centroid(points);
    let half = cfg.anchor.half();
    let place = |yaw: f64| {
        let local: Vec<Vec3<f64>> = points.iter().map(|p| (*p - c).rotate_z(-yaw)).collect();
        let s = (sensor - c).rotate_z(-yaw);
        let axis = |get: fn(&Vec3<f64>) -> f64, h: f64, s: f64| {
            let lo = local.iter().map(get).fold(f64::INFINITY, f64::min);
            let hi = local.iter().map(get).fold(f64::NEG_INFINITY, f64::max);
            if hi - lo >= 2.0 * h {
                0.5 * (lo + hi)
            } else if s < 0.5 * (lo + hi) {
                lo + h
            } else {
                hi - h
            }
        };
        let u = axis(|p| p.x, half.x, s.x);
        let v = axis(|p| p.y, half.y, s.y);
        let xy = c + Vec3::new(u, v, 0.0).rotate_z(yaw);
        let z = ground_height(ground, points, xy) + half.z;
        BoundingBox3D {
            center: Vec3::new(xy.x, xy.y, z),
            dims: cfg.anchor,
            yaw,
        }
    };
    let (bbox, n) = best_yaw(points, cfg.yaw_steps, place);
    Ok(prediction(frame_id, bbox, n, points.len()))
}

/// Full pipeline on an ego-frame cloud with the sensor at the origin.
pub fn detect<T: Real>(cloud: &PointCloud<T>, cfg: &DetectorConfig) -> Result<Vec<Prediction<f64>>> {
    detect_from(cloud, Vec3::zero(), cfg)
}

pub fn detect_from<T: Real>(
    cloud: &PointCloud<T>,
    sensor: Vec3<f64>,
    cfg: &DetectorConfig,
) -> Result<Vec<Prediction<f64>>> {
    cfg.validate()?;
    let (objects, plane) = remove_ground(cloud, cfg);
    let pts: Vec<Vec3<f64>> = objects.points.iter().map(|p| p.pos().cast()).collect();
    let mut out = Vec::new();
    for members in cluster(&pts, cfg.cluster_eps, cfg.min_cluster) {
        let cluster_pts: Vec<Vec3<f64>> = members.iter().map(|&i| pts[i]).collect();
        let p = fit_box_toward(&cluster_pts, sensor, plane.as_ref(), cfg, &cloud.frame_id)?;
        if p.bbox.center.norm_xy() <= DETECTION_RANGE {
            out.push(p);
        }
    }
    Ok(out)
}

/// Predictions for every frame, in manifest order.
pub fn detect_dataset(manifest: &DatasetManifest, cfg: &DetectorConfig) -> Result<Vec<(String, Vec<Prediction<f64>>)>> {
    cfg.validate()?;
    manifest
        .frames
        .par_iter()
        .map(|e| {
            let cloud = manifest.load_cloud::<f64>(e)?;
            Ok((e.frame_id.clone(), detect(&cloud, cfg)?))
        })
        .collect()
}
