//! Pose interpolation, world-to-ego transforms, box membership and range buckets.

use crate::error::{Error, Result};
use crate::frame::{
    BoundingBox3D, PointCloud, RangeBucket, Trajectory, TrajectorySample, VehicleDims, DETECTION_RANGE,
};
use crate::geometry::{angle_diff, normalize_angle, Vec3};
use crate::scalar::Real;

/// Slack on the closed box-membership test, in meters.
///
/// Clouds are stored as 32-bit floats, so surface hits that lie exactly on a
/// box face come back a few micrometers off it after a save/load cycle.
pub const BOX_TOLERANCE: f64 = 1e-4;

/// Pose at time `t`, linear in position and shortest-arc in yaw.
pub fn interpolate_pose<T: Real>(traj: &Trajectory<T>, t: f64) -> Result<TrajectorySample<T>> {
    let samples = &traj.samples;
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) if samples.len() >= 2 => (f, l),
        _ => {
            return Err(Error::Validation(format!(
                "trajectory '{}' has fewer than 2 samples",
                traj.vehicle_id
            )))
        }
    };
    if !(t >= first.t && t <= last.t) {
        return Err(Error::OutOfRange(format!(
            "t = {t} outside trajectory '{}' span [{}, {}]",
            traj.vehicle_id, first.t, last.t
        )));
    }
    // first index with sample.t >= t
    let hi = samples.partition_point(|s| s.t < t);
    if samples[hi].t == t {
        return Ok(samples[hi]);
    }
    let (a, b) = (&samples[hi - 1], &samples[hi]);
    let frac = (t - a.t) / (b.t - a.t);
    let s = T::lit(frac);
    let position = a.position + (b.position - a.position) * s;
    let yaw = normalize_angle(a.yaw + angle_diff(a.yaw, b.yaw) * s);
    let speed = match (a.speed, b.speed) {
        (Some(va), Some(vb)) => Some(va + (vb - va) * s),
        _ => None,
    };
    Ok(TrajectorySample {
        t,
        position,
        yaw,
        speed,
    })
}

/// Expresses `target`'s box in the ego vehicle's local frame.
pub fn world_box_to_ego<T: Real>(
    ego: &TrajectorySample<T>,
    target: &TrajectorySample<T>,
    dims: VehicleDims<T>,
) -> Result<BoundingBox3D<T>> {
    let center = (target.position - ego.position).rotate_z(-ego.yaw);
    BoundingBox3D::new(center, dims, normalize_angle(target.yaw - ego.yaw))
}

/// Transforms an ego-frame point into world coordinates.
pub fn ego_to_world<T: Real>(ego: &TrajectorySample<T>, p: Vec3<T>) -> Vec3<T> {
    p.rotate_z(ego.yaw) + ego.position
}

pub fn world_to_ego<T: Real>(ego: &TrajectorySample<T>, p: Vec3<T>) -> Vec3<T> {
    (p - ego.position).rotate_z(-ego.yaw)
}

/// Closed containment test of a single point against a box.
#[inline]
pub fn box_contains<T: Real>(bbox: &BoundingBox3D<T>, p: Vec3<T>) -> bool {
    let q = bbox.to_canonical(p);
    let h = bbox.dims.half();
    let tol = T::lit(BOX_TOLERANCE);
    q.x.abs() <= h.x + tol && q.y.abs() <= h.y + tol && q.z.abs() <= h.z + tol
}

/// Indices of the points inside `bbox`, boundary included.
pub fn points_in_box<T: Real>(cloud: &PointCloud<T>, bbox: &BoundingBox3D<T>) -> Vec<usize> {
    cloud
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| box_contains(bbox, p.pos()))
        .map(|(i, _)| i)
        .collect()
}

/// Range section of a box; boxes beyond the detection range are rejected.
pub fn bucket_of<T: Real>(bbox: &BoundingBox3D<T>) -> Result<RangeBucket> {
    let d = bbox.range_xy();
    RangeBucket::SECTIONS
        .into_iter()
        .find(|b| b.contains_distance(d))
        .ok_or_else(|| Error::OutOfRange(format!("box at horizontal distance {d} m beyond {DETECTION_RANGE} m")))
}
