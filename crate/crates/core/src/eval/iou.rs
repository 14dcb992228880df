//! Rotated 3D intersection over union via convex polygon clipping.

use crate::frame::BoundingBox3D;
use crate::scalar::Real;

pub type Point2<T> = (T, T);

#[inline]
fn cross<T: Real>(o: Point2<T>, a: Point2<T>, b: Point2<T>) -> T {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Shoelace area of a simple polygon, positive for counter-clockwise order.
pub fn polygon_area<T: Real>(poly: &[Point2<T>]) -> T {
    if poly.len() < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        acc += a.0 * b.1 - b.0 * a.1;
    }
    acc * T::lit(0.5)
}

/// Sutherland–Hodgman clipping of `subject` by the convex counter-clockwise polygon `clip`.
pub fn clip_convex<T: Real>(subject: &[Point2<T>], clip: &[Point2<T>]) -> Vec<Point2<T>> {
    let mut output: Vec<Point2<T>> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (ca, cb) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let d_cur = cross(ca, cb, cur);
            let d_prev = cross(ca, cb, prev);
            let cur_in = d_cur >= T::zero();
            let prev_in = d_prev >= T::zero();
            if cur_in != prev_in {
                let s = d_prev / (d_prev - d_cur);
                output.push((prev.0 + (cur.0 - prev.0) * s, prev.1 + (cur.1 - prev.1) * s));
            }
            if cur_in {
                output.push(cur);
            }
        }
    }
    output
}

/// Footprint intersection area of two boxes.
pub fn bev_intersection_area<T: Real>(a: &BoundingBox3D<T>, b: &BoundingBox3D<T>) -> T {
    // cheap reject on circumscribed circles
    let ra = a.dims.length.hypot(a.dims.width) * T::lit(0.5);
    let rb = b.dims.length.hypot(b.dims.width) * T::lit(0.5);
    let dx = a.center.x - b.center.x;
    let dy = a.center.y - b.center.y;
    if dx * dx + dy * dy > (ra + rb) * (ra + rb) {
        return T::zero();
    }
    let poly = clip_convex(&a.bev_corners(), &b.bev_corners());
    polygon_area(&poly).max(T::zero())
}

pub fn intersection_volume<T: Real>(a: &BoundingBox3D<T>, b: &BoundingBox3D<T>) -> T {
    let dz = (a.z_top().min(b.z_top()) - a.z_bottom().max(b.z_bottom())).max(T::zero());
    if dz == T::zero() {
        return T::zero();
    }
    bev_intersection_area(a, b) * dz
}

/// Volume IoU of two yaw-rotated boxes, in [0, 1].
pub fn iou3d<T: Real>(a: &BoundingBox3D<T>, b: &BoundingBox3D<T>) -> T {
    let inter = intersection_volume(a, b);
    let union = a.volume() + b.volume() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).max(T::zero()).min(T::one())
}
