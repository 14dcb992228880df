//! Scene assembly and single-frame ray tracing.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{FrameLabel, LabeledBox, Point3, PointCloud, TrajectorySample, VehicleDims, DETECTION_RANGE};
use crate::scalar::Real;
use crate::sim::bvh::{Bvh, Ray};
use crate::sim::mesh::TriangleMesh;
use crate::sim::sensor::{generate_rays_ego, SensorRay, SensorRig};
use crate::transform::world_box_to_ego;

/// Rays ignore hits closer than this, meters.
pub const MIN_HIT_DISTANCE: f64 = 1e-6;

/// Immutable geometry shared by every simulated frame.
#[derive(Debug, Clone)]
pub struct Scene<T> {
    static_bvh: Bvh<T>,
    vehicle_bvh: Bvh<T>,
    /// Box dimensions written into labels.
    pub label_dims: VehicleDims<T>,
}

/// What a ray struck.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitSource {
    Static { tri: u32 },
    Vehicle { index: usize, tri: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneHit<T> {
    pub t: T,
    pub source: HitSource,
}

/// Cleans both meshes and builds one hierarchy each. The vehicle mesh is
/// expected in its canonical frame: axis-aligned, centered at the box center.
pub fn build_scene<T: Real>(static_mesh: TriangleMesh<T>, vehicle_mesh: TriangleMesh<T>) -> Result<Scene<T>> {
    let (static_mesh, dropped_static) = static_mesh.cleaned();
    let (vehicle_mesh, dropped_vehicle) = vehicle_mesh.cleaned();
    if dropped_static + dropped_vehicle > 0 {
        warn!("dropped {dropped_static} static and {dropped_vehicle} vehicle zero-area triangles");
    }
    if static_mesh.is_empty() {
        return Err(Error::Config("static mesh has no usable triangles".into()));
    }
    if vehicle_mesh.is_empty() {
        return Err(Error::Config("vehicle mesh has no usable triangles".into()));
    }
    Ok(Scene {
        static_bvh: Bvh::build(&static_mesh),
        vehicle_bvh: Bvh::build(&vehicle_mesh),
        label_dims: VehicleDims::race_car(),
    })
}

impl<T: Real> Scene<T> {
    pub fn with_label_dims(mut self, dims: VehicleDims<T>) -> Self {
        self.label_dims = dims;
        self
    }

    pub fn static_triangles(&self) -> usize {
        self.static_bvh.triangle_count()
    }

    pub fn vehicle_triangles(&self) -> usize {
        self.vehicle_bvh.triangle_count()
    }

    pub fn static_bvh(&self) -> &Bvh<T> {
        &self.static_bvh
    }

    /// Nearest hit of a world-frame ray against the track and every placed vehicle.
    pub fn intersect(&self, ray: &Ray<T>, max_range: T, vehicles: &[TrajectorySample<T>]) -> Option<SceneHit<T>> {
        let t_min = T::lit(MIN_HIT_DISTANCE);
        let mut best = self.static_bvh.intersect(ray, t_min, max_range).map(|h| SceneHit {
            t: h.t,
            source: HitSource::Static { tri: h.tri },
        });
        for (index, pose) in vehicles.iter().enumerate() {
            let limit = best.map_or(max_range, |b| b.t);
            let local = Ray {
                origin: (ray.origin - pose.position).rotate_z(-pose.yaw),
                dir: ray.dir.rotate_z(-pose.yaw),
            };
            if let Some(h) = self.vehicle_bvh.intersect(&local, t_min, limit) {
                // strictly nearer only: ties keep the earlier source
                if best.is_none_or(|b| h.t < b.t) {
                    best = Some(SceneHit {
                        t: h.t,
                        source: HitSource::Vehicle { index, tri: h.tri },
                    });
                }
            }
        }
        best
    }
}

/// Poses of every vehicle at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScenario<T> {
    pub frame_id: String,
    pub t: f64,
    pub ego: TrajectorySample<T>,
    pub others: Vec<(String, TrajectorySample<T>)>,
}

/// Per-ray result of [`trace_rays`]; `None` when nothing was hit.
pub fn trace_rays<T: Real>(
    scene: &Scene<T>,
    scenario: &FrameScenario<T>,
    rays: &[SensorRay<T>],
) -> Vec<Option<SceneHit<T>>> {
    let ego = &scenario.ego;
    let poses: Vec<TrajectorySample<T>> = scenario.others.iter().map(|(_, p)| *p).collect();
    rays.par_iter()
        .map(|r| {
            let world = Ray {
                origin: r.ray.origin.rotate_z(ego.yaw) + ego.position,
                dir: r.ray.dir.rotate_z(ego.yaw),
            };
            scene.intersect(&world, r.max_range, &poses)
        })
        .collect()
}

/// Simulates one clean scan and its exact labels, both in the ego frame.
///
/// Points follow ray order; intensity is constant 0.0. Targets beyond the
/// detection range are left out of the labels.
pub fn trace_frame<T: Real>(
    scene: &Scene<T>,
    scenario: &FrameScenario<T>,
    rig: &SensorRig,
) -> Result<(PointCloud<T>, FrameLabel<T>)> {
    if scenario.others.iter().any(|(id, _)| id == "ego") {
        warn!("frame {}: a target is named 'ego'", scenario.frame_id);
    }
    let rays = generate_rays_ego::<T>(rig);
    let hits = trace_rays(scene, scenario, &rays);
    let points = rays
        .iter()
        .zip(&hits)
        .filter_map(|(r, h)| h.map(|h| Point3::from_vec(r.ray.origin + r.ray.dir * h.t).with_intensity(0.0)))
        .collect();
    let mut cloud = PointCloud::new(scenario.frame_id.clone(), points);
    cloud.timestamp = Some(scenario.t);

    let mut label = FrameLabel::new(scenario.frame_id.clone());
    for (vehicle_id, pose) in &scenario.others {
        let bbox = world_box_to_ego(&scenario.ego, pose, scene.label_dims)?;
        if bbox.range_xy() <= T::lit(DETECTION_RANGE) {
            label.boxes.push(LabeledBox {
                vehicle_id: vehicle_id.clone(),
                bbox,
            });
        }
    }
    Ok((cloud, label))
}
