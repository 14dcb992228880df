//! Scan-pattern configuration and ray generation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::TrajectorySample;
use crate::geometry::Vec3;
use crate::scalar::Real;
use crate::sim::bvh::Ray;

/// One spinning-free LiDAR with a rectangular scan pattern. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub horizontal_fov: f64,
    /// Mounting yaw of the scan center relative to the ego heading.
    pub yaw_offset: f64,
    pub channels: usize,
    /// `[lowest, highest]` elevation.
    pub vertical_fov: [f64; 2],
    pub horizontal_resolution: f64,
    /// Meters.
    pub max_range: f64,
    /// Sensor origin in the ego frame, meters.
    pub mount_offset: [f64; 3],
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            horizontal_fov: 120.0,
            yaw_offset: 0.0,
            channels: 32,
            vertical_fov: [-15.0, 15.0],
            horizontal_resolution: 0.2,
            max_range: 250.0,
            mount_offset: [0.0, 0.0, 0.0],
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.horizontal_fov,
            self.yaw_offset,
            self.vertical_fov[0],
            self.vertical_fov[1],
            self.horizontal_resolution,
            self.max_range,
        ]
        .iter()
        .chain(self.mount_offset.iter())
        .all(|v| v.is_finite());
        if !finite
            || self.horizontal_fov <= 0.0
            || self.horizontal_resolution <= 0.0
            || self.channels == 0
            || self.max_range <= 0.0
            || self.vertical_fov[1] < self.vertical_fov[0]
        {
            return Err(Error::Config(format!("invalid sensor configuration {self:?}")));
        }
        Ok(())
    }

    pub fn azimuth_steps(&self) -> usize {
        ((self.horizontal_fov / self.horizontal_resolution).round() as usize).max(1)
    }

    pub fn ray_count(&self) -> usize {
        self.channels * self.azimuth_steps()
    }

    pub fn elevations_deg(&self) -> Vec<f64> {
        let [lo, hi] = self.vertical_fov;
        if self.channels == 1 {
            return vec![0.5 * (lo + hi)];
        }
        let step = (hi - lo) / (self.channels - 1) as f64;
        (0..self.channels).map(|c| lo + step * c as f64).collect()
    }

    /// Azimuths at the centers of the angular steps, ego frame.
    pub fn azimuths_deg(&self) -> Vec<f64> {
        let res = self.horizontal_resolution;
        let half = 0.5 * self.horizontal_fov;
        (0..self.azimuth_steps())
            .map(|j| self.yaw_offset + (res * (j as f64 + 0.5) - half))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorRig {
    pub sensors: Vec<SensorConfig>,
}

impl Default for SensorRig {
    /// Three identical 120° sensors covering 360°.
    fn default() -> Self {
        Self {
            sensors: [0.0, 120.0, 240.0]
                .into_iter()
                .map(|yaw_offset| SensorConfig {
                    yaw_offset,
                    ..SensorConfig::default()
                })
                .collect(),
        }
    }
}

impl SensorRig {
    pub fn single(sensor: SensorConfig) -> Self {
        Self { sensors: vec![sensor] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensors.is_empty() {
            return Err(Error::Config("sensor rig needs at least one sensor".into()));
        }
        self.sensors.iter().try_for_each(SensorConfig::validate)
    }

    pub fn ray_count(&self) -> usize {
        self.sensors.iter().map(SensorConfig::ray_count).sum()
    }

    /// Sum of horizontal fields of view, degrees (overlaps counted twice).
    pub fn horizontal_coverage(&self) -> f64 {
        self.sensors.iter().map(|s| s.horizontal_fov).sum()
    }
}

/// A ray in the ego frame plus the range limit of the sensor that cast it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorRay<T> {
    pub ray: Ray<T>,
    pub max_range: T,
}

/// Ego-frame rays, sensor-major, then channel, then azimuth.
pub fn generate_rays_ego<T: Real>(rig: &SensorRig) -> Vec<SensorRay<T>> {
    let mut rays = Vec::with_capacity(rig.ray_count());
    for sensor in &rig.sensors {
        let origin = Vec3::from_f64(sensor.mount_offset[0], sensor.mount_offset[1], sensor.mount_offset[2]);
        let azimuths: Vec<(T, T)> = sensor
            .azimuths_deg()
            .into_iter()
            .map(|a| T::lit(a.to_radians()).sin_cos())
            .collect();
        let max_range = T::lit(sensor.max_range);
        for el in sensor.elevations_deg() {
            let (se, ce) = T::lit(el.to_radians()).sin_cos();
            for &(sa, ca) in &azimuths {
                let dir = Vec3::new(ce * ca, ce * sa, se).normalized();
                rays.push(SensorRay {
                    ray: Ray { origin, dir },
                    max_range,
                });
            }
        }
    }
    rays
}

/// World-frame rays for the ego pose, same ordering as [`generate_rays_ego`].
pub fn generate_rays<T: Real>(rig: &SensorRig, ego: &TrajectorySample<T>) -> Vec<(Vec3<T>, Vec3<T>)> {
    generate_rays_ego(rig)
        .into_iter()
        .map(|r| {
            (
                r.ray.origin.rotate_z(ego.yaw) + ego.position,
                r.ray.dir.rotate_z(ego.yaw),
            )
        })
        .collect()
}
