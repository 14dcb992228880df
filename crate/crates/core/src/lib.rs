//! Tools for measuring the sim-to-real gap of LiDAR datasets.
//!
//! The crate replays recorded trajectories in a triangle-mesh scene to produce
//! scenario-identical synthetic scans ([`sim`]), applies sensor-effect models
//! ([`effects`]), auto-labels recorded scans ([`autolabel`]) and compares
//! datasets through statistics ([`stats`]), detection metrics ([`eval`]) and
//! point-set distances ([`similarity`]).
//!
//! All geometry is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root pick `f64`, which is what the file readers and the CLI use.

pub mod autolabel;
pub mod detector;
pub mod effects;
pub mod error;
pub mod eval;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod manifest;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod similarity;
pub mod stats;
pub mod targets;
pub mod transform;

pub use error::{Error, Result};
pub use frame::{RangeBucket, DETECTION_RANGE};
pub use geometry::Vec3;
pub use manifest::{DatasetManifest, FrameEntry, Split, SplitRatios};
pub use scalar::Real;
pub use transform::{bucket_of, interpolate_pose, points_in_box, world_box_to_ego};

pub type Vec3d = geometry::Vec3<f64>;
pub type Vec3f = geometry::Vec3<f32>;
pub type Point3d = frame::Point3<f64>;
pub type Point3f = frame::Point3<f32>;
pub type PointCloudD = frame::PointCloud<f64>;
pub type PointCloudF = frame::PointCloud<f32>;
pub type BoxD = frame::BoundingBox3D<f64>;
pub type BoxF = frame::BoundingBox3D<f32>;
pub type DimsD = frame::VehicleDims<f64>;
pub type TrajectoryD = frame::Trajectory<f64>;
pub type PoseD = frame::TrajectorySample<f64>;
pub type FrameLabelD = frame::FrameLabel<f64>;
pub type PredictionD = frame::Prediction<f64>;
