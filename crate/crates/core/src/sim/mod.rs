//! Ray-casting LiDAR simulation over a static track mesh and moving vehicles.

pub mod bvh;
pub mod dataset;
pub mod mesh;
pub mod scene;
pub mod sensor;

pub use bvh::{Bvh, Hit, Ray};
pub use dataset::{
    schedule_from_manifest, schedule_from_trajectory, select_stride, simulate_dataset, simulate_frames, ScheduledFrame,
    TrajectorySet,
};
pub use mesh::{load_mesh, TriangleMesh};
pub use scene::{build_scene, trace_frame, FrameScenario, HitSource, Scene, SceneHit};
pub use sensor::{generate_rays, generate_rays_ego, SensorConfig, SensorRig};
