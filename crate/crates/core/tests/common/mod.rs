#![allow(dead_code)]

use simgap::frame::{FrameLabel, PointCloud, Trajectory, TrajectorySample, VehicleDims};
use simgap::sim::{
    build_scene, simulate_frames, FrameScenario, Scene, ScheduledFrame, SensorRig, TrajectorySet, TriangleMesh,
};
use simgap::Vec3;

/// Ego sensor height above the track surface.
pub const EGO_Z: f64 = 1.0;
pub const TRACK_RADIUS: f64 = 60.0;
pub const SPEED: f64 = 20.0;

pub fn race_car() -> VehicleDims<f64> {
    VehicleDims::race_car()
}

pub fn vehicle_z() -> f64 {
    race_car().height * 0.5
}

pub fn scene_with_ground(ground_z: f64) -> Scene<f64> {
    build_scene(TriangleMesh::ground(300.0, ground_z), TriangleMesh::cuboid(race_car())).unwrap()
}

pub fn scene() -> Scene<f64> {
    scene_with_ground(0.0)
}

pub fn pose(t: f64, x: f64, y: f64, z: f64, yaw: f64) -> TrajectorySample<f64> {
    TrajectorySample::new(t, Vec3::new(x, y, z), yaw)
}

/// Counter-clockwise lap on a circle, `lead` meters of arc ahead of the ego start.
pub fn circle(id: &str, radius: f64, lead: f64, z: f64, duration: f64, rate: f64) -> Trajectory<f64> {
    let n = (duration * rate).round() as usize + 1;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let a = (lead + SPEED * t) / TRACK_RADIUS;
            pose(
                t,
                radius * a.cos(),
                radius * a.sin(),
                z,
                a + std::f64::consts::FRAC_PI_2,
            )
        })
        .collect();
    Trajectory::new(id, samples).unwrap()
}

/// Ego plus three targets at varied ranges on a circular track.
pub fn track_set(duration: f64) -> TrajectorySet<f64> {
    let z = vehicle_z();
    TrajectorySet {
        ego: circle("ego", TRACK_RADIUS, 0.0, EGO_Z, duration, 20.0),
        others: vec![
            circle("car1", TRACK_RADIUS - 4.0, 14.0, z, duration, 20.0),
            circle("car2", TRACK_RADIUS + 3.0, 38.0, z, duration, 20.0),
            circle("car3", TRACK_RADIUS + 4.0, -25.0, z, duration, 20.0),
        ],
    }
}

/// Frames at `rate` Hz, offset from the trajectory samples so poses are interpolated.
pub fn schedule(n: usize, rate: f64) -> Vec<ScheduledFrame> {
    (0..n)
        .map(|i| ScheduledFrame {
            frame_id: format!("{i:06}"),
            t: 0.013 + i as f64 / rate,
        })
        .collect()
}

pub fn simulate(
    scene: &Scene<f64>,
    set: &TrajectorySet<f64>,
    frames: &[ScheduledFrame],
) -> Vec<(PointCloud<f64>, FrameLabel<f64>)> {
    simulate_frames(scene, set, &SensorRig::default(), frames).unwrap()
}

/// Line trajectory at constant position.
pub fn parked(id: &str, x: f64, y: f64, z: f64, yaw: f64) -> Trajectory<f64> {
    Trajectory::new(id, vec![pose(0.0, x, y, z, yaw), pose(10.0, x, y, z, yaw)]).unwrap()
}

/// One parked target seen from a parked ego at the origin.
pub fn single_target_frame(x: f64, y: f64, yaw: f64) -> (PointCloud<f64>, FrameLabel<f64>) {
    let set = TrajectorySet {
        ego: parked("ego", 0.0, 0.0, EGO_Z, 0.0),
        others: vec![parked("car", x, y, vehicle_z(), yaw)],
    };
    let scenario: FrameScenario<f64> = set.scenario_at("000000", 1.0).unwrap();
    simgap::sim::trace_frame(&scene(), &scenario, &SensorRig::default()).unwrap()
}
