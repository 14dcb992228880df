//! Trajectory replay: one simulated scan and label file per scheduled frame.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{FrameLabel, PointCloud, Trajectory};
use crate::io;
use crate::manifest::{DatasetManifest, FrameEntry, Split, MANIFEST_FILE};
use crate::scalar::Real;
use crate::sim::scene::{trace_frame, FrameScenario, Scene};
use crate::sim::sensor::SensorRig;
use crate::transform::interpolate_pose;

/// The ego trajectory plus every other vehicle's trajectory.
#[derive(Debug, Clone)]
pub struct TrajectorySet<T> {
    pub ego: Trajectory<T>,
    pub others: Vec<Trajectory<T>>,
}

impl<T: Real> TrajectorySet<T> {
    /// Time interval covered by every trajectory, `None` if they do not overlap.
    pub fn common_span(&self) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = self.ego.span();
        for t in &self.others {
            let (a, b) = t.span();
            lo = lo.max(a);
            hi = hi.min(b);
        }
        (lo <= hi).then_some((lo, hi))
    }

    pub fn scenario_at(&self, frame_id: &str, t: f64) -> Result<FrameScenario<T>> {
        let ego = interpolate_pose(&self.ego, t)?;
        let others = self
            .others
            .iter()
            .map(|tr| Ok((tr.vehicle_id.clone(), interpolate_pose(tr, t)?)))
            .collect::<Result<_>>()?;
        Ok(FrameScenario {
            frame_id: frame_id.to_string(),
            t,
            ego,
            others,
        })
    }
}

/// A frame to simulate: the id shared with the recorded dataset and its time.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledFrame {
    pub frame_id: String,
    pub t: f64,
}

/// One frame per ego sample, ids zero-padded sample indices.
pub fn schedule_from_trajectory<T: Real>(ego: &Trajectory<T>) -> Vec<ScheduledFrame> {
    ego.samples
        .iter()
        .enumerate()
        .map(|(i, s)| ScheduledFrame {
            frame_id: format!("{i:06}"),
            t: s.t,
        })
        .collect()
}

/// Frames of a recorded manifest, so simulated ids pair with the recorded ones.
pub fn schedule_from_manifest(manifest: &DatasetManifest) -> Result<Vec<ScheduledFrame>> {
    manifest
        .frames
        .iter()
        .map(|f| {
            f.timestamp
                .map(|t| ScheduledFrame {
                    frame_id: f.frame_id.clone(),
                    t,
                })
                .ok_or_else(|| Error::Validation(format!("frame '{}' has no timestamp", f.frame_id)))
        })
        .collect()
}

/// Every `stride`-th frame, starting with the first.
pub fn select_stride(schedule: &[ScheduledFrame], stride: usize) -> Result<Vec<ScheduledFrame>> {
    if stride == 0 {
        return Err(Error::Config("frame stride must be at least 1".into()));
    }
    Ok(schedule.iter().step_by(stride).cloned().collect())
}

fn check_coverage<T: Real>(set: &TrajectorySet<T>, frames: &[ScheduledFrame]) -> Result<()> {
    let span = set.common_span();
    let outside: Vec<&str> = frames
        .iter()
        .filter(|f| span.is_none_or(|(lo, hi)| f.t < lo || f.t > hi))
        .map(|f| f.frame_id.as_str())
        .collect();
    if outside.is_empty() {
        return Ok(());
    }
    let usable = match span {
        Some((lo, hi)) => format!("[{lo}, {hi}]"),
        None => "empty".to_string(),
    };
    Err(Error::OutOfRange(format!(
        "{} frame(s) outside the common trajectory span {usable} (first: '{}')",
        outside.len(),
        outside[0]
    )))
}

/// Simulates the selected frames in memory, in schedule order.
pub fn simulate_frames<T: Real>(
    scene: &Scene<T>,
    trajectories: &TrajectorySet<T>,
    rig: &SensorRig,
    frames: &[ScheduledFrame],
) -> Result<Vec<(PointCloud<T>, FrameLabel<T>)>> {
    rig.validate()?;
    check_coverage(trajectories, frames)?;
    frames
        .par_iter()
        .map(|f| {
            let scenario = trajectories.scenario_at(&f.frame_id, f.t)?;
            trace_frame(scene, &scenario, rig)
        })
        .collect()
}

/// Simulates every `stride`-th scheduled frame and writes a dataset under `out_dir`:
/// `clouds/<id>.bin`, `labels/<id>.txt` and `manifest.json`.
pub fn simulate_dataset<T: Real>(
    scene: &Scene<T>,
    trajectories: &TrajectorySet<T>,
    rig: &SensorRig,
    schedule: &[ScheduledFrame],
    stride: usize,
    out_dir: &Path,
    name: &str,
) -> Result<DatasetManifest> {
    let frames = select_stride(schedule, stride)?;
    rig.validate()?;
    check_coverage(trajectories, &frames)?;
    let entries: Vec<FrameEntry> = frames
        .par_iter()
        .map(|f| {
            let scenario = trajectories.scenario_at(&f.frame_id, f.t)?;
            let (cloud, label) = trace_frame(scene, &scenario, rig)?;
            let cloud_rel = Path::new("clouds").join(format!("{}.bin", f.frame_id));
            let label_rel = Path::new("labels").join(format!("{}.txt", f.frame_id));
            io::save_point_cloud(&cloud, out_dir.join(&cloud_rel))?;
            io::save_labels(&label, out_dir.join(&label_rel))?;
            Ok(FrameEntry {
                frame_id: f.frame_id.clone(),
                timestamp: Some(f.t),
                cloud: cloud_rel,
                label: Some(label_rel),
                split: Split::Train,
            })
        })
        .collect::<Result<_>>()?;
    let mut manifest = DatasetManifest::new(name, out_dir);
    manifest.frames = entries;
    manifest.assign_splits();
    manifest.validate()?;
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
