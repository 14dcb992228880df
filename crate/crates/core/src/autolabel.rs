//! Box labels from recorded trajectories, refined against the measured points.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{BoundingBox3D, FrameLabel, LabeledBox, PointCloud, TrajectorySample, VehicleDims, DETECTION_RANGE};
use crate::io::{save_labels, write_file};
use crate::manifest::{DatasetManifest, MANIFEST_FILE};
use crate::scalar::Real;
use crate::sim::TrajectorySet;
use crate::transform::{world_box_to_ego, BOX_TOLERANCE};

pub const REFINE_LOG_FILE: &str = "refine_log.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub search_radius_xy: f64,
    pub step: f64,
    pub shell_margin: f64,
    pub shell_penalty: f64,
    pub min_points: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            search_radius_xy: 1.0,
            step: 0.1,
            shell_margin: 0.3,
            shell_penalty: 0.5,
            min_points: 5,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.search_radius_xy, self.step, self.shell_margin, self.shell_penalty]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("refine parameters must be finite".into()));
        }
        if self.step <= 0.0 {
            return Err(Error::Config(format!("refine step must be > 0, got {}", self.step)));
        }
        if self.search_radius_xy < 0.0 {
            return Err(Error::Config(format!(
                "search radius must be >= 0, got {}",
                self.search_radius_xy
            )));
        }
        if self.shell_penalty < 0.0 {
            return Err(Error::Config(format!(
                "shell penalty must be >= 0, got {}",
                self.shell_penalty
            )));
        }
        if self.shell_margin < 0.0 {
            return Err(Error::Config(format!(
                "shell margin must be >= 0, got {}",
                self.shell_margin
            )));
        }
        Ok(())
    }

    /// Grid steps on each side of zero.
    pub fn half_steps(&self) -> i64 {
        (self.search_radius_xy / self.step + 1e-9).floor() as i64
    }
}

/// Box of `target` in the ego frame at one instant.
pub fn initial_box<T: Real>(
    ego: &TrajectorySample<T>,
    target: &TrajectorySample<T>,
    dims: VehicleDims<T>,
) -> Result<BoundingBox3D<T>> {
    world_box_to_ego(ego, target, dims)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOutcome<T> {
    pub bbox: BoundingBox3D<T>,
    /// Applied shift in the box frame.
    pub dx: f64,
    pub dy: f64,
    pub score: f64,
    pub inside: usize,
    pub low_confidence: bool,
}

/// Inside and shell counts for every grid shift, row-major over (dx, dy).
fn score_grid(local: &[[f64; 3]], half: [f64; 3], cfg: &RefineConfig) -> Vec<(usize, usize)> {
    let k = cfg.half_steps();
    let side = (2 * k + 1) as usize;
    let tol = BOX_TOLERANCE;
    let m = cfg.shell_margin;
    let mut grid = vec![(0usize, 0usize); side * side];
    for (ix, i) in (-k..=k).enumerate() {
        let dx = i as f64 * cfg.step;
        for (iy, j) in (-k..=k).enumerate() {
            let dy = j as f64 * cfg.step;
            let mut inside = 0;
            let mut shell = 0;
            for p in local {
                let x = (p[0] - dx).abs();
                let y = (p[1] - dy).abs();
                let z = p[2].abs();
                if x <= half[0] + tol && y <= half[1] + tol && z <= half[2] + tol {
                    inside += 1;
                } else if x <= half[0] + m + tol && y <= half[1] + m + tol && z <= half[2] + m + tol {
                    shell += 1;
                }
            }
            grid[ix * side + iy] = (inside, shell);
        }
    }
    grid
}

/// Shifts the box in its ground plane to maximize `inside − λ·shell` over a square grid.
///
/// Ties go to the smallest shift norm, then to the lexicographically smallest (dx, dy).
pub fn refine_box<T: Real>(
    cloud: &PointCloud<T>,
    bbox: &BoundingBox3D<T>,
    cfg: &RefineConfig,
) -> Result<RefineOutcome<T>> {
    cfg.validate()?;
    let h = bbox.dims.half();
    let half = [h.x.as_f64(), h.y.as_f64(), h.z.as_f64()];
    let reach = cfg.search_radius_xy + cfg.shell_margin + BOX_TOLERANCE;
    let local: Vec<[f64; 3]> = cloud
        .points
        .iter()
        .map(|p| {
            let q = bbox.to_canonical(p.pos());
            [q.x.as_f64(), q.y.as_f64(), q.z.as_f64()]
        })
        .filter(|q| q[0].abs() <= half[0] + reach && q[1].abs() <= half[1] + reach && q[2].abs() <= half[2] + reach)
        .collect();
    let k = cfg.half_steps();
    let side = (2 * k + 1) as usize;
    let grid = score_grid(&local, half, cfg);
    let mut best: Option<(f64, i64, i64, i64, usize)> = None;
    for (ix, i) in (-k..=k).enumerate() {
        for (iy, j) in (-k..=k).enumerate() {
            let (inside, shell) = grid[ix * side + iy];
            let score = inside as f64 - cfg.shell_penalty * shell as f64;
            let norm = i * i + j * j;
            let better = match best {
                None => true,
                Some((bs, bn, bi, bj, _)) => score > bs || (score == bs && (norm, i, j) < (bn, bi, bj)),
            };
            if better {
                best = Some((score, norm, i, j, inside));
            }
        }
    }
    let (score, _, i, j, inside) = best.expect("grid has at least one cell");
    if inside < cfg.min_points {
        let (zi, zs) = grid[k as usize * side + k as usize];
        return Ok(RefineOutcome {
            bbox: *bbox,
            dx: 0.0,
            dy: 0.0,
            score: zi as f64 - cfg.shell_penalty * zs as f64,
            inside: zi,
            low_confidence: true,
        });
    }
    let dx = i as f64 * cfg.step;
    let dy = j as f64 * cfg.step;
    let shift = crate::geometry::Vec3::new(T::lit(dx), T::lit(dy), T::zero()).rotate_z(bbox.yaw);
    Ok(RefineOutcome {
        bbox: bbox.with_center(bbox.center + shift),
        dx,
        dy,
        score,
        inside,
        low_confidence: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineLogRow {
    pub frame_id: String,
    pub vehicle_id: String,
    pub dx: f64,
    pub dy: f64,
    pub score: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, Default)]
pub struct AutolabelOutput<T> {
    pub labels: Vec<FrameLabel<T>>,
    pub log: Vec<RefineLogRow>,
    /// Frames skipped with the reason.
    pub errors: Vec<(String, String)>,
}

impl<T: Real> AutolabelOutput<T> {
    pub fn log_csv(&self) -> String {
        let mut out = String::from("frame_id,vehicle_id,dx,dy,score,flag\n");
        for r in &self.log {
            let flag = if r.low_confidence { "low_confidence" } else { "ok" };
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.4},{},{flag}",
                r.frame_id, r.vehicle_id, r.dx, r.dy, r.score
            );
        }
        out
    }

    /// Writes labels/<id>.txt, the refinement log and a manifest of the labeled frames.
    ///
    /// Cloud paths in the written manifest are the absolute paths of the source clouds.
    pub fn save(&self, source: &DatasetManifest, out_dir: &Path) -> Result<DatasetManifest> {
        let mut manifest = DatasetManifest::new(&source.name, out_dir);
        manifest.split_ratios = source.split_ratios;
        for label in &self.labels {
            let entry = source
                .find(&label.frame_id)
                .ok_or_else(|| Error::Validation(format!("label for unknown frame '{}'", label.frame_id)))?;
            let rel = Path::new("labels").join(format!("{}.txt", label.frame_id));
            save_labels(label, out_dir.join(&rel))?;
            let mut e = entry.clone();
            let cloud = source.resolve(&entry.cloud);
            e.cloud = std::path::absolute(&cloud).map_err(|err| Error::io(&cloud, err))?;
            e.label = Some(rel);
            manifest.frames.push(e);
        }
        write_file(&out_dir.join(REFINE_LOG_FILE), self.log_csv().as_bytes())?;
        manifest.save(out_dir.join(MANIFEST_FILE))?;
        Ok(manifest)
    }
}

/// Labels one cloud. Targets beyond the detection range are dropped before refinement.
pub fn label_cloud<T: Real>(
    cloud: &PointCloud<T>,
    trajectories: &TrajectorySet<T>,
    t: f64,
    dims: VehicleDims<T>,
    cfg: &RefineConfig,
) -> Result<(FrameLabel<T>, Vec<RefineLogRow>)> {
    let scenario = trajectories.scenario_at(&cloud.frame_id, t)?;
    let mut label = FrameLabel::new(&cloud.frame_id);
    let mut log = Vec::new();
    for (vehicle_id, target) in &scenario.others {
        let init = initial_box(&scenario.ego, target, dims)?;
        if init.range_xy() > T::lit(DETECTION_RANGE) {
            continue;
        }
        let r = refine_box(cloud, &init, cfg)?;
        log.push(RefineLogRow {
            frame_id: cloud.frame_id.clone(),
            vehicle_id: vehicle_id.clone(),
            dx: r.dx,
            dy: r.dy,
            score: r.score,
            low_confidence: r.low_confidence,
        });
        label.boxes.push(LabeledBox {
            vehicle_id: vehicle_id.clone(),
            bbox: r.bbox,
        });
    }
    Ok((label, log))
}

/// Labels every frame of a dataset from trajectories sampled at `timestamp + time_offset`.
///
/// Frames without a timestamp, without trajectory coverage or with unreadable clouds are
/// skipped and reported in [`AutolabelOutput::errors`].
pub fn autolabel_dataset<T: Real>(
    manifest: &DatasetManifest,
    trajectories: &TrajectorySet<T>,
    dims: VehicleDims<T>,
    cfg: &RefineConfig,
    time_offset: f64,
) -> Result<AutolabelOutput<T>> {
    cfg.validate()?;
    dims.validate()?;
    let results: Vec<_> = manifest
        .frames
        .par_iter()
        .map(|entry| {
            let t = entry
                .timestamp
                .ok_or_else(|| Error::Validation(format!("frame '{}' has no timestamp", entry.frame_id)))?;
            let cloud = manifest.load_cloud::<T>(entry)?;
            label_cloud(&cloud, trajectories, t + time_offset, dims, cfg)
        })
        .collect();
    let mut out = AutolabelOutput {
        labels: Vec::new(),
        log: Vec::new(),
        errors: Vec::new(),
    };
    for (entry, r) in manifest.frames.iter().zip(results) {
        match r {
            Ok((label, log)) => {
                out.labels.push(label);
                out.log.extend(log);
            }
            Err(e) => {
                log::warn!("frame {} skipped: {e}", entry.frame_id);
                out.errors.push((entry.frame_id.clone(), e.to_string()));
            }
        }
    }
    Ok(out)
}
