//! Target-level point sets in the canonical box frame, aggregated per range bucket.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{BoundingBox3D, FrameLabel, Point3, PointCloud, RangeBucket};
use crate::geometry::Vec3;
use crate::io::write_file;
use crate::manifest::DatasetManifest;
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Real;
use crate::transform::{bucket_of, points_in_box};

/// Default aggregate size.
pub const DEFAULT_CAP: usize = 20_000;

/// In-box points of `cloud` expressed in the box frame.
pub fn extract_canonical<T: Real>(cloud: &PointCloud<T>, bbox: &BoundingBox3D<T>) -> Vec<Point3<T>> {
    points_in_box(cloud, bbox)
        .into_iter()
        .map(|i| {
            let p = &cloud.points[i];
            p.moved_to(bbox.to_canonical(p.pos()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedCloud {
    pub bucket: RangeBucket,
    pub points: Vec<Point3<f64>>,
    pub source_frames: usize,
    pub source_targets: usize,
    /// Points before subsampling.
    pub total_points: usize,
}

fn matches_bucket(target: RangeBucket, bucket: RangeBucket) -> bool {
    bucket == RangeBucket::Full || target == bucket
}

/// Concatenates the canonical points of all in-bucket targets in frame order, then
/// subsamples to `cap` without replacement if needed.
pub fn aggregate_frames<T: Real>(
    frames: &[(PointCloud<T>, FrameLabel<T>)],
    bucket: RangeBucket,
    cap: usize,
    seed: u64,
) -> AggregatedCloud {
    let per_frame: Vec<(usize, Vec<Point3<f64>>)> = frames
        .par_iter()
        .map(|(cloud, label)| {
            let mut n = 0;
            let mut pts = Vec::new();
            for b in &label.boxes {
                if bucket_of(&b.bbox).is_ok_and(|k| matches_bucket(k, bucket)) {
                    n += 1;
                    pts.extend(extract_canonical(cloud, &b.bbox).into_iter().map(|p| Point3 {
                        x: p.x.as_f64(),
                        y: p.y.as_f64(),
                        z: p.z.as_f64(),
                        intensity: p.intensity,
                    }));
                }
            }
            (n, pts)
        })
        .collect();
    let source_frames = per_frame.iter().filter(|(n, _)| *n > 0).count();
    let source_targets = per_frame.iter().map(|(n, _)| n).sum();
    let mut points: Vec<Point3<f64>> = per_frame.into_iter().flat_map(|(_, p)| p).collect();
    let total_points = points.len();
    if points.len() > cap {
        let mut rng = rng_from_seed(derive_seed(seed, &format!("aggregate/{bucket}")));
        let mut idx = sample(&mut rng, points.len(), cap).into_vec();
        idx.sort_unstable();
        points = idx.into_iter().map(|i| points[i]).collect();
    }
    AggregatedCloud {
        bucket,
        points,
        source_frames,
        source_targets,
        total_points,
    }
}

/// [`aggregate_frames`] over every labeled frame of a dataset.
pub fn aggregate(manifest: &DatasetManifest, bucket: RangeBucket, cap: usize, seed: u64) -> Result<AggregatedCloud> {
    let frames = manifest
        .frames
        .par_iter()
        .filter(|e| e.label.is_some())
        .map(|e| Ok((manifest.load_cloud::<f64>(e)?, manifest.load_label::<f64>(e)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate_frames(&frames, bucket, cap, seed))
}

/// 2D view appended to exported points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    Side,
    Top,
    Front,
    Back,
}

impl Projection {
    pub const ALL: [Projection; 4] = [Projection::Side, Projection::Top, Projection::Front, Projection::Back];

    pub fn name(self) -> &'static str {
        match self {
            Projection::Side => "side",
            Projection::Top => "top",
            Projection::Front => "front",
            Projection::Back => "back",
        }
    }

    /// Column names and values of the projected coordinates.
    pub fn axes(self) -> (&'static str, &'static str) {
        match self {
            Projection::Side => ("x", "z"),
            Projection::Top => ("x", "y"),
            Projection::Front | Projection::Back => ("y", "z"),
        }
    }

    pub fn project(self, p: &Vec3<f64>) -> (f64, f64) {
        match self {
            Projection::Side => (p.x, p.z),
            Projection::Top => (p.x, p.y),
            Projection::Front | Projection::Back => (p.y, p.z),
        }
    }
}

impl FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Projection::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown projection '{s}' (expected side, top, front or back)")))
    }
}

pub fn aggregate_csv(agg: &AggregatedCloud, projection: Projection) -> String {
    let (u, v) = projection.axes();
    let mut out = format!("x,y,z,{}_{u},{}_{v}\n", projection.name(), projection.name());
    for p in &agg.points {
        let (a, b) = projection.project(&p.pos());
        let _ = writeln!(out, "{},{},{},{a},{b}", p.x, p.y, p.z);
    }
    out
}

pub fn export_aggregate(agg: &AggregatedCloud, path: impl AsRef<Path>, projection: Projection) -> Result<()> {
    write_file(path.as_ref(), aggregate_csv(agg, projection).as_bytes())
}

/// Reads the canonical coordinates back from an exported CSV.
pub fn read_aggregate_csv(path: impl AsRef<Path>) -> Result<Vec<Vec3<f64>>> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut xyz = [0.0; 3];
        for (k, v) in xyz.iter_mut().enumerate() {
            *v = rec.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("column {} is not a number", k + 1),
            })?;
        }
        out.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(out)
}

pub fn aggregate_ply(agg: &AggregatedCloud) -> String {
    let mut out = format!(
        "ply\nformat ascii 1.0\ncomment {} targets, bucket {}\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        agg.source_targets,
        agg.bucket,
        agg.points.len()
    );
    for p in &agg.points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

pub fn export_ply(agg: &AggregatedCloud, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), aggregate_ply(agg).as_bytes())
}
