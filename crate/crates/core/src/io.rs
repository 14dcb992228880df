//! On-disk formats: binary clouds, label / prediction text files and trajectory CSV.
//!
//! * Clouds: consecutive 16-byte records of little-endian `f32` `x y z intensity`.
//! * Labels: one box per line, `vehicle_id cx cy cz l w h yaw` in the ego frame.
//! * Predictions: label lines with a trailing `confidence`.
//! * Trajectories: CSV with header `t,x,y,z,yaw,speed`; `speed` may be empty.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::{
    BoundingBox3D, FrameLabel, LabeledBox, Point3, PointCloud, Prediction, Trajectory, TrajectorySample, VehicleDims,
};
use crate::geometry::Vec3;
use crate::scalar::Real;

const RECORD_BYTES: usize = 16;

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn decode_point_cloud<T: Real>(bytes: &[u8], path: &Path) -> Result<PointCloud<T>> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        let offset = (bytes.len() / RECORD_BYTES * RECORD_BYTES) as u64;
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset,
            message: format!(
                "truncated record: {} trailing bytes, expected multiples of {RECORD_BYTES}",
                bytes.len() % RECORD_BYTES
            ),
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / RECORD_BYTES);
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let (x, y, z, intensity) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::Validation(format!(
                "{}: point {i} (byte offset {}) has a non-finite coordinate",
                path.display(),
                i * RECORD_BYTES
            )));
        }
        points.push(Point3 {
            x: T::from_f32_bits(x),
            y: T::from_f32_bits(y),
            z: T::from_f32_bits(z),
            intensity: Some(intensity),
        });
    }
    Ok(PointCloud {
        points,
        frame_id: stem(path),
        timestamp: None,
    })
}

pub fn encode_point_cloud<T: Real>(cloud: &PointCloud<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for p in &cloud.points {
        for v in [p.x.as_f32(), p.y.as_f32(), p.z.as_f32(), p.intensity.unwrap_or(0.0)] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Reads a binary cloud; the frame id is the file stem.
pub fn load_point_cloud<T: Real>(path: impl AsRef<Path>) -> Result<PointCloud<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_point_cloud(&bytes, path)
}

/// Writes a binary cloud. Coordinates are stored as `f32`; a missing intensity is written as 0.0.
pub fn save_point_cloud<T: Real>(cloud: &PointCloud<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &encode_point_cloud(cloud))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_fields<T: Real>(tokens: &[&str], path: &Path, line: usize) -> Result<Vec<T>> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<T>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("invalid number '{t}'"),
                })
        })
        .collect()
}

fn parse_box<T: Real>(v: &[T], path: &Path, line: usize) -> Result<BoundingBox3D<T>> {
    let dims = VehicleDims {
        length: v[3],
        width: v[4],
        height: v[5],
    };
    BoundingBox3D::new(Vec3::new(v[0], v[1], v[2]), dims, v[6]).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    })
}

fn write_box<T: Real>(out: &mut String, id: &str, b: &BoundingBox3D<T>) {
    let _ = write!(
        out,
        "{id} {} {} {} {} {} {} {}",
        b.center.x, b.center.y, b.center.z, b.dims.length, b.dims.width, b.dims.height, b.yaw
    );
}

pub fn parse_labels<T: Real>(text: &str, frame_id: &str, path: &Path) -> Result<FrameLabel<T>> {
    let mut label = FrameLabel::new(frame_id);
    for (i, raw) in text.lines().enumerate() {
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 8 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 8 fields, found {}", tokens.len()),
            });
        }
        let v = parse_fields::<T>(&tokens[1..], path, i + 1)?;
        label.boxes.push(LabeledBox {
            vehicle_id: tokens[0].to_string(),
            bbox: parse_box(&v, path, i + 1)?,
        });
    }
    Ok(label)
}

pub fn format_labels<T: Real>(label: &FrameLabel<T>) -> String {
    let mut out = String::new();
    for b in &label.boxes {
        write_box(&mut out, &b.vehicle_id, &b.bbox);
        out.push('\n');
    }
    out
}

pub fn load_labels<T: Real>(path: impl AsRef<Path>) -> Result<FrameLabel<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, &stem(path), path)
}

pub fn save_labels<T: Real>(label: &FrameLabel<T>, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), format_labels(label).as_bytes())
}

/// Class token written in the id column of prediction files.
pub const PREDICTION_CLASS: &str = "car";

pub fn parse_predictions<T: Real>(text: &str, frame_id: &str, path: &Path) -> Result<Vec<Prediction<T>>> {
    let mut preds = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 9 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 9 fields, found {}", tokens.len()),
            });
        }
        let v = parse_fields::<T>(&tokens[1..], path, i + 1)?;
        preds.push(Prediction {
            frame_id: frame_id.to_string(),
            bbox: parse_box(&v, path, i + 1)?,
            confidence: v[7],
        });
    }
    Ok(preds)
}

pub fn format_predictions<T: Real>(preds: &[Prediction<T>]) -> String {
    let mut out = String::new();
    for p in preds {
        write_box(&mut out, PREDICTION_CLASS, &p.bbox);
        let _ = writeln!(out, " {}", p.confidence);
    }
    out
}

pub fn load_predictions<T: Real>(path: impl AsRef<Path>) -> Result<Vec<Prediction<T>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, &stem(path), path)
}

pub fn save_predictions<T: Real>(preds: &[Prediction<T>], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), format_predictions(preds).as_bytes())
}

#[derive(Debug, serde::Deserialize, serde::Serialize)]
struct TrajectoryRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    yaw: f64,
    speed: Option<f64>,
}

/// Reads a trajectory CSV; the vehicle id is the file stem.
pub fn load_trajectory<T: Real>(path: impl AsRef<Path>) -> Result<Trajectory<T>> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let expected = ["t", "x", "y", "z", "yaw", "speed"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header '{}'", expected.join(",")),
        });
    }
    let mut samples = Vec::new();
    for (i, row) in reader.deserialize::<TrajectoryRow>().enumerate() {
        let r = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        samples.push(TrajectorySample {
            t: r.t,
            position: Vec3::from_f64(r.x, r.y, r.z),
            yaw: T::lit(r.yaw),
            speed: r.speed.map(T::lit),
        });
    }
    Trajectory::new(stem(path), samples)
}

pub fn save_trajectory<T: Real>(traj: &Trajectory<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    for s in &traj.samples {
        writer
            .serialize(TrajectoryRow {
                t: s.t,
                x: s.position.x.as_f64(),
                y: s.position.y.as_f64(),
                z: s.position.z.as_f64(),
                yaw: s.yaw.as_f64(),
                speed: s.speed.map(Real::as_f64),
            })
            .map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_file(path, &bytes)
}
