//! Paired statistical comparison of two datasets.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FrameLabel, LabeledBox, PointCloud, RangeBucket, DETECTION_RANGE};
use crate::manifest::{DatasetManifest, Split};
use crate::scalar::Real;
use crate::transform::{bucket_of, points_in_box};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePair {
    pub frame_id: String,
    pub a_index: usize,
    pub b_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    /// Sorted by frame id.
    pub pairs: Vec<FramePair>,
    pub unmatched_a: Vec<String>,
    pub unmatched_b: Vec<String>,
}

fn preview(ids: &[String]) -> String {
    let shown: Vec<&str> = ids.iter().take(5).map(String::as_str).collect();
    let more = if ids.len() > 5 {
        format!(" … (+{})", ids.len() - 5)
    } else {
        String::new()
    };
    format!("[{}]{more}", shown.join(", "))
}

/// Matches frames of two datasets by frame id.
pub fn pair_frames(a: &DatasetManifest, b: &DatasetManifest) -> Result<Pairing> {
    let index_a: BTreeMap<&str, usize> = a
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| (f.frame_id.as_str(), i))
        .collect();
    let index_b: BTreeMap<&str, usize> = b
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| (f.frame_id.as_str(), i))
        .collect();
    let pairs: Vec<FramePair> = index_a
        .iter()
        .filter_map(|(id, &ia)| {
            index_b.get(id).map(|&ib| FramePair {
                frame_id: id.to_string(),
                a_index: ia,
                b_index: ib,
            })
        })
        .collect();
    let unmatched_a: Vec<String> = index_a
        .keys()
        .filter(|k| !index_b.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    let unmatched_b: Vec<String> = index_b
        .keys()
        .filter(|k| !index_a.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    if pairs.is_empty() {
        return Err(Error::Validation(format!(
            "no common frame ids between '{}' {} and '{}' {}",
            a.name,
            preview(&unmatched_a),
            b.name,
            preview(&unmatched_b)
        )));
    }
    Ok(Pairing {
        pairs,
        unmatched_a,
        unmatched_b,
    })
}

/// Mean, minimum and maximum of a quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    sum: f64,
    n: u64,
    min: f64,
    max: f64,
}

impl Acc {
    fn push(&mut self, v: f64) {
        if self.n == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.sum += v;
        self.n += 1;
    }

    fn merge(&mut self, o: &Acc) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        self.sum += o.sum;
        self.n += o.n;
        self.min = self.min.min(o.min);
        self.max = self.max.max(o.max);
    }

    fn triple(&self) -> Option<Triple> {
        (self.n > 0).then(|| Triple {
            mean: self.sum / self.n as f64,
            min: self.min,
            max: self.max,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisTriples {
    pub x: Triple,
    pub y: Triple,
    pub z: Triple,
}

/// Per-dataset quantities of the general comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub frames: usize,
    pub targets: usize,
    pub coordinates: Option<AxisTriples>,
    pub points_per_cloud: Option<Triple>,
    pub points_per_target: Option<Triple>,
    /// Frames that could not be read, with the reason.
    pub excluded: Vec<(String, String)>,
}

struct FrameAcc {
    frame_id: String,
    axes: [Acc; 3],
    cloud_size: u64,
    in_box: Vec<u64>,
}

/// Only points with |x| ≤ 100 m and |y| ≤ 100 m enter the statistics.
pub fn crop_to_range<T: Real>(cloud: &PointCloud<T>) -> PointCloud<T> {
    let r = T::lit(DETECTION_RANGE);
    cloud.filtered(|p| p.x.abs() <= r && p.y.abs() <= r)
}

fn frame_acc<T: Real>(cloud: &PointCloud<T>, label: &FrameLabel<T>) -> FrameAcc {
    let cropped = crop_to_range(cloud);
    let mut axes = [Acc::default(); 3];
    for p in &cropped.points {
        axes[0].push(p.x.as_f64());
        axes[1].push(p.y.as_f64());
        axes[2].push(p.z.as_f64());
    }
    let in_box = label
        .in_range()
        .map(|b| points_in_box(&cropped, &b.bbox).len() as u64)
        .collect();
    FrameAcc {
        frame_id: cloud.frame_id.clone(),
        axes,
        cloud_size: cropped.len() as u64,
        in_box,
    }
}

fn reduce(name: &str, mut frames: Vec<FrameAcc>, excluded: Vec<(String, String)>) -> DatasetStats {
    // fixed reduction order keeps floating sums independent of input order
    frames.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    let mut axes = [Acc::default(); 3];
    let mut sizes = Acc::default();
    let mut targets = Acc::default();
    for f in &frames {
        for (acc, fa) in axes.iter_mut().zip(&f.axes) {
            acc.merge(fa);
        }
        sizes.push(f.cloud_size as f64);
        for &c in &f.in_box {
            targets.push(c as f64);
        }
    }
    let coordinates = match (axes[0].triple(), axes[1].triple(), axes[2].triple()) {
        (Some(x), Some(y), Some(z)) => Some(AxisTriples { x, y, z }),
        _ => None,
    };
    DatasetStats {
        name: name.to_string(),
        frames: frames.len(),
        targets: targets.n as usize,
        coordinates,
        points_per_cloud: sizes.triple(),
        points_per_target: targets.triple(),
        excluded,
    }
}

/// Statistics over in-memory frames.
pub fn stats_from_frames<T: Real>(name: &str, frames: &[(PointCloud<T>, FrameLabel<T>)]) -> DatasetStats {
    let accs = frames.par_iter().map(|(c, l)| frame_acc(c, l)).collect();
    reduce(name, accs, Vec::new())
}

/// Statistics over the training split of a manifest; unreadable frames are excluded and listed.
pub fn dataset_stats(manifest: &DatasetManifest) -> DatasetStats {
    let entries: Vec<_> = manifest.frames_in(Split::Train).collect();
    let results: Vec<std::result::Result<FrameAcc, (String, String)>> = entries
        .par_iter()
        .map(|e| {
            let load = || -> Result<FrameAcc> {
                let cloud = manifest.load_cloud::<f64>(e)?;
                let label = manifest.load_label::<f64>(e)?;
                Ok(frame_acc(&cloud, &label))
            };
            load().map_err(|err| (e.frame_id.clone(), err.to_string()))
        })
        .collect();
    let mut accs = Vec::new();
    let mut excluded = Vec::new();
    for r in results {
        match r {
            Ok(a) => accs.push(a),
            Err(e) => excluded.push(e),
        }
    }
    excluded.sort();
    reduce(&manifest.name, accs, excluded)
}

/// Side-by-side statistics of two datasets plus their pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub a: DatasetStats,
    pub b: DatasetStats,
    pub frames_matched: usize,
    pub frames_unmatched_a: usize,
    pub frames_unmatched_b: usize,
    /// Mean points per target box of `a` over that of `b`.
    pub in_box_ratio: Option<f64>,
}

pub fn in_box_ratio(mean_a: f64, mean_b: f64) -> Option<f64> {
    (mean_b > 0.0).then(|| mean_a / mean_b)
}

impl StatsReport {
    pub fn new(a: DatasetStats, b: DatasetStats, pairing: &Pairing) -> Self {
        let ratio = match (a.points_per_target, b.points_per_target) {
            (Some(ta), Some(tb)) => in_box_ratio(ta.mean, tb.mean),
            _ => None,
        };
        Self {
            a,
            b,
            frames_matched: pairing.pairs.len(),
            frames_unmatched_a: pairing.unmatched_a.len(),
            frames_unmatched_b: pairing.unmatched_b.len(),
            in_box_ratio: ratio,
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            a: self.b.clone(),
            b: self.a.clone(),
            frames_matched: self.frames_matched,
            frames_unmatched_a: self.frames_unmatched_b,
            frames_unmatched_b: self.frames_unmatched_a,
            in_box_ratio: match (self.a.points_per_target, self.b.points_per_target) {
                (Some(ta), Some(tb)) => in_box_ratio(tb.mean, ta.mean),
                _ => None,
            },
        }
    }

    /// Aligned text table in the layout of the general comparison table.
    pub fn to_text(&self) -> String {
        let fmt1 = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}"));
        let fmt0 = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.0}"));
        let mut rows: Vec<(String, String, String)> = Vec::new();
        for (stat, pick) in [
            ("mean", (|t: Triple| t.mean) as fn(Triple) -> f64),
            ("min", |t: Triple| t.min),
            ("max", |t: Triple| t.max),
        ] {
            for axis in ["x", "y", "z"] {
                let get = |s: &DatasetStats| {
                    s.coordinates.map(|c| {
                        pick(match axis {
                            "x" => c.x,
                            "y" => c.y,
                            _ => c.z,
                        })
                    })
                };
                rows.push((
                    format!("Point cloud range [m]   {stat:<4} {axis}"),
                    fmt1(get(&self.a)),
                    fmt1(get(&self.b)),
                ));
            }
        }
        for (title, get) in [
            (
                "Points per point cloud",
                (|s: &DatasetStats| s.points_per_cloud) as fn(&DatasetStats) -> Option<Triple>,
            ),
            ("Points per target box ", |s: &DatasetStats| s.points_per_target),
        ] {
            for (stat, pick) in [
                ("mean", (|t: Triple| t.mean) as fn(Triple) -> f64),
                ("min", |t: Triple| t.min),
                ("max", |t: Triple| t.max),
            ] {
                rows.push((
                    format!("{title}  {stat:<4}  "),
                    fmt0(get(&self.a).map(pick)),
                    fmt0(get(&self.b).map(pick)),
                ));
            }
        }
        let wa = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(self.a.name.len());
        let wb = rows.iter().map(|r| r.2.len()).max().unwrap_or(0).max(self.b.name.len());
        let wl = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<wl$}  {:>wa$}  {:>wb$}", "Attribute", self.a.name, self.b.name);
        let _ = writeln!(out, "{}", "-".repeat(wl + wa + wb + 4));
        for (l, a, b) in &rows {
            let _ = writeln!(out, "{l:<wl$}  {a:>wa$}  {b:>wb$}");
        }
        let _ = writeln!(out, "{}", "-".repeat(wl + wa + wb + 4));
        let _ = writeln!(
            out,
            "Frames: {} / {} (train split), paired {}, unmatched {} / {}",
            self.a.frames, self.b.frames, self.frames_matched, self.frames_unmatched_a, self.frames_unmatched_b
        );
        if let (Some(r), Some(ta), Some(tb)) = (self.in_box_ratio, self.a.points_per_target, self.b.points_per_target) {
            let _ = writeln!(out, "{}", ratio_line(ta.mean, tb.mean, r));
        }
        out
    }
}

/// `mean_a/mean_b ≈ N%` diagnostic line.
pub fn ratio_line(mean_a: f64, mean_b: f64, ratio: f64) -> String {
    format!(
        "Mean points per target box ratio: {mean_a:.0}/{mean_b:.0} ≈ {:.0}%",
        ratio * 100.0
    )
}

/// Target center counts on a square grid over x, y ∈ [−100, 100] m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationHistogram {
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `counts[iy * nx + ix]`.
    pub counts: Vec<u64>,
    pub x_marginal: Vec<u64>,
    pub y_marginal: Vec<u64>,
    /// Targets binned into the grid.
    pub total: u64,
    /// Targets whose center lies outside the grid.
    pub outside: u64,
}

impl LocationHistogram {
    pub fn cell(&self, ix: usize, iy: usize) -> u64 {
        self.counts[iy * self.nx + ix]
    }

    pub fn lower_edge(&self, i: usize) -> f64 {
        -DETECTION_RANGE + i as f64 * self.cell_size
    }

    /// Matrix CSV: first column the lower y edge, one column per x cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y_lo");
        for ix in 0..self.nx {
            let _ = write!(out, ",{}", self.lower_edge(ix));
        }
        out.push('\n');
        for iy in 0..self.ny {
            let _ = write!(out, "{}", self.lower_edge(iy));
            for ix in 0..self.nx {
                let _ = write!(out, ",{}", self.cell(ix, iy));
            }
            out.push('\n');
        }
        out
    }
}

pub fn location_histogram<'a, T: Real>(
    boxes: impl IntoIterator<Item = &'a LabeledBox<T>>,
    cell_size: f64,
) -> Result<LocationHistogram> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::Config(format!("cell size must be positive, got {cell_size}")));
    }
    let n = ((2.0 * DETECTION_RANGE) / cell_size).ceil() as usize;
    let mut h = LocationHistogram {
        cell_size,
        nx: n,
        ny: n,
        counts: vec![0; n * n],
        x_marginal: vec![0; n],
        y_marginal: vec![0; n],
        total: 0,
        outside: 0,
    };
    let index = |v: f64| (((v + DETECTION_RANGE) / cell_size).floor() as usize).min(n - 1);
    for b in boxes {
        let (x, y) = (b.bbox.center.x.as_f64(), b.bbox.center.y.as_f64());
        if x.abs() > DETECTION_RANGE || y.abs() > DETECTION_RANGE {
            h.outside += 1;
            continue;
        }
        let (ix, iy) = (index(x), index(y));
        h.counts[iy * n + ix] += 1;
        h.total += 1;
    }
    for iy in 0..n {
        for ix in 0..n {
            let c = h.counts[iy * n + ix];
            h.x_marginal[ix] += c;
            h.y_marginal[iy] += c;
        }
    }
    Ok(h)
}

/// Targets partitioned by range bucket; targets beyond the detection range are listed apart.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BucketedTargets<T> {
    pub close: Vec<(String, LabeledBox<T>)>,
    pub mid: Vec<(String, LabeledBox<T>)>,
    pub long: Vec<(String, LabeledBox<T>)>,
    pub out_of_range: Vec<(String, LabeledBox<T>)>,
}

impl<T: Real> BucketedTargets<T> {
    pub fn get(&self, bucket: RangeBucket) -> Vec<&(String, LabeledBox<T>)> {
        match bucket {
            RangeBucket::Close => self.close.iter().collect(),
            RangeBucket::Mid => self.mid.iter().collect(),
            RangeBucket::Long => self.long.iter().collect(),
            RangeBucket::Full => self.close.iter().chain(&self.mid).chain(&self.long).collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.close.len() + self.mid.len() + self.long.len() + self.out_of_range.len()
    }
}

pub fn bucketize_targets<'a, T: Real>(labels: impl IntoIterator<Item = &'a FrameLabel<T>>) -> BucketedTargets<T> {
    let mut out = BucketedTargets {
        close: Vec::new(),
        mid: Vec::new(),
        long: Vec::new(),
        out_of_range: Vec::new(),
    };
    for label in labels {
        for b in &label.boxes {
            let entry = (label.frame_id.clone(), b.clone());
            match bucket_of(&b.bbox) {
                Ok(RangeBucket::Close) => out.close.push(entry),
                Ok(RangeBucket::Mid) => out.mid.push(entry),
                Ok(_) => out.long.push(entry),
                Err(_) => out.out_of_range.push(entry),
            }
        }
    }
    out
}
