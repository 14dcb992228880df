//! Sensor-effect models applied to clean simulated scans.
//!
//! Every operation draws from a stream derived from `(seed, operation, frame_id)`,
//! so augmenting a dataset is reproducible frame by frame.

use std::path::Path;

use log::warn;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{PointCloud, DETECTION_RANGE};
use crate::geometry::Vec3;
use crate::manifest::DatasetManifest;
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::scalar::Real;
use crate::stats::pair_frames;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Standard deviation of the range error, meters.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma: 0.02, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DownsampleConfig {
    pub keep_ratio: f64,
    pub seed: u64,
}

impl Default for DownsampleConfig {
    fn default() -> Self {
        Self {
            keep_ratio: 0.8,
            seed: 0,
        }
    }
}

fn op_rng(seed: u64, op: &str, frame_id: &str) -> Rng {
    rng_from_seed(derive_seed(seed, &format!("{op}/{frame_id}")))
}

/// Moves every point along its ray by `δ ~ N(0, σ²)`.
///
/// Points at the origin keep their position (the ray direction is undefined);
/// points pushed behind the sensor are dropped.
pub fn apply_range_noise<T: Real>(cloud: &PointCloud<T>, cfg: &NoiseConfig, origin: Vec3<T>) -> Result<PointCloud<T>> {
    if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {}", cfg.sigma)));
    }
    if cfg.sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let mut rng = op_rng(cfg.seed, "noise", &cloud.frame_id);
    let mut at_origin = 0usize;
    let mut points = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        let z: f64 = rng.sample(StandardNormal);
        let delta = T::lit(z * cfg.sigma);
        let offset = p.pos() - origin;
        let range = offset.norm();
        if range == T::zero() {
            at_origin += 1;
            points.push(*p);
            continue;
        }
        if range + delta < T::zero() {
            continue;
        }
        let dir = offset * (T::one() / range);
        points.push(p.moved_to(p.pos() + dir * delta));
    }
    if at_origin > 0 {
        warn!(
            "frame {}: {at_origin} point(s) at the sensor origin left without noise",
            cloud.frame_id
        );
    }
    Ok(PointCloud {
        points,
        frame_id: cloud.frame_id.clone(),
        timestamp: cloud.timestamp,
    })
}

/// Keeps each point independently with probability `keep_ratio`.
pub fn downsample_random<T: Real>(cloud: &PointCloud<T>, cfg: &DownsampleConfig) -> Result<PointCloud<T>> {
    if !(0.0..=1.0).contains(&cfg.keep_ratio) {
        return Err(Error::Config(format!(
            "keep_ratio must lie in [0, 1], got {}",
            cfg.keep_ratio
        )));
    }
    let mut rng = op_rng(cfg.seed, "downsample", &cloud.frame_id);
    Ok(cloud.filtered(|_| rng.random::<f64>() < cfg.keep_ratio))
}

/// Per-range-bin survival probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeepProbabilityTable {
    pub bin_width: f64,
    pub p_keep: Vec<f64>,
}

impl KeepProbabilityTable {
    /// Bins needed to cover `[0, DETECTION_RANGE]` at `bin_width`.
    pub fn bin_count(bin_width: f64) -> usize {
        (DETECTION_RANGE / bin_width).ceil() as usize
    }

    pub fn uniform(bin_width: f64, p: f64) -> Result<Self> {
        check_bin_width(bin_width)?;
        Ok(Self {
            bin_width,
            p_keep: vec![p; Self::bin_count(bin_width)],
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_bin_width(self.bin_width)?;
        if self.p_keep.len() < Self::bin_count(self.bin_width) {
            return Err(Error::Validation(format!(
                "keep table with {} bins does not cover {DETECTION_RANGE} m",
                self.p_keep.len()
            )));
        }
        if let Some(p) = self.p_keep.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Validation(format!("keep probability {p} outside [0, 1]")));
        }
        Ok(())
    }

    /// Bin of a range; ranges past the last bin clamp into it.
    pub fn bin_of(&self, range: f64) -> usize {
        ((range / self.bin_width).floor().max(0.0) as usize).min(self.p_keep.len() - 1)
    }

    pub fn probability(&self, range: f64) -> f64 {
        self.p_keep[self.bin_of(range)]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,p_keep\n");
        for (i, p) in self.p_keep.iter().enumerate() {
            let lo = i as f64 * self.bin_width;
            out.push_str(&format!("{lo},{},{p}\n", lo + self.bin_width));
        }
        out
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let headers = reader.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["bin_lo", "bin_hi", "p_keep"] {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "expected header 'bin_lo,bin_hi,p_keep'".into(),
            });
        }
        let rows: Vec<(f64, f64, f64)> = reader
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err)?;
        let Some(first) = rows.first() else {
            return Err(Error::Validation("keep table has no rows".into()));
        };
        let table = Self {
            bin_width: first.1 - first.0,
            p_keep: rows.iter().map(|r| r.2).collect(),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_file(path.as_ref(), self.to_csv().as_bytes())
    }
}

fn check_bin_width(w: f64) -> Result<()> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("bin width must be positive, got {w}")))
    }
}

/// Range of a point from the ego origin.
#[inline]
fn point_range<T: Real>(p: Vec3<T>) -> f64 {
    p.norm().as_f64()
}

/// Point counts per range bin; the last bin absorbs everything beyond it.
pub fn range_histogram<T: Real>(cloud: &PointCloud<T>, bin_width: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for p in &cloud.points {
        let b = ((point_range(p.pos()) / bin_width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// `p_keep(b) = min(1, real(b) / sim(b))`, and 1 where the simulated bin is empty.
pub fn keep_table_from_counts(real: &[u64], sim: &[u64], bin_width: f64) -> Result<KeepProbabilityTable> {
    check_bin_width(bin_width)?;
    if real.len() != sim.len() {
        return Err(Error::Validation("histograms differ in bin count".into()));
    }
    let p_keep = real
        .iter()
        .zip(sim)
        .map(|(&r, &s)| if s == 0 { 1.0 } else { (r as f64 / s as f64).min(1.0) })
        .collect();
    let table = KeepProbabilityTable { bin_width, p_keep };
    table.validate()?;
    Ok(table)
}

fn add_counts(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    a
}

/// Keep table from the range distributions of paired recorded and simulated frames.
pub fn compute_keep_table(
    real: &DatasetManifest,
    sim: &DatasetManifest,
    bin_width: f64,
) -> Result<KeepProbabilityTable> {
    check_bin_width(bin_width)?;
    let pairing = pair_frames(real, sim)?;
    let bins = KeepProbabilityTable::bin_count(bin_width);
    let (real_counts, sim_counts) = pairing
        .pairs
        .par_iter()
        .map(|pair| {
            let r = real.load_cloud::<f64>(&real.frames[pair.a_index])?;
            let s = sim.load_cloud::<f64>(&sim.frames[pair.b_index])?;
            Ok((
                range_histogram(&r, bin_width, bins),
                range_histogram(&s, bin_width, bins),
            ))
        })
        .try_reduce(
            || (vec![0; bins], vec![0; bins]),
            |a, b| Ok((add_counts(a.0, b.0), add_counts(a.1, b.1))),
        )?;
    keep_table_from_counts(&real_counts, &sim_counts, bin_width)
}

/// Keeps each point with the probability of its range bin.
pub fn downsample_matched<T: Real>(
    cloud: &PointCloud<T>,
    table: &KeepProbabilityTable,
    seed: u64,
) -> Result<PointCloud<T>> {
    table.validate()?;
    let mut rng = op_rng(seed, "matched", &cloud.frame_id);
    Ok(cloud.filtered(|p| rng.random::<f64>() < table.probability(point_range(p.pos()))))
}

/// One effect applied to every frame of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Noise(NoiseConfig),
    Downsample(DownsampleConfig),
    Matched { table: KeepProbabilityTable, seed: u64 },
}

impl Effect {
    pub fn apply<T: Real>(&self, cloud: &PointCloud<T>) -> Result<PointCloud<T>> {
        match self {
            Effect::Noise(cfg) => apply_range_noise(cloud, cfg, Vec3::zero()),
            Effect::Downsample(cfg) => downsample_random(cloud, cfg),
            Effect::Matched { table, seed } => downsample_matched(cloud, table, *seed),
        }
    }
}

/// Writes `clouds/<id>.bin` with the effect applied, copies labels to `labels/<id>.txt`
/// and saves a manifest with the source frame ids, timestamps and splits.
pub fn augment_dataset(src: &DatasetManifest, effect: &Effect, out_dir: &Path, name: &str) -> Result<DatasetManifest> {
    let entries = src
        .frames
        .par_iter()
        .map(|e| {
            let cloud = effect.apply(&src.load_cloud::<f64>(e)?)?;
            let cloud_rel = Path::new("clouds").join(format!("{}.bin", e.frame_id));
            crate::io::save_point_cloud(&cloud, out_dir.join(&cloud_rel))?;
            let label_rel = match &e.label {
                Some(_) => {
                    let rel = Path::new("labels").join(format!("{}.txt", e.frame_id));
                    crate::io::save_labels(&src.load_label::<f64>(e)?, out_dir.join(&rel))?;
                    Some(rel)
                }
                None => None,
            };
            let mut entry = e.clone();
            entry.cloud = cloud_rel;
            entry.label = label_rel;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = DatasetManifest::new(name, out_dir);
    manifest.split_ratios = src.split_ratios;
    manifest.frames = entries;
    manifest.save(out_dir.join(crate::manifest::MANIFEST_FILE))?;
    Ok(manifest)
}
