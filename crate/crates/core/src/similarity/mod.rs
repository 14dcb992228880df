//! Point-set distances between paired frames: Chamfer and Earth Mover's.

pub mod assignment;
pub mod kdtree;

use std::fmt::Write as _;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::PointCloud;
use crate::geometry::Vec3;
use crate::manifest::{DatasetManifest, Split};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Real;
use crate::stats::pair_frames;

pub use assignment::{min_cost_assignment, min_cost_exhaustive};
pub use kdtree::{nearest_brute_force, KdTree};

/// Label written next to every CD value.
pub const CD_CONVENTION: &str = "sum_squared";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceConfig {
    pub emd_subsample: usize,
    pub seed: u64,
    /// Restricts the pairing to frames of this split in the first dataset; `None` uses all.
    pub split: Option<Split>,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            emd_subsample: 1024,
            seed: 0,
            split: Some(Split::Train),
        }
    }
}

impl DistanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.emd_subsample == 0 {
            return Err(Error::Config("emd_subsample must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_non_empty<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<()> {
    for (side, c) in [("first", a), ("second", b)] {
        if c.is_empty() {
            return Err(Error::Validation(format!("{side} cloud '{}' is empty", c.frame_id)));
        }
    }
    Ok(())
}

fn one_sided<T: Real>(from: &[Vec3<T>], to: &KdTree<T>) -> f64 {
    from.iter().map(|p| to.nearest(p).unwrap().1.as_f64()).sum()
}

/// `Σ_a min_b ‖p−q‖² + Σ_b min_a ‖p−q‖²`, in m².
pub fn chamfer_distance<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<f64> {
    check_non_empty(a, b)?;
    let pa = a.positions();
    let pb = b.positions();
    let (ta, tb) = rayon::join(|| KdTree::build(&pa), || KdTree::build(&pb));
    let (fwd, bwd) = rayon::join(|| one_sided(&pa, &tb), || one_sided(&pb, &ta));
    Ok(fwd + bwd)
}

/// Same as [`chamfer_distance`] by exhaustive search.
pub fn chamfer_distance_brute_force<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<f64> {
    check_non_empty(a, b)?;
    let pa = a.positions();
    let pb = b.positions();
    let side = |from: &[Vec3<T>], to: &[Vec3<T>]| -> f64 {
        from.iter()
            .map(|p| nearest_brute_force(to, p).unwrap().1.as_f64())
            .sum()
    };
    Ok(side(&pa, &pb) + side(&pb, &pa))
}

fn subsample<T: Real>(cloud: &PointCloud<T>, n: usize, seed: u64) -> Vec<Vec3<T>> {
    let pts = cloud.positions();
    if n >= pts.len() {
        return pts;
    }
    // keyed by the cloud alone so that swapping the arguments reuses the same subsets
    let key = format!("emd/{}/{}", cloud.frame_id, pts.len());
    let mut rng = rng_from_seed(derive_seed(seed, &key));
    let mut idx = sample(&mut rng, pts.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pts[i]).collect()
}

/// Mean matched distance of an exact minimum-cost assignment between equal-size point sets.
pub fn emd_exact<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<f64> {
    let n = a.len();
    if n != b.len() || n == 0 {
        return Err(Error::Validation(format!(
            "assignment needs equal non-empty sets, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let cost: Vec<f64> = a
        .iter()
        .flat_map(|p| b.iter().map(move |q| (*p - *q).norm().as_f64()))
        .collect();
    let assign = min_cost_assignment(&cost, n)?;
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(total / n as f64)
}

/// EMD on seeded subsamples of size `min(emd_subsample, |a|, |b|)`, in meters.
pub fn earth_movers_distance<T: Real>(a: &PointCloud<T>, b: &PointCloud<T>, cfg: &DistanceConfig) -> Result<f64> {
    cfg.validate()?;
    check_non_empty(a, b)?;
    let n = cfg.emd_subsample.min(a.len()).min(b.len());
    emd_exact(&subsample(a, n, cfg.seed), &subsample(b, n, cfg.seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDistance {
    pub frame_id: String,
    pub cd: f64,
    pub emd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub domain_a: String,
    pub domain_b: String,
    pub frames: Vec<FrameDistance>,
    pub cd_mean: f64,
    pub cd_std: f64,
    pub emd_mean: f64,
    pub emd_std: f64,
}

/// Population mean and standard deviation.
fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Serialize)]
struct Summary<'a> {
    domain_a: &'a str,
    domain_b: &'a str,
    frames: usize,
    cd_convention: &'a str,
    cd: f64,
    cd_std: f64,
    emd: f64,
    emd_std: f64,
}

impl DistanceReport {
    pub fn from_frames(domain_a: &str, domain_b: &str, frames: Vec<FrameDistance>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Validation("no frame pairs to measure".into()));
        }
        let (cd_mean, cd_std) = mean_std(frames.iter().map(|f| f.cd));
        let (emd_mean, emd_std) = mean_std(frames.iter().map(|f| f.emd));
        Ok(Self {
            domain_a: domain_a.into(),
            domain_b: domain_b.into(),
            frames,
            cd_mean,
            cd_std,
            emd_mean,
            emd_std,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_id,cd,emd\n");
        for f in &self.frames {
            let _ = writeln!(out, "{},{},{}", f.frame_id, f.cd, f.emd);
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let s = Summary {
            domain_a: &self.domain_a,
            domain_b: &self.domain_b,
            frames: self.frames.len(),
            cd_convention: CD_CONVENTION,
            cd: self.cd_mean,
            cd_std: self.cd_std,
            emd: self.emd_mean,
            emd_std: self.emd_std,
        };
        serde_json::to_string_pretty(&s).expect("summary serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        format!(
            "{:<16} {:<16} {:>16} {:>10}\n{:<16} {:<16} {:>16.3} {:>10.3}\n",
            "Domain A",
            "Domain B",
            "CD (sum sq, m2)",
            "EMD (m)",
            self.domain_a,
            self.domain_b,
            self.cd_mean,
            self.emd_mean
        )
    }
}

/// CD and EMD for every frame pair shared by two datasets.
pub fn dataset_distance(
    real: &DatasetManifest,
    other: &DatasetManifest,
    cfg: &DistanceConfig,
) -> Result<DistanceReport> {
    cfg.validate()?;
    let pairing = pair_frames(real, other)?;
    let pairs: Vec<_> = pairing
        .pairs
        .iter()
        .filter(|p| cfg.split.is_none_or(|s| real.frames[p.a_index].split == s))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Validation(format!(
            "no paired frames in split {:?} between '{}' and '{}'",
            cfg.split, real.name, other.name
        )));
    }
    let frames = pairs
        .par_iter()
        .map(|p| {
            let a = real.load_cloud::<f64>(&real.frames[p.a_index])?;
            let b = other.load_cloud::<f64>(&other.frames[p.b_index])?;
            Ok(FrameDistance {
                frame_id: p.frame_id.clone(),
                cd: chamfer_distance(&a, &b)?,
                emd: earth_movers_distance(&a, &b, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DistanceReport::from_frames(&real.name, &other.name, frames)
}
