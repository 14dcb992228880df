//! JSON run configuration. Every section has defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simgap::autolabel::RefineConfig;
use simgap::detector::DetectorConfig;
use simgap::effects::{DownsampleConfig, NoiseConfig};
use simgap::frame::VehicleDims;
use simgap::sim::SensorRig;
use simgap::similarity::DistanceConfig;
use simgap::targets::{Projection, DEFAULT_CAP};
use simgap::{Error, RangeBucket, Result, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; when set it replaces every per-section seed.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub sim: SimConfig,
    pub augment: AugmentConfig,
    pub label: LabelConfig,
    pub stats: StatsConfig,
    pub eval: EvalConfig,
    pub distance: DistanceSection,
    pub targets: TargetsConfig,
    pub detect: DetectConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: PathBuf::from("out"),
            sim: SimConfig::default(),
            augment: AugmentConfig::default(),
            label: LabelConfig::default(),
            stats: StatsConfig::default(),
            eval: EvalConfig::default(),
            distance: DistanceSection::default(),
            targets: TargetsConfig::default(),
            detect: DetectConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub static_mesh: Option<PathBuf>,
    pub vehicle_mesh: Option<PathBuf>,
    pub ego_trajectory: Option<PathBuf>,
    pub trajectories: Vec<PathBuf>,
    /// Recorded dataset whose frame ids and timestamps are replayed.
    pub schedule: Option<PathBuf>,
    pub stride: usize,
    pub name: String,
    pub rig: SensorRig,
    pub label_dims: VehicleDims<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            static_mesh: None,
            vehicle_mesh: None,
            ego_trajectory: None,
            trajectories: Vec::new(),
            schedule: None,
            stride: 1,
            name: "sim".into(),
            rig: SensorRig::default(),
            label_dims: VehicleDims::race_car(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    Noise,
    Downsample,
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchedConfig {
    /// Recorded dataset the keep table is estimated against.
    pub real: Option<PathBuf>,
    pub bin_width: f64,
    pub seed: u64,
}

impl Default for MatchedConfig {
    fn default() -> Self {
        Self {
            real: None,
            bin_width: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub input: Option<PathBuf>,
    pub mode: Option<AugmentMode>,
    pub name: Option<String>,
    pub noise: NoiseConfig,
    pub downsample: DownsampleConfig,
    pub matched: MatchedConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    pub input: Option<PathBuf>,
    pub ego_trajectory: Option<PathBuf>,
    pub trajectories: Vec<PathBuf>,
    pub dims: VehicleDims<f64>,
    pub refine: RefineConfig,
    /// Added to cloud timestamps before sampling the trajectories, seconds.
    pub time_offset: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            input: None,
            ego_trajectory: None,
            trajectories: Vec::new(),
            dims: VehicleDims::race_car(),
            refine: RefineConfig::default(),
            time_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub dataset: Option<PathBuf>,
    pub compare: Option<PathBuf>,
    pub location_cell: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            compare: None,
            location_cell: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub labels: Option<PathBuf>,
    /// Directory of `<frame_id>.txt` prediction files.
    pub predictions: Option<PathBuf>,
    pub thresholds: Vec<f64>,
    pub buckets: Vec<RangeBucket>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            labels: None,
            predictions: None,
            thresholds: simgap::eval::DEFAULT_THRESHOLDS.to_vec(),
            buckets: RangeBucket::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceSection {
    pub dataset: Option<PathBuf>,
    pub compare: Option<PathBuf>,
    pub emd_subsample: usize,
    pub seed: u64,
    /// Split of `dataset` whose frames are paired; `null` pairs every frame.
    pub split: Option<Split>,
}

impl Default for DistanceSection {
    fn default() -> Self {
        let d = DistanceConfig::default();
        Self {
            dataset: None,
            compare: None,
            emd_subsample: d.emd_subsample,
            seed: d.seed,
            split: d.split,
        }
    }
}

impl DistanceSection {
    pub fn params(&self) -> DistanceConfig {
        DistanceConfig {
            emd_subsample: self.emd_subsample,
            seed: self.seed,
            split: self.split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetsConfig {
    pub input: Option<PathBuf>,
    pub buckets: Vec<RangeBucket>,
    pub cap: usize,
    /// Per-bucket caps that replace `cap`.
    pub caps: Vec<(RangeBucket, usize)>,
    pub projections: Vec<Projection>,
    pub ply: bool,
    pub seed: u64,
}

impl Default for TargetsConfig {
    fn default() -> Self {
        Self {
            input: None,
            buckets: RangeBucket::SECTIONS.to_vec(),
            cap: DEFAULT_CAP,
            caps: Vec::new(),
            projections: Projection::ALL.to_vec(),
            ply: false,
            seed: 0,
        }
    }
}

impl TargetsConfig {
    pub fn cap_for(&self, bucket: RangeBucket) -> usize {
        self.caps
            .iter()
            .rev()
            .find(|(b, _)| *b == bucket)
            .map_or(self.cap, |(_, c)| *c)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectConfig {
    pub input: Option<PathBuf>,
    pub detector: DetectorConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Relative input paths are taken relative to `base`.
    pub fn anchor_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.out);
        fix_opt(&mut self.sim.static_mesh);
        fix_opt(&mut self.sim.vehicle_mesh);
        fix_opt(&mut self.sim.ego_trajectory);
        self.sim.trajectories.iter_mut().for_each(fix);
        fix_opt(&mut self.sim.schedule);
        fix_opt(&mut self.augment.input);
        fix_opt(&mut self.augment.matched.real);
        fix_opt(&mut self.label.input);
        fix_opt(&mut self.label.ego_trajectory);
        self.label.trajectories.iter_mut().for_each(fix);
        fix_opt(&mut self.stats.dataset);
        fix_opt(&mut self.stats.compare);
        fix_opt(&mut self.eval.labels);
        fix_opt(&mut self.eval.predictions);
        fix_opt(&mut self.distance.dataset);
        fix_opt(&mut self.distance.compare);
        fix_opt(&mut self.targets.input);
        fix_opt(&mut self.detect.input);
    }

    /// Writes the root seed, if any, into every seeded section.
    pub fn apply_root_seed(&mut self) {
        if let Some(s) = self.seed {
            self.augment.noise.seed = s;
            self.augment.downsample.seed = s;
            self.augment.matched.seed = s;
            self.distance.seed = s;
            self.targets.seed = s;
        }
    }
}

pub fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("missing required setting '{key}'")))
}
