//! Subcommand implementations over a resolved [`RunConfig`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use simgap::autolabel::autolabel_dataset;
use simgap::detector::detect_dataset;
use simgap::effects::{augment_dataset, compute_keep_table, Effect};
use simgap::eval::evaluate;
use simgap::io::{load_predictions, load_trajectory, save_predictions};
use simgap::manifest::MANIFEST_FILE;
use simgap::sim::{
    build_scene, load_mesh, schedule_from_manifest, schedule_from_trajectory, simulate_dataset, TrajectorySet,
};
use simgap::similarity::dataset_distance;
use simgap::stats::{dataset_stats, location_histogram, pair_frames, StatsReport};
use simgap::targets::{aggregate, aggregate_csv, aggregate_ply};
use simgap::{DatasetManifest, Error, Result, Split};

use crate::config::{require, AugmentMode, RunConfig};

/// What a subcommand read, wrote and which seeds it drew from.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
    /// Human-readable summary for standard output.
    pub summary: String,
}

impl Outcome {
    fn write(&mut self, out_dir: &Path, rel: impl Into<PathBuf>, bytes: &[u8]) -> Result<()> {
        let rel = rel.into();
        let path = out_dir.join(&rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(&path, bytes).map_err(|source| Error::Io { path, source })?;
        self.outputs.push(rel);
        Ok(())
    }

    fn dataset_outputs(&mut self, m: &DatasetManifest) {
        for f in &m.frames {
            self.outputs.push(f.cloud.clone());
            if let Some(l) = &f.label {
                self.outputs.push(l.clone());
            }
        }
        self.outputs.push(PathBuf::from(MANIFEST_FILE));
    }
}

/// Accepts a dataset directory or its manifest file.
pub fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn open_dataset(p: &Path, outcome: &mut Outcome) -> Result<DatasetManifest> {
    let path = manifest_path(p);
    outcome.inputs.push(path.clone());
    DatasetManifest::load(path)
}

fn load_trajectories(ego: &Path, others: &[PathBuf], outcome: &mut Outcome) -> Result<TrajectorySet<f64>> {
    outcome.inputs.push(ego.to_path_buf());
    outcome.inputs.extend(others.iter().cloned());
    Ok(TrajectorySet {
        ego: load_trajectory(ego)?,
        others: others.iter().map(load_trajectory).collect::<Result<_>>()?,
    })
}

pub fn sim(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let c = &cfg.sim;
    let mut outcome = Outcome::default();
    let static_path = require(&c.static_mesh, "sim.static_mesh")?;
    let vehicle_path = require(&c.vehicle_mesh, "sim.vehicle_mesh")?;
    outcome.inputs.push(static_path.clone());
    outcome.inputs.push(vehicle_path.clone());
    c.label_dims.validate()?;
    c.rig.validate()?;
    let scene =
        build_scene(load_mesh::<f64>(static_path)?, load_mesh::<f64>(vehicle_path)?)?.with_label_dims(c.label_dims);
    let set = load_trajectories(
        require(&c.ego_trajectory, "sim.ego_trajectory")?,
        &c.trajectories,
        &mut outcome,
    )?;
    let schedule = match &c.schedule {
        Some(p) => schedule_from_manifest(&open_dataset(p, &mut outcome)?)?,
        None => schedule_from_trajectory(&set.ego),
    };
    info!(
        "simulating {} of {} scheduled frames",
        schedule.len().div_ceil(c.stride.max(1)),
        schedule.len()
    );
    let m = simulate_dataset(&scene, &set, &c.rig, &schedule, c.stride, out_dir, &c.name)?;
    outcome.dataset_outputs(&m);
    outcome.summary = format!("simulated {} frames into {}\n", m.frames.len(), out_dir.display());
    Ok(outcome)
}

pub fn augment(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let c = &cfg.augment;
    let mut outcome = Outcome::default();
    let mode = c
        .mode
        .ok_or_else(|| Error::Config("augment needs one of --noise, --downsample or --matched".into()))?;
    let input = open_dataset(require(&c.input, "augment.input")?, &mut outcome)?;
    let effect = match mode {
        AugmentMode::Noise => {
            outcome.seeds.insert("noise".into(), c.noise.seed);
            Effect::Noise(c.noise)
        }
        AugmentMode::Downsample => {
            outcome.seeds.insert("downsample".into(), c.downsample.seed);
            Effect::Downsample(c.downsample)
        }
        AugmentMode::Matched => {
            let real = open_dataset(require(&c.matched.real, "augment.matched.real")?, &mut outcome)?;
            let table = compute_keep_table(&real, &input, c.matched.bin_width)?;
            outcome.write(out_dir, "keep_table.csv", table.to_csv().as_bytes())?;
            outcome.seeds.insert("matched".into(), c.matched.seed);
            Effect::Matched {
                table,
                seed: c.matched.seed,
            }
        }
    };
    let mode_name = match mode {
        AugmentMode::Noise => "noise",
        AugmentMode::Downsample => "downsample",
        AugmentMode::Matched => "matched",
    };
    let name = c.name.clone().unwrap_or_else(|| format!("{}_{mode_name}", input.name));
    let m = augment_dataset(&input, &effect, out_dir, &name)?;
    outcome.dataset_outputs(&m);
    outcome.summary = format!("wrote {} {mode_name} frames to {}\n", m.frames.len(), out_dir.display());
    Ok(outcome)
}

pub fn label(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let c = &cfg.label;
    let mut outcome = Outcome::default();
    let input = open_dataset(require(&c.input, "label.input")?, &mut outcome)?;
    let set = load_trajectories(
        require(&c.ego_trajectory, "label.ego_trajectory")?,
        &c.trajectories,
        &mut outcome,
    )?;
    let result = autolabel_dataset(&input, &set, c.dims, &c.refine, c.time_offset)?;
    let m = result.save(&input, out_dir)?;
    for f in &m.frames {
        if let Some(l) = &f.label {
            outcome.outputs.push(l.clone());
        }
    }
    outcome.outputs.push(PathBuf::from(simgap::autolabel::REFINE_LOG_FILE));
    outcome.outputs.push(PathBuf::from(MANIFEST_FILE));
    let mut errors = String::from("frame_id,error\n");
    for (id, e) in &result.errors {
        let _ = writeln!(errors, "{id},\"{}\"", e.replace('"', "'"));
    }
    outcome.write(out_dir, "errors.csv", errors.as_bytes())?;
    let flagged = result.log.iter().filter(|r| r.low_confidence).count();
    outcome.summary = format!(
        "labeled {} frames ({} targets, {} low confidence), {} frames skipped\n",
        result.labels.len(),
        result.log.len(),
        flagged,
        result.errors.len()
    );
    Ok(outcome)
}

fn train_locations(m: &DatasetManifest, cell: f64) -> Result<String> {
    let labels = m
        .frames_in(Split::Train)
        .map(|e| m.load_label::<f64>(e))
        .collect::<Result<Vec<_>>>()?;
    Ok(location_histogram(labels.iter().flat_map(|l| &l.boxes), cell)?.to_csv())
}

pub fn stats(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let c = &cfg.stats;
    let mut outcome = Outcome::default();
    let a = open_dataset(require(&c.dataset, "stats.dataset")?, &mut outcome)?;
    let sa = dataset_stats(&a);
    outcome.write(
        out_dir,
        "locations_dataset.csv",
        train_locations(&a, c.location_cell)?.as_bytes(),
    )?;
    match &c.compare {
        Some(p) => {
            let b = open_dataset(p, &mut outcome)?;
            let sb = dataset_stats(&b);
            outcome.write(
                out_dir,
                "locations_compare.csv",
                train_locations(&b, c.location_cell)?.as_bytes(),
            )?;
            let report = StatsReport::new(sa, sb, &pair_frames(&a, &b)?);
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            outcome.write(out_dir, "stats.json", json.as_bytes())?;
            outcome.summary = report.to_text();
        }
        None => {
            let json = serde_json::to_string_pretty(&sa).expect("stats serialize") + "\n";
            outcome.write(out_dir, "stats.json", json.as_bytes())?;
            outcome.summary = format!("{}: {} train frames, {} targets\n", sa.name, sa.frames, sa.targets);
        }
    }
    let summary = outcome.summary.clone();
    outcome.write(out_dir, "stats.txt", summary.as_bytes())?;
    Ok(outcome)
}

pub fn eval(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let c = &cfg.eval;
    let mut outcome = Outcome::default();
    let labels_m = open_dataset(require(&c.labels, "eval.labels")?, &mut outcome)?;
    let pred_dir = require(&c.predictions, "eval.predictions")?;
    let labels = labels_m
        .frames
        .iter()
        .filter(|e| e.label.is_some())
        .map(|e| labels_m.load_label::<f64>(e))
        .collect::<Result<Vec<_>>>()?;
    let mut preds = BTreeMap::new();
    let entries = std::fs::read_dir(pred_dir).map_err(|source| Error::Io {
        path: pred_dir.clone(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    for f in files {
        let id = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        preds.insert(id, load_predictions::<f64>(&f)?);
    }
    let report = evaluate(&preds, &labels, &c.thresholds, &c.buckets)?;
    outcome.write(out_dir, "eval.csv", report.to_csv().as_bytes())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    outcome.write(out_dir, "eval.json", json.as_bytes())?;
    outcome.summary = report.to_text();
    let summary = outcome.summary.clone();
    outcome.write(out_dir, "eval.txt", summary.as_bytes())?;
    Ok(outcome)
}

pub fn distance(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let c = &cfg.distance;
    let mut outcome = Outcome::default();
    let a = open_dataset(require(&c.dataset, "distance.dataset")?, &mut outcome)?;
    let b = open_dataset(require(&c.compare, "distance.compare")?, &mut outcome)?;
    outcome.seeds.insert("emd_subsample".into(), c.seed);
    let report = dataset_distance(&a, &b, &c.params())?;
    outcome.write(out_dir, "distance.csv", report.to_csv().as_bytes())?;
    outcome.write(out_dir, "distance.json", report.summary_json().as_bytes())?;
    outcome.summary = report.to_text();
    Ok(outcome)
}

pub fn targets(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let c = &cfg.targets;
    let mut outcome = Outcome::default();
    let m = open_dataset(require(&c.input, "targets.input")?, &mut outcome)?;
    outcome.seeds.insert("aggregate".into(), c.seed);
    let mut summary = Vec::new();
    for &bucket in &c.buckets {
        let agg = aggregate(&m, bucket, c.cap_for(bucket), c.seed)?;
        for &proj in &c.projections {
            let rel = format!("targets_{bucket}_{}.csv", proj.name());
            outcome.write(out_dir, rel, aggregate_csv(&agg, proj).as_bytes())?;
        }
        if c.ply {
            outcome.write(out_dir, format!("targets_{bucket}.ply"), aggregate_ply(&agg).as_bytes())?;
        }
        summary.push(serde_json::json!({
            "bucket": bucket,
            "points": agg.points.len(),
            "total_points": agg.total_points,
            "targets": agg.source_targets,
            "frames": agg.source_frames,
        }));
    }
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    outcome.write(out_dir, "targets.json", json.as_bytes())?;
    outcome.summary = json;
    Ok(outcome)
}

pub fn detect(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let c = &cfg.detect;
    let mut outcome = Outcome::default();
    let m = open_dataset(require(&c.input, "detect.input")?, &mut outcome)?;
    let all = detect_dataset(&m, &c.detector)?;
    let mut n = 0;
    for (id, preds) in &all {
        let rel = Path::new("predictions").join(format!("{id}.txt"));
        save_predictions(preds, out_dir.join(&rel))?;
        outcome.outputs.push(rel);
        n += preds.len();
    }
    outcome.summary = format!("{n} detections in {} frames\n", all.len());
    Ok(outcome)
}
