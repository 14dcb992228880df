//! `simgap` command-line front end.

mod commands;
mod config;
mod run_manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simgap::targets::Projection;
use simgap::{Error, RangeBucket, Result};

use crate::config::{AugmentMode, RunConfig};
use crate::run_manifest::{config_hash, file_sha256, InputFile, RunManifest, RUN_MANIFEST_FILE};

#[derive(Parser, Debug)]
#[command(name = "simgap", version, about = "Sim-to-real LiDAR dataset toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output root; results go to <DIR>/<subcommand>/ [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Root seed replacing every per-operation seed
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads [default: available cores]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Replay trajectories in a mesh scene and write a simulated dataset
    Sim(SimArgs),
    /// Apply range noise, random downsampling or distribution-matched downsampling
    Augment(AugmentArgs),
    /// Auto-label a recorded dataset from trajectories
    Label(LabelArgs),
    /// Dataset statistics, optionally side by side with a second dataset
    Stats(PairArgs),
    /// AP and recall of predictions per IoU threshold and range bucket
    Eval(EvalArgs),
    /// Chamfer and Earth Mover's distances between paired frames
    Distance(DistanceArgs),
    /// Aggregate canonical target points per range bucket
    Targets(TargetsArgs),
    /// Run the baseline detector on every frame
    Detect(DetectArgs),
    /// Re-run a subcommand from its run_manifest.json
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Track mesh (.obj or .stl)
    #[arg(long, value_name = "PATH")]
    static_mesh: Option<PathBuf>,
    /// Vehicle mesh in its box frame (.obj or .stl)
    #[arg(long, value_name = "PATH")]
    vehicle_mesh: Option<PathBuf>,
    /// Ego trajectory CSV
    #[arg(long, value_name = "PATH")]
    ego: Option<PathBuf>,
    /// Target trajectory CSV; repeat for every vehicle (replaces the configured list)
    #[arg(long = "trajectory", value_name = "PATH")]
    trajectories: Vec<PathBuf>,
    /// Recorded dataset whose frame ids and timestamps are reproduced
    #[arg(long, value_name = "DATASET")]
    schedule: Option<PathBuf>,
    /// Keep every N-th scheduled frame [default: 1]
    #[arg(long, value_name = "N")]
    stride: Option<usize>,
    /// Dataset name [default: sim]
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("mode").multiple(false)))]
struct AugmentArgs {
    /// Input dataset directory or manifest
    #[arg(long, value_name = "DATASET")]
    input: Option<PathBuf>,
    /// Gaussian range noise with the given sigma in meters [default: 0.02]
    #[arg(long, value_name = "SIGMA", num_args = 0..=1, default_missing_value = "0.02", group = "mode")]
    noise: Option<f64>,
    /// Uniform random downsampling with the given keep ratio [default: 0.8]
    #[arg(long, value_name = "RATIO", num_args = 0..=1, default_missing_value = "0.8", group = "mode")]
    downsample: Option<f64>,
    /// Range-matched downsampling against this recorded dataset
    #[arg(long, value_name = "REAL_DATASET", group = "mode")]
    matched: Option<PathBuf>,
    /// Radial bin width of the keep table in meters [default: 2]
    #[arg(long, value_name = "M")]
    bin_width: Option<f64>,
    /// Output dataset name [default: <input>_<mode>]
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Debug)]
struct LabelArgs {
    /// Recorded dataset directory or manifest
    #[arg(long, value_name = "DATASET")]
    input: Option<PathBuf>,
    /// Ego trajectory CSV
    #[arg(long, value_name = "PATH")]
    ego: Option<PathBuf>,
    /// Target trajectory CSV; repeat for every vehicle (replaces the configured list)
    #[arg(long = "trajectory", value_name = "PATH")]
    trajectories: Vec<PathBuf>,
    /// Seconds added to cloud timestamps before pose lookup [default: 0]
    #[arg(long, value_name = "S", allow_hyphen_values = true)]
    time_offset: Option<f64>,
    /// Half width of the shift search square in meters [default: 1.0]
    #[arg(long, value_name = "M")]
    search_radius: Option<f64>,
    /// Shift grid step in meters [default: 0.1]
    #[arg(long, value_name = "M")]
    step: Option<f64>,
    /// Shell thickness around the box in meters [default: 0.3]
    #[arg(long, value_name = "M")]
    shell_margin: Option<f64>,
    /// Weight of shell points in the score [default: 0.5]
    #[arg(long, value_name = "W")]
    shell_penalty: Option<f64>,
    /// Fewer inside points flag a box as low confidence [default: 5]
    #[arg(long, value_name = "N")]
    min_points: Option<usize>,
}

#[derive(Args, Debug)]
struct PairArgs {
    /// Dataset directory or manifest
    #[arg(long, value_name = "DATASET")]
    dataset: Option<PathBuf>,
    /// Second dataset for a side-by-side report
    #[arg(long, value_name = "DATASET")]
    compare: Option<PathBuf>,
    /// Cell size of the target location histograms in meters [default: 2]
    #[arg(long, value_name = "M")]
    location_cell: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Labeled dataset directory or manifest
    #[arg(long, value_name = "DATASET")]
    labels: Option<PathBuf>,
    /// Directory of <frame_id>.txt prediction files
    #[arg(long, value_name = "DIR")]
    predictions: Option<PathBuf>,
    /// IoU thresholds, comma separated [default: 0.5,0.7]
    #[arg(long, value_delimiter = ',', value_name = "T")]
    thresholds: Vec<f64>,
    /// Range buckets, comma separated [default: full,close,mid,long]
    #[arg(long, value_delimiter = ',', value_name = "B")]
    buckets: Vec<RangeBucket>,
}

#[derive(Args, Debug)]
struct DistanceArgs {
    /// First dataset (pairing and split reference)
    #[arg(long, value_name = "DATASET")]
    dataset: Option<PathBuf>,
    /// Second dataset
    #[arg(long, value_name = "DATASET")]
    compare: Option<PathBuf>,
    /// Points per cloud entering the EMD assignment [default: 1024]
    #[arg(long, value_name = "N")]
    emd_subsample: Option<usize>,
    /// Pair frames of every split instead of the training split only
    #[arg(long)]
    all_splits: bool,
}

#[derive(Args, Debug)]
struct TargetsArgs {
    /// Labeled dataset directory or manifest
    #[arg(long, value_name = "DATASET")]
    input: Option<PathBuf>,
    /// Range buckets, comma separated [default: close,mid,long]
    #[arg(long, value_delimiter = ',', value_name = "B")]
    buckets: Vec<RangeBucket>,
    /// Maximum points per aggregate [default: 20000]
    #[arg(long, value_name = "N")]
    cap: Option<usize>,
    /// Projections, comma separated [default: side,top,front,back]
    #[arg(long, value_delimiter = ',', value_name = "P")]
    projections: Vec<Projection>,
    /// Also write ASCII PLY files
    #[arg(long)]
    ply: bool,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Dataset directory or manifest
    #[arg(long, value_name = "DATASET")]
    input: Option<PathBuf>,
    /// Points below this height are ground when no plane fits [default: -0.3]
    #[arg(long, value_name = "M", allow_hyphen_values = true)]
    ground_z: Option<f64>,
    /// Clustering distance in meters [default: 0.7]
    #[arg(long, value_name = "M")]
    cluster_eps: Option<f64>,
    /// Smallest kept cluster [default: 10]
    #[arg(long, value_name = "N")]
    min_cluster: Option<usize>,
    /// Yaw hypotheses over [0, pi) [default: 36]
    #[arg(long, value_name = "N")]
    yaw_steps: Option<usize>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// run_manifest.json of the run to repeat
    manifest: PathBuf,
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, v: &Option<PathBuf>) {
    if let Some(v) = v {
        *slot = Some(absolute(v));
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sim(_) => "sim",
            Command::Augment(_) => "augment",
            Command::Label(_) => "label",
            Command::Stats(_) => "stats",
            Command::Eval(_) => "eval",
            Command::Distance(_) => "distance",
            Command::Targets(_) => "targets",
            Command::Detect(_) => "detect",
            Command::Replay(_) => "replay",
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Sim(a) => {
                let c = &mut cfg.sim;
                set_path(&mut c.static_mesh, &a.static_mesh);
                set_path(&mut c.vehicle_mesh, &a.vehicle_mesh);
                set_path(&mut c.ego_trajectory, &a.ego);
                if !a.trajectories.is_empty() {
                    c.trajectories = a.trajectories.iter().map(|p| absolute(p)).collect();
                }
                set_path(&mut c.schedule, &a.schedule);
                set(&mut c.stride, a.stride);
                set(&mut c.name, a.name.clone());
            }
            Command::Augment(a) => {
                let c = &mut cfg.augment;
                set_path(&mut c.input, &a.input);
                if let Some(s) = a.noise {
                    c.mode = Some(AugmentMode::Noise);
                    c.noise.sigma = s;
                }
                if let Some(r) = a.downsample {
                    c.mode = Some(AugmentMode::Downsample);
                    c.downsample.keep_ratio = r;
                }
                if a.matched.is_some() {
                    c.mode = Some(AugmentMode::Matched);
                    set_path(&mut c.matched.real, &a.matched);
                }
                set(&mut c.matched.bin_width, a.bin_width);
                if a.name.is_some() {
                    c.name = a.name.clone();
                }
            }
            Command::Label(a) => {
                let c = &mut cfg.label;
                set_path(&mut c.input, &a.input);
                set_path(&mut c.ego_trajectory, &a.ego);
                if !a.trajectories.is_empty() {
                    c.trajectories = a.trajectories.iter().map(|p| absolute(p)).collect();
                }
                set(&mut c.time_offset, a.time_offset);
                set(&mut c.refine.search_radius_xy, a.search_radius);
                set(&mut c.refine.step, a.step);
                set(&mut c.refine.shell_margin, a.shell_margin);
                set(&mut c.refine.shell_penalty, a.shell_penalty);
                set(&mut c.refine.min_points, a.min_points);
            }
            Command::Stats(a) => {
                let c = &mut cfg.stats;
                set_path(&mut c.dataset, &a.dataset);
                set_path(&mut c.compare, &a.compare);
                set(&mut c.location_cell, a.location_cell);
            }
            Command::Eval(a) => {
                let c = &mut cfg.eval;
                set_path(&mut c.labels, &a.labels);
                set_path(&mut c.predictions, &a.predictions);
                if !a.thresholds.is_empty() {
                    c.thresholds = a.thresholds.clone();
                }
                if !a.buckets.is_empty() {
                    c.buckets = a.buckets.clone();
                }
            }
            Command::Distance(a) => {
                let c = &mut cfg.distance;
                set_path(&mut c.dataset, &a.dataset);
                set_path(&mut c.compare, &a.compare);
                set(&mut c.emd_subsample, a.emd_subsample);
                if a.all_splits {
                    c.split = None;
                }
            }
            Command::Targets(a) => {
                let c = &mut cfg.targets;
                set_path(&mut c.input, &a.input);
                if !a.buckets.is_empty() {
                    c.buckets = a.buckets.clone();
                }
                set(&mut c.cap, a.cap);
                if !a.projections.is_empty() {
                    c.projections = a.projections.clone();
                }
                c.ply |= a.ply;
            }
            Command::Detect(a) => {
                let c = &mut cfg.detect;
                set_path(&mut c.input, &a.input);
                set(&mut c.detector.ground_z, a.ground_z);
                set(&mut c.detector.cluster_eps, a.cluster_eps);
                set(&mut c.detector.min_cluster, a.min_cluster);
                set(&mut c.detector.yaw_steps, a.yaw_steps);
            }
            Command::Replay(_) => {}
        }
    }
}

fn run_subcommand(name: &str, cfg: &RunConfig, out_dir: &Path) -> Result<commands::Outcome> {
    match name {
        "sim" => commands::sim(cfg, out_dir),
        "augment" => commands::augment(cfg, out_dir),
        "label" => commands::label(cfg, out_dir),
        "stats" => commands::stats(cfg, out_dir),
        "eval" => commands::eval(cfg, out_dir),
        "distance" => commands::distance(cfg, out_dir),
        "targets" => commands::targets(cfg, out_dir),
        "detect" => commands::detect(cfg, out_dir),
        other => Err(Error::Config(format!("unknown subcommand '{other}' in run manifest"))),
    }
}

fn resolve(cli: &Cli) -> Result<(String, RunConfig)> {
    if let Command::Replay(r) = &cli.command {
        let m = RunManifest::load(&r.manifest)?;
        m.check_inputs()?;
        let mut cfg = m.config;
        if let Some(out) = &cli.global.out {
            cfg.out = absolute(out);
        }
        return Ok((m.subcommand, cfg));
    }
    let mut cfg = match &cli.global.config {
        Some(p) => {
            let mut c = RunConfig::load(p)?;
            c.anchor_paths(&absolute(p.parent().unwrap_or(Path::new("."))));
            c
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.global.out {
        cfg.out = out.clone();
    }
    cfg.out = absolute(&cfg.out);
    if cli.global.seed.is_some() {
        cfg.seed = cli.global.seed;
    }
    cli.command.apply(&mut cfg);
    cfg.apply_root_seed();
    Ok((cli.command.name().to_string(), cfg))
}

fn run(cli: &Cli) -> Result<()> {
    let (name, cfg) = resolve(cli)?;
    let out_dir = cfg.out.join(&name);
    std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
        path: out_dir.clone(),
        source,
    })?;
    let mut outcome = run_subcommand(&name, &cfg, &out_dir)?;
    outcome.outputs.sort();
    outcome.outputs.dedup();
    let inputs = outcome
        .inputs
        .iter()
        .map(|p| {
            Ok(InputFile {
                path: absolute(p),
                sha256: file_sha256(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        tool: "simgap".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: name,
        config_hash: config_hash(&cfg),
        seeds: outcome.seeds,
        inputs,
        outputs: outcome.outputs,
        config: cfg,
    };
    manifest.save(&out_dir.join(RUN_MANIFEST_FILE))?;
    print!("{}", outcome.summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
