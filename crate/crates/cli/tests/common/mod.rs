#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use simgap::frame::{Trajectory, TrajectorySample, VehicleDims};
use simgap::io::save_trajectory;
use simgap::sim::mesh::encode_stl;
use simgap::sim::TriangleMesh;
use simgap::Vec3;

pub const TRACK_RADIUS: f64 = 60.0;
pub const SPEED: f64 = 20.0;

pub fn simgap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simgap"))
}

pub fn run(args: &[&str]) -> Output {
    simgap().args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "simgap {args:?} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Counter-clockwise lap, `lead` meters of arc ahead of the ego start.
pub fn circle(id: &str, radius: f64, lead: f64, z: f64, duration: f64, rate: f64) -> Trajectory<f64> {
    let n = (duration * rate).round() as usize + 1;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let a = (lead + SPEED * t) / TRACK_RADIUS;
            TrajectorySample::new(
                t,
                Vec3::new(radius * a.cos(), radius * a.sin(), z),
                a + std::f64::consts::FRAC_PI_2,
            )
        })
        .collect();
    Trajectory::new(id, samples).unwrap()
}

/// Input files of a small scene: track, vehicle and trajectories.
pub struct Fixture {
    pub dir: PathBuf,
    pub track: PathBuf,
    pub vehicle: PathBuf,
    pub ego: PathBuf,
    pub targets: Vec<PathBuf>,
}

/// Ground sits half a meter under the vehicles so it never enters a label box.
pub fn write_fixture(dir: &Path, frames: usize) -> Fixture {
    let dims = VehicleDims::<f64>::race_car();
    let duration = (frames - 1) as f64 / 10.0;
    let track = dir.join("track.stl");
    let vehicle = dir.join("vehicle.stl");
    std::fs::write(&track, encode_stl(&TriangleMesh::ground(300.0, -0.5))).unwrap();
    std::fs::write(&vehicle, encode_stl(&TriangleMesh::cuboid(dims))).unwrap();
    let ego = dir.join("ego.csv");
    save_trajectory(&circle("ego", TRACK_RADIUS, 0.0, 1.0, duration, 10.0), &ego).unwrap();
    let z = dims.height * 0.5;
    let mut targets = Vec::new();
    for (id, r, lead) in [("car1", 56.0, 14.0), ("car2", 63.0, 38.0), ("car3", 64.0, -25.0)] {
        let p = dir.join(format!("{id}.csv"));
        save_trajectory(&circle(id, r, lead, z, duration, 10.0), &p).unwrap();
        targets.push(p);
    }
    Fixture {
        dir: dir.to_path_buf(),
        track,
        vehicle,
        ego,
        targets,
    }
}

pub fn sim_args<'a>(f: &'a Fixture, out: &'a Path) -> Vec<&'a str> {
    let mut args = vec![
        "--out",
        s(out),
        "sim",
        "--static-mesh",
        s(&f.track),
        "--vehicle-mesh",
        s(&f.vehicle),
        "--ego",
        s(&f.ego),
    ];
    for t in &f.targets {
        args.push("--trajectory");
        args.push(s(t));
    }
    args
}

/// Every file under `dir`, keyed by relative path.
pub fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                acc.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(dir, dir, &mut acc);
    acc
}

/// Replays `out/<sub>/run_manifest.json` into a fresh root and compares every output byte for byte.
/// Returns the names of differing files.
pub fn replay_diff(out: &Path, sub: &str, fresh: &Path) -> Vec<PathBuf> {
    let manifest = out.join(sub).join("run_manifest.json");
    run_ok(&["--out", s(fresh), "replay", s(&manifest)]);
    let a = read_tree(&out.join(sub));
    let b = read_tree(&fresh.join(sub));
    let mut diff: Vec<PathBuf> = a
        .keys()
        .chain(b.keys())
        .filter(|k| k.as_os_str() != "run_manifest.json")
        .filter(|k| a.get(*k) != b.get(*k))
        .cloned()
        .collect();
    diff.dedup();
    diff
}
