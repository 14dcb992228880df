//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::f64::consts::{FRAC_PI_4, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use simgap::autolabel::{label_cloud, RefineConfig};
use simgap::detector::{detect, DetectorConfig};
use simgap::effects::{
    apply_range_noise, downsample_matched, downsample_random, keep_table_from_counts, range_histogram,
    DownsampleConfig, KeepProbabilityTable, NoiseConfig,
};
use simgap::eval::{average_precision_40, iou3d, FrameDetections};
use simgap::frame::{
    BoundingBox3D, FrameLabel, Point3, PointCloud, Prediction, Trajectory, TrajectorySample, VehicleDims,
};
use simgap::sim::bvh::intersect_triangle;
use simgap::sim::{
    build_scene, generate_rays_ego, simulate_frames, Bvh, Ray, ScheduledFrame, SensorRig, TrajectorySet, TriangleMesh,
};
use simgap::similarity::{chamfer_distance, earth_movers_distance, emd_exact, DistanceConfig};
use simgap::stats::{in_box_ratio, ratio_line, stats_from_frames, DatasetStats, StatsReport, Triple};
use simgap::Vec3;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn boxed(c: [f64; 3], d: [f64; 3], yaw: f64) -> BoundingBox3D<f64> {
    BoundingBox3D::new(
        Vec3::new(c[0], c[1], c[2]),
        VehicleDims::new(d[0], d[1], d[2]).unwrap(),
        yaw,
    )
    .unwrap()
}

fn inside(b: &BoundingBox3D<f64>, p: Vec3<f64>) -> bool {
    let d = p - b.center;
    let (s, c) = b.yaw.sin_cos();
    let lx = c * d.x + s * d.y;
    let ly = -s * d.x + c * d.y;
    lx.abs() <= b.dims.length / 2.0 && ly.abs() <= b.dims.width / 2.0 && d.z.abs() <= b.dims.height / 2.0
}

/// IoU estimated from uniform samples inside `a`.
fn iou_monte_carlo(a: &BoundingBox3D<f64>, b: &BoundingBox3D<f64>, samples: usize, seed: u64) -> f64 {
    let chunks = 16;
    let per = samples / chunks;
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut r = rng(seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let (s, c) = a.yaw.sin_cos();
            (0..per)
                .filter(|_| {
                    let u = (r.random::<f64>() - 0.5) * a.dims.length;
                    let v = (r.random::<f64>() - 0.5) * a.dims.width;
                    let w = (r.random::<f64>() - 0.5) * a.dims.height;
                    let p = a.center + Vec3::new(c * u - s * v, s * u + c * v, w);
                    inside(b, p)
                })
                .count()
        })
        .sum();
    let va = a.dims.length * a.dims.width * a.dims.height;
    let vb = b.dims.length * b.dims.width * b.dims.height;
    let inter = va * hits as f64 / (per * chunks) as f64;
    inter / (va + vb - inter)
}

fn random_pair(r: &mut ChaCha8Rng) -> (BoundingBox3D<f64>, BoundingBox3D<f64>) {
    let dims = [
        r.random_range(1.0..6.0),
        r.random_range(1.0..3.0),
        r.random_range(0.8..2.0),
    ];
    let a = boxed(
        [r.random_range(-20.0..20.0), r.random_range(-20.0..20.0), 0.0],
        dims,
        r.random_range(-PI..PI),
    );
    let scale = r.random_range(0.8..1.25);
    let b = boxed(
        [
            a.center.x + r.random_range(-0.6..0.6) * dims[0],
            a.center.y + r.random_range(-0.6..0.6) * dims[1],
            r.random_range(-0.5..0.5) * dims[2],
        ],
        [dims[0] * scale, dims[1] * r.random_range(0.8..1.25), dims[2] * scale],
        a.yaw + r.random_range(-PI..PI),
    );
    let va = a.volume();
    if b.volume() < va {
        (b, a)
    } else {
        (a, b)
    }
}

fn criterion_iou() -> Outcome {
    let a = boxed([0.0; 3], [4.0, 2.0, 1.5], 0.3);
    ensure((iou3d(&a, &a) - 1.0).abs() <= 1e-6, || "identical boxes".into())?;
    let far = boxed([10.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.3);
    ensure(iou3d(&a, &far).abs() <= 1e-6, || "disjoint boxes".into())?;
    let a0 = boxed([0.0; 3], [4.0, 2.0, 1.5], 0.0);
    let half = boxed([2.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0);
    let third = iou3d(&a0, &half);
    ensure((third - 1.0 / 3.0).abs() <= 1e-6, || {
        format!("half-length shift gave {third}")
    })?;
    let sq = boxed([0.0; 3], [1.0, 1.0, 1.0], 0.0);
    let rot = boxed([0.0; 3], [1.0, 1.0, 1.0], FRAC_PI_4);
    let oct = 2.0 * (2f64.sqrt() - 1.0);
    let exact = oct / (2.0 - oct);
    let got = iou3d(&sq, &rot);
    let mc = iou_monte_carlo(&sq, &rot, 10_000_000, 45);
    ensure((got - exact).abs() <= 1e-3 && (got - mc).abs() <= 1e-3, || {
        format!("45° square {got} vs closed form {exact} and Monte Carlo {mc}")
    })?;

    let mut r = rng(1);
    let pairs: Vec<_> = (0..500).map(|_| random_pair(&mut r)).collect();
    let errors: Vec<f64> = pairs
        .iter()
        .enumerate()
        .map(|(i, (a, b))| (iou3d(a, b) - iou_monte_carlo(a, b, 1_000_000, 1000 + i as u64)).abs())
        .collect();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    let overlapping = pairs.iter().filter(|(a, b)| iou3d(a, b) > 0.0).count();
    ensure(worst <= 5e-3, || format!("max |iou3d - MC| = {worst:.2e}"))?;
    Ok(format!(
        "500 pairs ({overlapping} overlapping), max |iou3d - MC| = {worst:.1e}, 45° case {got:.6}"
    ))
}

fn pred(frame: &str, b: BoundingBox3D<f64>, confidence: f64) -> Prediction<f64> {
    Prediction {
        frame_id: frame.into(),
        bbox: b,
        confidence,
    }
}

fn criterion_ap() -> Outcome {
    let g = boxed([10.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0);
    let miss = boxed([40.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0);
    let single = vec![FrameDetections {
        preds: vec![pred("a", g, 0.9)],
        gts: vec![g],
    }];
    let fp_first = vec![FrameDetections {
        preds: vec![pred("a", miss, 0.95), pred("a", g, 0.9)],
        gts: vec![g],
    }];
    let g2 = boxed([-15.0, 3.0, 0.0], [4.0, 2.0, 1.5], 1.0);
    let one_missed = vec![FrameDetections {
        preds: vec![pred("a", g, 0.9)],
        gts: vec![g, g2],
    }];
    for (name, frames, want) in [
        ("single TP", &single, 100.0),
        ("FP then TP", &fp_first, 50.0),
        ("one FN", &one_missed, 50.0),
    ] {
        let got = average_precision_40(frames, 0.7).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{name}: AP {got} != {want}"))?;
    }

    let mut r = rng(2);
    let mut gaps = Vec::new();
    for set in 0..100 {
        let frames: Vec<FrameDetections<f64>> = (0..r.random_range(1..6))
            .map(|f| {
                let fid = format!("{set}/{f}");
                let gts: Vec<_> = (0..r.random_range(1..6))
                    .map(|_| {
                        boxed(
                            [r.random_range(-60.0..60.0), r.random_range(-60.0..60.0), 0.0],
                            [4.6, 2.0, 1.2],
                            r.random_range(-PI..PI),
                        )
                    })
                    .collect();
                let mut preds = Vec::new();
                for b in &gts {
                    if r.random::<f64>() >= 0.85 {
                        continue;
                    }
                    let j = r.random_range(0.01..0.5);
                    let moved = boxed(
                        [
                            b.center.x + r.random_range(-j..j),
                            b.center.y + r.random_range(-j..j),
                            0.0,
                        ],
                        [4.6, 2.0, 1.2],
                        b.yaw + r.random_range(-0.2..0.2),
                    );
                    preds.push(pred(&fid, moved, r.random()));
                }
                for _ in 0..r.random_range(0..3) {
                    let b = boxed(
                        [r.random_range(-60.0..60.0), r.random_range(-60.0..60.0), 0.0],
                        [4.6, 2.0, 1.2],
                        0.0,
                    );
                    preds.push(pred(&fid, b, r.random()));
                }
                FrameDetections { preds, gts }
            })
            .collect();
        let lo = average_precision_40(&frames, 0.5).map_err(|e| e.to_string())?;
        let hi = average_precision_40(&frames, 0.7).map_err(|e| e.to_string())?;
        ensure(lo >= hi, || format!("set {set}: AP(0.5) {lo} < AP(0.7) {hi}"))?;
        gaps.push(lo - hi);
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    Ok(format!(
        "hand fixtures exact; AP(0.5) >= AP(0.7) on 100 sets (mean gap {mean_gap:.1} points)"
    ))
}

fn heap_permutations_min(cost: &[f64], n: usize) -> f64 {
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>();
    let mut best = total(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

fn random_points(r: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<Vec3<f64>> {
    (0..n)
        .map(|_| {
            Vec3::new(
                r.random_range(-extent..extent),
                r.random_range(-extent..extent),
                r.random_range(-extent..extent),
            )
        })
        .collect()
}

fn chamfer_oracle(a: &[Vec3<f64>], b: &[Vec3<f64>]) -> f64 {
    let side = |x: &[Vec3<f64>], y: &[Vec3<f64>]| {
        x.iter()
            .map(|p| y.iter().map(|q| (*p - *q).norm_sq()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
    };
    side(a, b) + side(b, a)
}

fn criterion_emd_cd() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = r.random_range(1..=8);
        let a = random_points(&mut r, n, 5.0);
        let b = random_points(&mut r, n, 5.0);
        let cost: Vec<f64> = a.iter().flat_map(|p| b.iter().map(move |q| (*p - *q).norm())).collect();
        let oracle = heap_permutations_min(&cost, n) / n as f64;
        let got = emd_exact(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle).abs());
    }
    ensure(worst <= 1e-9, || format!("EMD vs exhaustive max error {worst:.2e}"))?;
    for (k, (na, nb)) in [(1, 1), (10, 2000), (2000, 2000), (1500, 37), (999, 1000)]
        .into_iter()
        .enumerate()
    {
        let a = random_points(&mut r, na, 30.0);
        let mut b = random_points(&mut r, nb, 30.0);
        if k == 4 {
            // duplicates and exact ties
            b[..500].copy_from_slice(&a[..500]);
        }
        let ca = PointCloud::from_positions("a", a.iter().copied());
        let cb = PointCloud::from_positions("a", b.iter().copied());
        let got = chamfer_distance(&ca, &cb).map_err(|e| e.to_string())?;
        let want = chamfer_oracle(&a, &b);
        ensure(got == want, || {
            format!("CD {na}x{nb}: k-d tree {got} != brute force {want}")
        })?;
    }
    Ok(format!(
        "200 EMD sets, max error {worst:.1e}; CD k-d tree bit-identical on 5 clouds up to 2000 points"
    ))
}

fn criterion_noise() -> Outcome {
    let mut r = rng(4);
    let pts: Vec<Vec3<f64>> = (0..100_000)
        .map(|_| {
            let az = r.random_range(-PI..PI);
            let el = r.random_range(-0.3..0.3f64);
            let range = r.random_range(2.0..100.0);
            Vec3::new(
                range * el.cos() * az.cos(),
                range * el.cos() * az.sin(),
                range * el.sin(),
            )
        })
        .collect();
    let cloud = PointCloud::from_positions("noise", pts.iter().copied());
    let noisy =
        apply_range_noise(&cloud, &NoiseConfig { sigma: 0.02, seed: 4 }, Vec3::zero()).map_err(|e| e.to_string())?;
    ensure(noisy.len() == cloud.len(), || "points dropped".into())?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut cross_max = 0.0f64;
    for (p, q) in pts.iter().zip(&noisy.points) {
        let u = p.normalized();
        let d = q.pos() - *p;
        let radial = d.dot(u);
        sum += radial;
        sum_sq += radial * radial;
        cross_max = cross_max.max((d - u * radial).norm());
    }
    let n = pts.len() as f64;
    let mean = sum / n;
    let sigma = (sum_sq / n - mean * mean).sqrt();
    ensure((0.019..=0.021).contains(&sigma), || format!("empirical sigma {sigma}"))?;
    ensure(cross_max <= 1e-12, || format!("cross-ray displacement {cross_max:.2e}"))?;
    Ok(format!(
        "sigma {sigma:.5} m over 1e5 points, max cross-ray {cross_max:.1e} m"
    ))
}

fn shell_points(r: &mut ChaCha8Rng, counts: &[u64], bin_width: f64) -> Vec<Vec3<f64>> {
    let mut pts = Vec::new();
    for (b, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            let az = r.random_range(-PI..PI);
            let el = r.random_range(-0.2..0.2f64);
            let range = (b as f64 + r.random_range(0.02..0.98)) * bin_width;
            pts.push(Vec3::new(
                range * el.cos() * az.cos(),
                range * el.cos() * az.sin(),
                range * el.sin(),
            ));
        }
    }
    pts
}

fn criterion_downsample() -> Outcome {
    let mut r = rng(5);
    let cloud = PointCloud::from_positions("ds", random_points(&mut r, 100_000, 50.0));
    let kept = downsample_random(
        &cloud,
        &DownsampleConfig {
            keep_ratio: 0.8,
            seed: 5,
        },
    )
    .map_err(|e| e.to_string())?
    .len();
    ensure((79_200..=80_800).contains(&kept), || format!("kept {kept} of 100000"))?;

    let bin_width = 2.0;
    let bins = KeepProbabilityTable::bin_count(bin_width);
    let mut worst_z = 0.0f64;
    for fixture in 0..3u64 {
        let sim_counts: Vec<u64> = (0..bins).map(|b| 1500 + 80 * ((b as u64 * 7 + fixture) % 11)).collect();
        let real_counts: Vec<u64> = (0..bins)
            .map(|b| match (b + fixture as usize) % 4 {
                0 => sim_counts[b] + 300,
                _ => (sim_counts[b] as f64 * (-(b as f64) / 20.0).exp() * 0.9) as u64,
            })
            .collect();
        let sim = PointCloud::from_positions(format!("{fixture:06}"), shell_points(&mut r, &sim_counts, bin_width));
        let real = PointCloud::from_positions(format!("{fixture:06}"), shell_points(&mut r, &real_counts, bin_width));
        let hs = range_histogram(&sim, bin_width, bins);
        let hr = range_histogram(&real, bin_width, bins);
        ensure(hs == sim_counts && hr == real_counts, || {
            "fixture histogram construction".into()
        })?;
        let table = keep_table_from_counts(&hr, &hs, bin_width).map_err(|e| e.to_string())?;
        let matched = downsample_matched(&sim, &table, 50 + fixture).map_err(|e| e.to_string())?;
        let hm = range_histogram(&matched, bin_width, bins);
        for b in 0..bins {
            let n = hs[b] as f64;
            let p = table.p_keep[b];
            let target = hr[b].min(hs[b]) as f64;
            let expect = n * p;
            ensure((expect - target).abs() < 1e-6, || {
                format!("bin {b}: expected {expect} vs real {target}")
            })?;
            let sd = (n * p * (1.0 - p)).sqrt();
            let dev = (hm[b] as f64 - expect).abs();
            if sd == 0.0 {
                ensure(dev == 0.0, || {
                    format!("fixture {fixture} bin {b}: {} kept, {expect} expected", hm[b])
                })?;
            } else {
                ensure(dev <= 4.0 * sd, || {
                    format!("fixture {fixture} bin {b}: {} kept, {expect:.1} ± {sd:.1}", hm[b])
                })?;
                worst_z = worst_z.max(dev / sd);
            }
        }
    }
    Ok(format!(
        "kept {kept}/100000 at 0.8; matched bins within {worst_z:.2} sigma over 3 fixtures x {bins} bins"
    ))
}

fn random_mesh(r: &mut ChaCha8Rng, triangles: usize) -> TriangleMesh<f64> {
    let mut vertices = Vec::new();
    let mut tris = Vec::new();
    for i in 0..triangles {
        let c = Vec3::new(
            r.random_range(-10.0..10.0),
            r.random_range(-10.0..10.0),
            r.random_range(-10.0..10.0),
        );
        for _ in 0..3 {
            vertices.push(
                c + Vec3::new(
                    r.random_range(-1.5..1.5),
                    r.random_range(-1.5..1.5),
                    r.random_range(-1.5..1.5),
                ),
            );
        }
        let k = 3 * i as u32;
        tris.push([k, k + 1, k + 2]);
    }
    TriangleMesh::new(vertices, tris).unwrap()
}

fn nearest_by_scan(mesh: &TriangleMesh<f64>, ray: &Ray<f64>, t_max: f64) -> Option<(f64, u32)> {
    let mut best: Option<(f64, u32)> = None;
    for i in 0..mesh.len() {
        if let Some(t) = intersect_triangle(ray, &mesh.corners(i), 0.0, t_max) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i as u32));
            }
        }
    }
    best
}

fn criterion_simulator() -> Outcome {
    let mut r = rng(6);
    let mut hits = 0;
    for m in 0..10 {
        let mesh = random_mesh(&mut r, 150 + 40 * m);
        let bvh = Bvh::build(&mesh);
        for _ in 0..100 {
            let origin = Vec3::new(
                r.random_range(-25.0..25.0),
                r.random_range(-25.0..25.0),
                r.random_range(-25.0..25.0),
            );
            let aim = if r.random::<f64>() < 0.8 {
                let c = mesh.corners(r.random_range(0..mesh.len()));
                (c[0] + c[1] + c[2]) * (1.0 / 3.0)
            } else {
                Vec3::new(
                    r.random_range(-10.0..10.0),
                    r.random_range(-10.0..10.0),
                    r.random_range(-10.0..10.0),
                )
            };
            let ray = Ray {
                origin,
                dir: (aim - origin).normalized(),
            };
            let got = bvh.intersect(&ray, 0.0, 1e3).map(|h| (h.t, h.tri));
            let want = nearest_by_scan(&mesh, &ray, 1e3);
            match (got, want) {
                (None, None) => {}
                (Some((gt, gi)), Some((wt, wi))) => {
                    hits += 1;
                    ensure(gi == wi && (gt - wt).abs() <= 1e-9 * wt.max(1.0), || {
                        format!("mesh {m}: BVH ({gt}, {gi}) vs scan ({wt}, {wi})")
                    })?;
                }
                _ => return Err(format!("mesh {m}: BVH {got:?} vs scan {want:?}")),
            }
        }
    }

    let rays = generate_rays_ego::<f64>(&SensorRig::default());
    let h = 1.8;
    let ground = Bvh::build(&TriangleMesh::ground(400.0, -h));
    let mut plane_err = 0.0f64;
    let mut plane_hits = 0;
    for sr in &rays {
        let got = ground.intersect(&sr.ray, 0.0, sr.max_range).map(|x| x.t);
        let want = (sr.ray.dir.z < 0.0)
            .then(|| h / -sr.ray.dir.z)
            .filter(|&t| t <= sr.max_range);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                plane_hits += 1;
                plane_err = plane_err.max((g - w).abs());
            }
            _ => return Err(format!("plane: got {got:?}, closed form {want:?}")),
        }
    }
    ensure(plane_err <= 1e-6, || format!("plane range error {plane_err:.2e}"))?;

    let dims = VehicleDims::new(4.6, 2.0, 1.2).unwrap();
    let cx = 20.0;
    let cuboid = Bvh::build(&TriangleMesh::cuboid(dims).transformed(0.0, Vec3::new(cx, 0.0, 0.0)));
    let near = cx - dims.length / 2.0;
    let mut cube_err = 0.0f64;
    let mut cube_hits = 0;
    for sr in &rays {
        let d = sr.ray.dir;
        let got = cuboid.intersect(&sr.ray, 0.0, sr.max_range).map(|x| x.t);
        if d.x <= 0.0 {
            ensure(got.is_none(), || "cuboid hit behind the sensor".into())?;
            continue;
        }
        let t = near / d.x;
        let (py, pz) = (t * d.y, t * d.z);
        let margin = 1e-7;
        if py.abs() < dims.width / 2.0 - margin && pz.abs() < dims.height / 2.0 - margin {
            let g = got.ok_or_else(|| format!("cuboid face missed at ({py}, {pz})"))?;
            cube_hits += 1;
            cube_err = cube_err.max((g - t).abs());
        } else if py.abs() > dims.width / 2.0 + margin || pz.abs() > dims.height / 2.0 + margin {
            ensure(got.is_none(), || format!("cuboid hit outside the face at ({py}, {pz})"))?;
        }
    }
    ensure(cube_err <= 1e-6 && cube_hits > 0, || {
        format!("cuboid range error {cube_err:.2e} over {cube_hits} hits")
    })?;
    Ok(format!(
        "1000 rays on 10 meshes ({hits} hits) identical; plane {plane_hits} hits err {plane_err:.1e} m, cuboid {cube_hits} hits err {cube_err:.1e} m"
    ))
}

fn shifted(traj: &Trajectory<f64>, bias: Vec3<f64>) -> Trajectory<f64> {
    let samples = traj
        .samples
        .iter()
        .map(|s| TrajectorySample {
            position: s.position + bias,
            ..*s
        })
        .collect();
    Trajectory::new(traj.vehicle_id.clone(), samples).unwrap()
}

fn track(duration: f64, ground_gap: f64) -> TrajectorySet<f64> {
    let z = VehicleDims::<f64>::race_car().height / 2.0 + ground_gap;
    TrajectorySet {
        ego: common::circle("ego", common::TRACK_RADIUS, 0.0, 1.0, duration, 20.0),
        others: vec![
            common::circle("car1", 56.0, 14.0, z, duration, 20.0),
            common::circle("car2", 63.0, 38.0, z, duration, 20.0),
            common::circle("car3", 64.0, -25.0, z, duration, 20.0),
            common::circle("car4", 57.0, 75.0, z, duration, 20.0),
        ],
    }
}

fn frames(n: usize, rate: f64) -> Vec<ScheduledFrame> {
    (0..n)
        .map(|i| ScheduledFrame {
            frame_id: format!("{i:06}"),
            t: 0.013 + i as f64 / rate,
        })
        .collect()
}

struct LabelScore {
    good: usize,
    total: usize,
    max_err: f64,
    max_shift: f64,
}

fn autolabel_with_bias(
    sim: &[(PointCloud<f64>, FrameLabel<f64>)],
    sched: &[ScheduledFrame],
    truth: &TrajectorySet<f64>,
    bias: f64,
) -> Result<LabelScore, String> {
    let dims = VehicleDims::race_car();
    let mut gps = truth.clone();
    for (k, t) in gps.others.iter_mut().enumerate() {
        let a = 0.9 + 1.7 * k as f64;
        *t = shifted(t, Vec3::new(bias * a.cos(), bias * a.sin(), 0.0));
    }
    let cfg = RefineConfig::default();
    let results: Vec<_> = sim
        .par_iter()
        .zip(sched)
        .map(|((cloud, gt), f)| label_cloud(cloud, &gps, f.t, dims, &cfg).map(|(l, log)| (l, log, gt)))
        .collect::<simgap::Result<_>>()
        .map_err(|e| e.to_string())?;
    let mut score = LabelScore {
        good: 0,
        total: 0,
        max_err: 0.0,
        max_shift: 0.0,
    };
    for (label, log, gt) in &results {
        for row in log {
            score.max_shift = score.max_shift.max(row.dx.abs()).max(row.dy.abs());
        }
        for g in &gt.boxes {
            let b = label
                .boxes
                .iter()
                .find(|b| b.vehicle_id == g.vehicle_id)
                .ok_or_else(|| format!("{}: no label for {}", gt.frame_id, g.vehicle_id))?;
            let err = (b.bbox.center - g.bbox.center).norm();
            score.total += 1;
            score.max_err = score.max_err.max(err);
            if err <= 0.2 {
                score.good += 1;
            }
        }
    }
    Ok(score)
}

fn criterion_autolabel() -> Outcome {
    // ground half a meter below the vehicles so it never enters a label box
    let scene = build_scene(
        TriangleMesh::ground(300.0, -0.5),
        TriangleMesh::cuboid(VehicleDims::race_car()),
    )
    .map_err(|e| e.to_string())?;
    let truth = track(6.0, 0.5);
    let sched = frames(50, 10.0);
    let sim = simulate_frames(&scene, &truth, &SensorRig::default(), &sched).map_err(|e| e.to_string())?;
    let radius = RefineConfig::default().search_radius_xy;
    let mut parts = Vec::new();
    for bias in [0.0, 0.15] {
        let s = autolabel_with_bias(&sim, &sched, &truth, bias)?;
        let frac = s.good as f64 / s.total as f64;
        ensure(s.total >= 150, || format!("only {} targets in range", s.total))?;
        ensure(frac >= 0.95, || {
            format!("bias {bias} m: {}/{} within 0.2 m", s.good, s.total)
        })?;
        ensure(s.max_shift <= radius + 1e-9, || {
            format!("bias {bias} m: shift {} beyond the search radius", s.max_shift)
        })?;
        parts.push(format!(
            "bias {bias} m: {}/{} within 0.2 m, max error {:.3} m, max shift {:.2} m",
            s.good, s.total, s.max_err, s.max_shift
        ));
    }
    // reported only: at or past 0.2 m every uncorrectable target already misses
    let s = autolabel_with_bias(&sim, &sched, &truth, 0.25)?;
    ensure(s.max_shift <= radius + 1e-9, || {
        format!("bias 0.25 m: shift {} beyond the search radius", s.max_shift)
    })?;
    parts.push(format!("[info] bias 0.25 m: {}/{} within 0.2 m", s.good, s.total));
    Ok(parts.join("; "))
}

fn detector_ap(clouds: &[PointCloud<f64>], labels: &[FrameLabel<f64>], thresh: f64) -> Result<f64, String> {
    let cfg = DetectorConfig::default();
    let frames: Vec<FrameDetections<f64>> = clouds
        .par_iter()
        .zip(labels)
        .map(|(c, l)| {
            detect(c, &cfg).map(|preds| FrameDetections {
                preds,
                gts: l.gt_boxes(),
            })
        })
        .collect::<simgap::Result<_>>()
        .map_err(|e| e.to_string())?;
    average_precision_40(&frames, thresh).map_err(|e| e.to_string())
}

fn criterion_direction() -> Outcome {
    let dims = VehicleDims::race_car();
    let scene = build_scene(TriangleMesh::ground(300.0, 0.0), TriangleMesh::cuboid(dims)).map_err(|e| e.to_string())?;
    let set = track(10.5, 0.0);
    let sim = simulate_frames(&scene, &set, &SensorRig::default(), &frames(200, 20.0)).map_err(|e| e.to_string())?;
    let (clean, labels): (Vec<_>, Vec<_>) = sim.into_iter().unzip();
    let noisy: Vec<_> = clean
        .par_iter()
        .map(|c| apply_range_noise(c, &NoiseConfig { sigma: 0.02, seed: 8 }, Vec3::zero()))
        .collect::<simgap::Result<_>>()
        .map_err(|e| e.to_string())?;
    let sparse: Vec<_> = clean
        .par_iter()
        .map(|c| {
            downsample_random(
                c,
                &DownsampleConfig {
                    keep_ratio: 0.8,
                    seed: 8,
                },
            )
        })
        .collect::<simgap::Result<_>>()
        .map_err(|e| e.to_string())?;
    let ap_clean = detector_ap(&clean, &labels, 0.7)?;
    let ap_noisy = detector_ap(&noisy, &labels, 0.7)?;
    let ap_sparse = detector_ap(&sparse, &labels, 0.7)?;
    ensure(ap_clean >= ap_noisy, || {
        format!("AP(0.7) clean {ap_clean:.2} < noisy {ap_noisy:.2}")
    })?;

    let cfg = DistanceConfig::default();
    let mut cd_noisy = f64::INFINITY;
    let mut emd_noisy = f64::INFINITY;
    for i in (0..clean.len()).step_by(20) {
        let d = |a: &PointCloud<f64>, b: &PointCloud<f64>| -> Result<(f64, f64), String> {
            Ok((
                chamfer_distance(a, b).map_err(|e| e.to_string())?,
                earth_movers_distance(a, b, &cfg).map_err(|e| e.to_string())?,
            ))
        };
        let (cd0, emd0) = d(&clean[i], &clean[i])?;
        ensure(cd0 == 0.0 && emd0 == 0.0, || {
            format!("frame {i}: sim vs sim CD {cd0}, EMD {emd0}")
        })?;
        let (cd1, emd1) = d(&clean[i], &noisy[i])?;
        ensure(cd1 > 0.0 && emd1 > 0.0, || {
            format!("frame {i}: sim vs noisy CD {cd1}, EMD {emd1}")
        })?;
        cd_noisy = cd_noisy.min(cd1);
        emd_noisy = emd_noisy.min(emd1);
    }

    // one outlier 100 m away from a compact cloud
    let mut r = rng(8);
    let n = 400;
    let a = random_points(&mut r, n, 0.5);
    let b: Vec<_> = a
        .iter()
        .map(|p| {
            *p + Vec3::new(
                r.random_range(-0.02..0.02),
                r.random_range(-0.02..0.02),
                r.random_range(-0.02..0.02),
            )
        })
        .collect();
    let dist = 100.0;
    let outlier = a[0] + Vec3::new(dist, 0.0, 0.0);
    let mut a_plus = a.clone();
    a_plus.push(a[0]);
    let mut b_plus = b.clone();
    b_plus.push(outlier);
    let cloud = |p: &[Vec3<f64>]| PointCloud::from_positions("o", p.iter().copied());
    let cd_base = chamfer_distance(&cloud(&a), &cloud(&b)).map_err(|e| e.to_string())?;
    let cd_out = chamfer_distance(&cloud(&a_plus), &cloud(&b_plus)).map_err(|e| e.to_string())?;
    let emd_base = emd_exact(&a, &b).map_err(|e| e.to_string())?;
    let emd_out = emd_exact(&a_plus, &b_plus).map_err(|e| e.to_string())?;
    let cd_jump = cd_out - cd_base;
    let emd_jump = emd_out - emd_base;
    ensure((cd_jump - dist * dist).abs() <= 0.02 * dist * dist, || {
        format!("CD jump {cd_jump:.1} vs squared outlier distance {}", dist * dist)
    })?;
    ensure(emd_jump <= dist / n as f64, || {
        format!("EMD jump {emd_jump:.4} > {}", dist / n as f64)
    })?;
    Ok(format!(
        "AP(0.7) clean {ap_clean:.2} >= noisy {ap_noisy:.2} (downsampled {ap_sparse:.2}); sim/sim 0, sim/noisy CD >= {cd_noisy:.3}, EMD >= {emd_noisy:.4}; outlier: CD +{cd_jump:.0}, EMD +{emd_jump:.4}"
    ))
}

fn labeled(frame: &str, pts: &[[f64; 3]], boxes: &[BoundingBox3D<f64>]) -> (PointCloud<f64>, FrameLabel<f64>) {
    let cloud = PointCloud::new(frame, pts.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect());
    let mut label = FrameLabel::new(frame);
    for (i, b) in boxes.iter().enumerate() {
        label.boxes.push(simgap::frame::LabeledBox {
            vehicle_id: format!("v{i}"),
            bbox: *b,
        });
    }
    (cloud, label)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn triple_is(t: Option<Triple>, mean: f64, min: f64, max: f64) -> bool {
    t.is_some_and(|t| close(t.mean, mean) && t.min == min && t.max == max)
}

fn criterion_stats() -> Outcome {
    let unit = [1.0, 1.0, 1.0];
    let frames = vec![
        labeled(
            "000000",
            &[[1.0, 2.0, 3.0], [-1.0, 0.0, 1.0], [3.0, -2.0, -1.0], [150.0, 0.0, 0.0]],
            &[boxed([1.0, 2.0, 3.0], unit, 0.0)],
        ),
        labeled(
            "000001",
            &[
                [2.0, 2.0, 0.0],
                [2.2, 2.1, 0.1],
                [0.0, 0.0, 0.0],
                [-4.0, 4.0, 2.0],
                [5.0, -5.0, -3.0],
            ],
            &[boxed([2.0, 2.0, 0.0], unit, 0.0), boxed([50.0, 50.0, 0.0], unit, 0.0)],
        ),
        labeled(
            "000002",
            &[[10.0, 0.0, 0.0], [10.0, 0.3, 0.2]],
            &[boxed([10.0, 0.0, 0.0], [2.0, 2.0, 2.0], 0.7)],
        ),
    ];
    let s = stats_from_frames("micro", &frames);
    ensure(s.frames == 3 && s.targets == 4, || {
        format!("frames {} targets {}", s.frames, s.targets)
    })?;
    let c = s.coordinates.ok_or("no coordinates")?;
    ensure(triple_is(Some(c.x), 2.82, -4.0, 10.0), || format!("x {:?}", c.x))?;
    ensure(triple_is(Some(c.y), 0.34, -5.0, 4.0), || format!("y {:?}", c.y))?;
    ensure(triple_is(Some(c.z), 0.23, -3.0, 3.0), || format!("z {:?}", c.z))?;
    ensure(triple_is(s.points_per_cloud, 10.0 / 3.0, 2.0, 5.0), || {
        format!("cloud {:?}", s.points_per_cloud)
    })?;
    ensure(triple_is(s.points_per_target, 1.25, 0.0, 2.0), || {
        format!("target {:?}", s.points_per_target)
    })?;

    let with_mean = |name: &str, mean: f64| DatasetStats {
        name: name.into(),
        frames: 1,
        targets: 1,
        coordinates: None,
        points_per_cloud: None,
        points_per_target: Some(Triple {
            mean,
            min: mean,
            max: mean,
        }),
        excluded: Vec::new(),
    };
    let ratio = in_box_ratio(219.0, 251.0).ok_or("no ratio")?;
    ensure((ratio - 0.8725).abs() < 1e-4, || format!("ratio {ratio}"))?;
    let line = ratio_line(219.0, 251.0, ratio);
    ensure(line.contains("219/251 ≈ 87%"), || line.clone())?;
    let pairing = simgap::stats::Pairing {
        pairs: Vec::new(),
        unmatched_a: Vec::new(),
        unmatched_b: Vec::new(),
    };
    let text = StatsReport::new(with_mean("real", 219.0), with_mean("sim", 251.0), &pairing).to_text();
    ensure(text.contains("219/251 ≈ 87%"), || text.clone())?;
    let table = StatsReport::new(s.clone(), s, &pairing).to_text();
    for row in [
        "mean x",
        "min  y",
        "max  z",
        "Points per point cloud",
        "Points per target box",
    ] {
        ensure(table.contains(row), || format!("table lacks '{row}'"))?;
    }
    Ok(format!("micro-fixture exact on all 15 statistics; {line}"))
}

fn criterion_replay() -> Outcome {
    use common::*;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let f = write_fixture(tmp.path(), 5);
    let out = tmp.path().join("out");
    let real = tmp.path().join("real");
    run_ok(&sim_args(&f, &out));
    let sim = out.join("sim");
    run_ok(&[
        "--out",
        s(&real),
        "--seed",
        "3",
        "augment",
        "--input",
        s(&sim),
        "--downsample",
        "0.6",
        "--name",
        "real",
    ]);
    let real_ds = real.join("augment");

    let mut label = vec!["--out", s(&out), "label", "--input", s(&real_ds), "--ego", s(&f.ego)];
    for t in &f.targets {
        label.push("--trajectory");
        label.push(s(t));
    }
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("sim", Vec::new()),
        ("label", label),
        (
            "augment",
            vec![
                "--out",
                s(&out),
                "augment",
                "--input",
                s(&sim),
                "--matched",
                s(&real_ds),
            ],
        ),
        (
            "stats",
            vec![
                "--out",
                s(&out),
                "stats",
                "--dataset",
                s(&real_ds),
                "--compare",
                s(&sim),
            ],
        ),
        (
            "distance",
            vec![
                "--out",
                s(&out),
                "distance",
                "--dataset",
                s(&real_ds),
                "--compare",
                s(&sim),
                "--emd-subsample",
                "128",
            ],
        ),
        (
            "targets",
            vec!["--out", s(&out), "targets", "--input", s(&sim), "--ply"],
        ),
        ("detect", vec!["--out", s(&out), "detect", "--input", s(&sim)]),
    ];
    for (_, args) in &runs {
        if !args.is_empty() {
            run_ok(args);
        }
    }
    let preds = out.join("detect/predictions");
    run_ok(&[
        "--out",
        s(&out),
        "eval",
        "--labels",
        s(&sim),
        "--predictions",
        s(&preds),
    ]);
    let mut checked = Vec::new();
    for sub in [
        "sim", "label", "augment", "stats", "distance", "targets", "detect", "eval",
    ] {
        let fresh = tmp.path().join(format!("replay_{sub}"));
        let diff = replay_diff(&out, sub, &fresh);
        ensure(diff.is_empty(), || format!("{sub} replay differs in {diff:?}"))?;
        checked.push(sub);
    }
    let extra = tmp.path().join("replay_noise");
    run_ok(&[
        "--out",
        s(&extra),
        "--seed",
        "9",
        "augment",
        "--input",
        s(&sim),
        "--noise",
        "0.02",
    ]);
    let diff = replay_diff(&extra, "augment", &tmp.path().join("replay_noise2"));
    ensure(diff.is_empty(), || format!("noise replay differs in {diff:?}"))?;
    Ok(format!("{} subcommands replayed byte-identical", checked.len()))
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria = [
        Criterion {
            name: "iou oracle suite",
            limit: Duration::from_secs(30),
            run: criterion_iou,
        },
        Criterion {
            name: "ap oracle suite",
            limit: Duration::from_secs(5),
            run: criterion_ap,
        },
        Criterion {
            name: "emd exactness and cd k-d tree",
            limit: Duration::from_secs(60),
            run: criterion_emd_cd,
        },
        Criterion {
            name: "range noise model",
            limit: Duration::from_secs(5),
            run: criterion_noise,
        },
        Criterion {
            name: "downsampling",
            limit: Duration::from_secs(10),
            run: criterion_downsample,
        },
        Criterion {
            name: "simulator ray casting",
            limit: Duration::from_secs(60),
            run: criterion_simulator,
        },
        Criterion {
            name: "auto-label end to end",
            limit: Duration::from_secs(120),
            run: criterion_autolabel,
        },
        Criterion {
            name: "pipeline direction check",
            limit: Duration::from_secs(300),
            run: criterion_direction,
        },
        Criterion {
            name: "stats table conformance",
            limit: Duration::from_secs(5),
            run: criterion_stats,
        },
        Criterion {
            name: "cli replay reproducibility",
            limit: Duration::from_secs(300),
            run: criterion_replay,
        },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, c) in criteria.iter().enumerate() {
        if filter.as_ref().is_some_and(|f| !c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > c.limit => Err(format!("{detail}; took {took:.1?}, limit {:?}", c.limit)),
            r => r,
        };
        match result {
            Ok(detail) => println!("PASS [{:>2}] {}: {detail} ({:.2} s)", i + 1, c.name, took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:>2}] {}: {why} ({:.2} s)", i + 1, c.name, took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
