//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p lidarfuse-cli --test acceptance`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use lidarfuse::eval::{depth_metrics, sparsify_ause};
use lidarfuse::map::{raycast_voxels, OccupancyMap, RayMeasurement, VoxelIndex};
use lidarfuse::mesh::sample_mesh;
use lidarfuse::synth::{LidarModel, Scene};
use lidarfuse::{CameraIntrinsics, DepthImage, Grid, Pose, SensorModelParams, Vec3};
use lidarfuse_cli::fixtures::{generate, Fixture};
use lidarfuse_cli::pipeline::{run_ablation_rho, run_pipeline, RunSummary};
use lidarfuse_cli::{Config, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String)>;

fn params() -> SensorModelParams {
    SensorModelParams::default()
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Outcome {
    let p = params();
    let knot_lo = 0.06 / 0.052;
    let knot_hi = 0.20 / 0.052;
    // Measured range 10 m: σ = 0.2, thickness 0.26, slope 5 / 0.6.
    let top = 5.0 / 0.6 * 0.13;
    let sigma_probes = [(1.0, 0.06), (knot_lo, 0.06), (2.0, 0.104), (knot_hi, 0.20), (10.0, 0.20)];
    let log_probes = [
        (-0.6, Some(-5.0)),
        (-0.3, Some(-2.5)),
        (0.0, Some(0.0)),
        (0.13, Some(top)),
        (0.2, Some(top)),
        (0.26, Some(top)),
        (0.3, None),
    ];
    let mut worst = 0.0f64;
    for (d, want) in sigma_probes {
        let got = p.sigma_of_depth(d)?;
        worst = worst.max((got - want).abs());
    }
    for (d, want) in log_probes {
        let got = p.log_odds_update(d, 10.0);
        match (got, want) {
            (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
            (None, None) => {}
            _ => return Ok((false, format!("log_odds_update({d}, 10) = {got:?}, want {want:?}"))),
        }
    }
    let probes = sigma_probes.len() + log_probes.len();

    // Shrinking brackets around each knot: the jump across must vanish.
    let sigma_fn = |d: f64| p.sigma_of_depth(d).unwrap();
    let log_fn = |d: f64| p.log_odds_update(d, 10.0).unwrap();
    let knots: [(&str, f64, &dyn Fn(f64) -> f64); 4] = [
        ("sigma lower", knot_lo, &sigma_fn),
        ("sigma upper", knot_hi, &sigma_fn),
        ("free saturation", -0.6, &log_fn),
        ("ramp top", 0.13, &log_fn),
    ];
    let mut worst_jump = 0.0f64;
    for (name, k, f) in knots {
        let mut h = 0.05;
        let mut last = f64::INFINITY;
        for _ in 0..40 {
            let jump = (f(k + h) - f(k - h)).abs();
            // Largest slope of either model is 5 / 0.6 per metre.
            if jump > 2.0 * h * (5.0 / 0.6) + 1e-12 {
                return Ok((false, format!("{name} knot {k}: jump {jump} at h={h}")));
            }
            last = jump;
            h /= 2.0;
        }
        worst_jump = worst_jump.max(last);
    }
    Ok((
        worst <= 1e-9 && worst_jump <= 1e-9,
        format!("{probes} probes, max error {worst:.2e}; max jump at knots {worst_jump:.2e}"),
    ))
}

// ---------------------------------------------------------------- 2

const VS: f64 = 0.1;
const N: i64 = 64;

fn segment_hits_voxel(o: &Vec3, delta: &Vec3, idx: VoxelIndex) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for a in 0..3 {
        let lo = idx[a] as f64 * VS;
        let hi = (idx[a] + 1) as f64 * VS;
        if delta[a] == 0.0 {
            if o[a] < lo || o[a] > hi {
                return false;
            }
        } else {
            let ta = (lo - o[a]) / delta[a];
            let tb = (hi - o[a]) / delta[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    t0 <= t1
}

fn brute_force(o: &Vec3, delta: &Vec3) -> BTreeSet<VoxelIndex> {
    let e = o + delta;
    let lo: Vec<i64> = (0..3).map(|a| (o[a].min(e[a]) / VS).floor() as i64 - 1).collect();
    let hi: Vec<i64> = (0..3).map(|a| (o[a].max(e[a]) / VS).floor() as i64 + 1).collect();
    let mut out = BTreeSet::new();
    for x in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            for z in lo[2]..=hi[2] {
                if segment_hits_voxel(o, delta, [x, y, z]) {
                    out.insert([x, y, z]);
                }
            }
        }
    }
    out
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn inverse_model(p: &SensorModelParams, d: f64, range: f64, sigma: f64) -> Option<f64> {
    let slope = -p.l_min / (3.0 * sigma);
    let tau = p.k_tau * range;
    if d <= -3.0 * sigma {
        Some(p.l_min)
    } else if d <= 0.5 * tau {
        Some(slope * d)
    } else if d <= tau {
        Some(slope * 0.5 * tau)
    } else {
        None
    }
}

fn criterion_2() -> Outcome {
    let map = OccupancyMap::new(VS)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatched = 0;
    for _ in 0..1000 {
        let o = Vec3::new(rng.random_range(0.0..6.4), rng.random_range(0.0..6.4), rng.random_range(0.0..6.4));
        let dir = random_unit(&mut rng);
        let t = rng.random_range(0.0..3.0);
        let walk: BTreeSet<_> = raycast_voxels(&map, &o, &dir, t).into_iter().collect();
        if walk != brute_force(&o, &(dir * t)) {
            mismatched += 1;
        }
    }

    let p = SensorModelParams {
        max_range: 2.9,
        ..params()
    };
    let mut map = OccupancyMap::new(VS)?;
    let mut dense: Vec<Option<f32>> = vec![None; (N * N * N) as usize];
    let origins: Vec<Vec3> = (0..3)
        .map(|_| Vec3::new(rng.random_range(3.0..3.4), rng.random_range(3.0..3.4), rng.random_range(3.0..3.4)))
        .collect();
    for k in 0..50 {
        let o = origins[k % 3];
        let dir = random_unit(&mut rng);
        let m = if k % 10 == 9 {
            RayMeasurement::Free
        } else {
            let range = rng.random_range(0.3..3.2);
            RayMeasurement::Surface {
                range,
                sigma: p.sigma_of_depth(range)?,
            }
        };
        map.integrate_ray(&o, &dir, m, &p)?;
        let t_end = match m {
            RayMeasurement::Surface { range, .. } => (range * (1.0 + p.k_tau)).min(p.max_range),
            RayMeasurement::Free => p.max_range,
        };
        for idx in brute_force(&o, &(dir * t_end)) {
            ensure!(idx.iter().all(|i| (0..N).contains(i)), "ray left the 64³ grid");
            let c = Vec3::new(idx[0] as f64 + 0.5, idx[1] as f64 + 0.5, idx[2] as f64 + 0.5) * VS;
            let s = (c - o).norm();
            if s > p.max_range {
                continue;
            }
            let l = match m {
                RayMeasurement::Surface { range, sigma } => inverse_model(&p, s - range, range, sigma),
                RayMeasurement::Free => Some(p.l_min),
            };
            if let Some(l) = l {
                let cell = &mut dense[((idx[2] * N + idx[1]) * N + idx[0]) as usize];
                *cell = Some((cell.unwrap_or(0.0) + l as f32).clamp(p.l_min as f32, p.l_max as f32));
            }
        }
    }
    let mut differing = 0;
    let mut observed = 0;
    for (slot, cell) in dense.iter().enumerate() {
        let i = slot as i64;
        let got = map.get([i % N, (i / N) % N, i / (N * N)]);
        if got.map(f32::to_bits) != cell.map(f32::to_bits) {
            differing += 1;
        }
        observed += cell.is_some() as usize;
    }
    let extra = map.observed_count() != observed;
    Ok((
        mismatched == 0 && differing == 0 && !extra,
        format!(
            "raycast: {mismatched}/1000 segments differ; integration: {differing} of {observed} observed voxels differ"
        ),
    ))
}

// ---------------------------------------------------------------- 3, 7

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Result<Self> {
        let tmp = tempfile::tempdir()?;
        let root = tmp.path().to_path_buf();
        Ok(Self { _tmp: tmp, root })
    }

    fn fixture(&self, fixture: Fixture) -> Result<PathBuf> {
        let dir = self.root.join(fixture.name());
        if !dir.join("config.txt").exists() {
            generate(fixture, &dir, &LidarModel::default(), &Config::default())?;
        }
        Ok(dir.join("config.txt"))
    }
}

fn pipeline_config(path: &Path, overrides: &[String]) -> Result<(Config, PipelineConfig)> {
    let mut raw = Config::load(path)?;
    raw.apply_overrides(overrides)?;
    let cfg = PipelineConfig::from_config(&raw)?;
    Ok((raw, cfg))
}

fn run(path: &Path, overrides: &[String]) -> Result<RunSummary> {
    let (raw, cfg) = pipeline_config(path, overrides)?;
    run_pipeline(&cfg, &raw)
}

struct CorridorRuns {
    scene: Scene,
    completed: RunSummary,
    sparse: RunSummary,
    radius: f64,
}

fn corridor_runs(ws: &Workspace) -> Result<CorridorRuns> {
    let config = ws.fixture(Fixture::Corridor)?;
    let out = |name: &str| format!("output_dir={}", ws.root.join(name).display());
    let completed = run(&config, &["completer=linear".into(), out("completed")])?;
    let sparse = run(&config, &["completer=none".into(), out("sparse")])?;
    let (_, cfg) = pipeline_config(&config, &[])?;
    Ok(CorridorRuns {
        scene: Scene::read(cfg.scene.as_ref().context("corridor config names its scene")?)?,
        completed,
        sparse,
        radius: cfg.plan.context("corridor config has a plan request")?.robot_radius,
    })
}

fn criterion_3(runs: &CorridorRuns) -> Outcome {
    let c = runs.completed.evaluation.free_space.context("completed run has a report")?;
    let s = runs.sparse.evaluation.free_space.context("sparse run has a report")?;
    let ratio = c.correct_free / s.correct_free;
    Ok((
        ratio >= 1.4 && c.incorrect_free <= 2.5,
        format!(
            "correct free {:.2} m³ completed vs {:.2} m³ raw 16-ring (×{ratio:.3}); incorrect free {:.2}%",
            c.correct_free, s.correct_free, c.incorrect_free
        ),
    ))
}

fn criterion_7(runs: &CorridorRuns) -> Outcome {
    let c = runs.completed.plan.as_ref().context("completed run planned")?;
    let s = runs.sparse.plan.as_ref().context("sparse run planned")?;
    let mut clearance = f64::INFINITY;
    for w in c.path.windows(2) {
        let steps = ((w[1] - w[0]).norm() / 0.01).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let p = w[0] + (w[1] - w[0]) * (i as f64 / steps as f64);
            clearance = clearance.min(runs.scene.distance(&p));
        }
    }
    let sparse_status = match &s.status {
        lidarfuse::planner::PlanStatus::Found => "found".to_string(),
        lidarfuse::planner::PlanStatus::NotFound(why) => format!("not_found ({why})"),
    };
    Ok((
        c.found() && !s.found() && clearance >= runs.radius,
        format!(
            "completed: {} ({} waypoints, cost {:.2} m, min clearance {clearance:.3} m ≥ {}); sparse: {sparse_status}",
            if c.found() { "found" } else { "not_found" },
            c.path.len(),
            c.cost,
            runs.radius
        ),
    ))
}

// ---------------------------------------------------------------- 4

fn criterion_4(ws: &Workspace) -> Outcome {
    let config = ws.fixture(Fixture::Corridor)?;
    let (_, cfg) = pipeline_config(
        &config,
        &[
            "corrupt_fraction=0.05".into(),
            "corrupt_seed=7".into(),
            format!("output_dir={}", ws.root.join("ablation").display()),
        ],
    )?;
    let rows = run_ablation_rho(&cfg, &[0.5, 1.0, 2.0, 4.0, f64::INFINITY])?;
    let free: Vec<f64> = rows.iter().map(|r| r.report.correct_free).collect();
    let mesh: Vec<f64> = rows.iter().map(|r| r.mesh_error.unwrap_or(f64::NAN)).collect();
    let free_ok = free[..4].windows(2).all(|w| w[0] <= w[1]);
    let mesh_ok = mesh[..4].windows(2).all(|w| w[0] <= w[1]);
    let strict = mesh[2] < mesh[4];
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    Ok((
        free_ok && mesh_ok && strict,
        format!(
            "rho 0.5,1,2,4,inf: correct free [{}] m³, mesh error [{}] m",
            fmt(&free),
            fmt(&mesh)
        ),
    ))
}

// ---------------------------------------------------------------- 5

fn image(depth: Vec<Option<f64>>, sigma: Option<Vec<Option<f64>>>) -> Result<DepthImage> {
    let n = depth.len() as u32;
    let intr = CameraIntrinsics::new(1.0, 1.0, n as f64 / 2.0, 0.5, n, 1)?;
    let mut img = DepthImage::empty(intr, Pose::identity());
    img.depth = Grid::from_vec(n, 1, depth)?;
    img.sigma = sigma.map(|s| Grid::from_vec(n, 1, s)).transpose()?;
    Ok(img)
}

fn criterion_5() -> Outcome {
    let gt = image(vec![Some(1.0), Some(3.0), Some(7.5), None], None)?;
    let perfect = depth_metrics(&gt, &gt)?;
    let perfect_ok = [perfect.rmse, perfect.mae, perfect.rel, perfect.imae] == [0.0; 4]
        && perfect.delta.iter().all(|(_, p)| *p == 100.0);

    let r = depth_metrics(&image(vec![Some(2.2); 5], None)?, &image(vec![Some(2.0); 5], None)?)?;
    let imae = (0.5 - 1.0 / 2.2) * 1000.0;
    let two_ok = (r.mae - 0.2).abs() <= 1e-6
        && (r.rel - 10.0).abs() <= 1e-6
        && (r.imae - imae).abs() <= 1e-6
        && (r.imae - 45.45).abs() < 0.005;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 10_000;
    let gt: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..50.0)).collect();
    let pred: Vec<f64> = gt.iter().map(|g| g + rng.random_range(-1.0..1.0)).collect();
    let err: Vec<f64> = pred.iter().zip(&gt).map(|(p, g)| (p - g).abs()).collect();
    let random: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let oracle = sparsify_ause(&pred, &err, &gt)?;
    let noisy = sparsify_ause(&pred, &random, &gt)?;
    Ok((
        perfect_ok && two_ok && oracle.abs() <= 1e-9 && noisy > 0.0,
        format!(
            "perfect: all zero, δ=100%: {perfect_ok}; two-value: MAE {:.6} REL {:.6}% iMAE {:.6} km⁻¹; AUSE oracle {oracle:.1e}, random {noisy:.4}",
            r.mae, r.rel, r.imae
        ),
    ))
}

// ---------------------------------------------------------------- 6

fn criterion_6(ws: &Workspace) -> Outcome {
    let config = ws.fixture(Fixture::Sphere)?;
    let out = format!("output_dir={}", ws.root.join("sphere_out").display());
    let summary = run(&config, &[out])?;
    let mesh = &summary.evaluation.mesh;
    ensure!(!mesh.is_empty(), "sphere produced no mesh");
    let samples = sample_mesh(mesh, 1e4, 0)?;
    let mean = samples.points.iter().map(|p| (p.norm() - 1.0).abs()).sum::<f64>() / samples.len() as f64;
    let vs = summary.map.voxel_size();
    Ok((
        mean <= 0.065 && (vs - 0.065).abs() < 1e-12,
        format!(
            "{} triangles, {} samples, mean |‖p‖ - 1| = {mean:.4} m (voxel {vs} m)",
            mesh.triangles.len(),
            samples.len()
        ),
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8(ws: &Workspace) -> Outcome {
    let config = ws.fixture(Fixture::Corridor)?;
    let dirs = [ws.root.join("det_a"), ws.root.join("det_b")];
    for d in &dirs {
        run(&config, &[format!("output_dir={}", d.display())])?;
    }
    let mut compared = Vec::new();
    for name in ["map.bin", "report.csv", "depth_metrics.csv", "path.csv"] {
        let a = std::fs::read(dirs[0].join(name)).with_context(|| format!("reading {name}"))?;
        let b = std::fs::read(dirs[1].join(name)).with_context(|| format!("reading {name}"))?;
        if a != b {
            return Ok((false, format!("{name} differs between runs")));
        }
        compared.push(format!("{name} ({} B)", a.len()));
    }
    Ok((true, format!("identical: {}", compared.join(", "))))
}

// ----------------------------------------------------------------

fn report(n: usize, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let secs = start.elapsed().as_secs_f64();
    let (ok, detail) = match outcome {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => (false, format!("error: {e:#}")),
        Err(_) => (false, "panicked".to_string()),
    };
    println!("criterion {n}: {} [{secs:.1} s] {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() -> ExitCode {
    let ws = match Workspace::new() {
        Ok(ws) => ws,
        Err(e) => {
            eprintln!("cannot create a scratch directory: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let mut all = true;
    all &= report(1, criterion_1);
    all &= report(2, criterion_2);
    let mut runs = None;
    all &= report(3, || {
        let r = corridor_runs(&ws)?;
        let out = criterion_3(&r);
        runs = Some(r);
        out
    });
    all &= report(4, || criterion_4(&ws));
    all &= report(5, criterion_5);
    all &= report(6, || criterion_6(&ws));
    all &= report(7, || match &runs {
        Some(r) => criterion_7(r),
        None => corridor_runs(&ws).and_then(|r| criterion_7(&r)),
    });
    all &= report(8, || criterion_8(&ws));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
