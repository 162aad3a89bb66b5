//! Per-frame projection, completion and fusion, then meshing, evaluation
//! and artifact writing.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lidarfuse::completion::{
    apply_sky_convention, Completer, CompletionResult, ExternalCompleter, LinearCompleter, PixelSource,
};
use lidarfuse::eval::{build_gt_map, depth_metrics, free_space_report, to_csv, DepthMetricReport, FreeSpaceReport};
use lidarfuse::io::ply::{read_point_cloud, read_scan, write_mesh, write_point_cloud, Encoding};
use lidarfuse::io::trajectory::read_trajectory;
use lidarfuse::lidar::{downsample_beams, project_scan};
use lidarfuse::map::{IntegrationStats, OccupancyMap};
use lidarfuse::mesh::{marching_cubes, mesh_accuracy, sample_mesh, TriMesh};
use lidarfuse::planner::{plan_rrt_star, PlanResult, PlanStatus};
use lidarfuse::synth::{simulate_depth_camera, Scene};
use lidarfuse::{DepthImage, Frame, PointCloud, Pose, SensorModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{CompleterKind, Config, PipelineConfig};

/// One camera image ready for integration.
#[derive(Debug, Clone)]
pub struct View {
    pub frame: usize,
    pub camera: &'static str,
    /// World←camera.
    pub pose: Pose,
    pub result: CompletionResult,
}

/// Trajectory poses and the matching scan files.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<(Vec<Pose>, Vec<PathBuf>)> {
    cfg.check_inputs()?;
    let poses = read_trajectory(&cfg.trajectory)?;
    let mut scans: Vec<PathBuf> = std::fs::read_dir(&cfg.scans_dir)
        .with_context(|| format!("listing {}", cfg.scans_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("scan_") && name.ends_with(".ply")
        })
        .collect();
    scans.sort();
    if scans.len() != poses.len() {
        bail!(
            "dimension mismatch: {} scans in {} but {} poses in {}",
            scans.len(),
            cfg.scans_dir.display(),
            poses.len(),
            cfg.trajectory.display()
        );
    }
    if poses.is_empty() {
        bail!("{} holds no poses", cfg.trajectory.display());
    }
    Ok((poses, scans))
}

/// Indices of the frames that are integrated.
pub fn frame_indices(cfg: &PipelineConfig, n: usize) -> Vec<usize> {
    (0..n).step_by(cfg.frame_stride).collect()
}

/// Replaces a random subset of predicted pixels with wrong depths and
/// inflated σ.
pub fn corrupt(result: &mut CompletionResult, params: &SensorModelParams, fraction: f64, seed: u64) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0;
    let dense = &mut result.dense;
    let sigma = dense.sigma.as_mut().expect("completion results carry sigma");
    for i in 0..dense.depth.as_slice().len() {
        if result.source.as_slice()[i] != PixelSource::Predicted || result.sky.as_slice()[i] {
            continue;
        }
        let hit = rng.random::<f64>() < fraction;
        let factor = if rng.random::<bool>() {
            rng.random_range(1.3..1.8)
        } else {
            rng.random_range(0.5..0.8)
        };
        let ratio = rng.random_range(1.5..3.5);
        let Some(d) = dense.depth.as_slice()[i] else { continue };
        if hit {
            let bad = d * factor;
            dense.depth.as_mut_slice()[i] = Some(bad);
            sigma.as_mut_slice()[i] = Some(ratio * params.sigma_of_depth(bad).unwrap_or(params.sigma_max));
            count += 1;
        }
    }
    count
}

fn completer(cfg: &PipelineConfig) -> Option<Box<dyn Completer>> {
    match cfg.completer {
        CompleterKind::None => None,
        CompleterKind::Linear => Some(Box::new(LinearCompleter {
            params: cfg.sensor,
            k_d: cfg.k_d,
        })),
        CompleterKind::External => Some(Box::new(ExternalCompleter {
            dir: cfg.external_dir.clone().expect("validated"),
        })),
    }
}

/// Projects, completes and (optionally) corrupts every camera of every
/// integrated frame, cameras in left, forward, right order.
pub fn prepare_views(cfg: &PipelineConfig) -> Result<Vec<View>> {
    let (poses, scans) = load_inputs(cfg)?;
    let completer = completer(cfg);
    let mut views = Vec::new();
    for frame in frame_indices(cfg, poses.len()) {
        let scan = downsample_beams(&read_scan(&scans[frame])?, cfg.beam_keep_every);
        for (c, cam) in cfg.cameras.iter().enumerate() {
            let pose = poses[frame].compose(&cam.mount);
            let mut sparse = project_scan(&scan, &cam.mount.inverse(), &cfg.intrinsics);
            sparse.pose = pose;
            let name = format!("{frame:06}_{}", cam.name);
            let result = match &completer {
                None => CompletionResult::from_sparse(&sparse, &cfg.sensor),
                Some(c) => c
                    .complete(&name, &sparse, None)
                    .with_context(|| format!("completing frame {frame} camera {}", cam.name))?,
            };
            let mut result = apply_sky_convention(result, cfg.sky_depth);
            let seed = cfg.corrupt_seed.wrapping_mul(1_000_003).wrapping_add((frame * 3 + c) as u64);
            corrupt(&mut result, &cfg.sensor, cfg.corrupt_fraction, seed);
            views.push(View {
                frame,
                camera: cam.name,
                pose,
                result,
            });
        }
    }
    Ok(views)
}

pub fn fuse(views: &[View], params: &SensorModelParams, voxel_size: f64) -> Result<(OccupancyMap, IntegrationStats)> {
    let mut map = OccupancyMap::new(voxel_size)?;
    let mut stats = IntegrationStats::default();
    for v in views {
        stats += map.integrate_depth_image(&v.result, &v.pose, params)?;
    }
    Ok((map, stats))
}

pub struct GroundTruth {
    pub cloud: PointCloud,
    pub map: OccupancyMap,
}

/// Ground-truth cloud and the map ray-cast from the integrated lidar poses.
pub fn load_ground_truth(cfg: &PipelineConfig) -> Result<Option<GroundTruth>> {
    let Some(path) = &cfg.gt_cloud else { return Ok(None) };
    let (poses, _) = load_inputs(cfg)?;
    let sensors: Vec<Pose> = frame_indices(cfg, poses.len()).into_iter().map(|i| poses[i]).collect();
    let cloud = read_point_cloud(path, Frame::World)?;
    let map = build_gt_map(&cloud, &sensors, &cfg.sensor, cfg.voxel_size)?;
    Ok(Some(GroundTruth { cloud, map }))
}

pub struct Evaluation {
    pub mesh: TriMesh,
    pub mesh_error: Option<f64>,
    pub free_space: Option<FreeSpaceReport>,
}

pub fn evaluate(map: &OccupancyMap, gt: Option<&GroundTruth>, cfg: &PipelineConfig) -> Result<Evaluation> {
    let mesh = marching_cubes(map);
    let Some(gt) = gt else {
        return Ok(Evaluation { mesh, mesh_error: None, free_space: None });
    };
    let samples = sample_mesh(&mesh, cfg.mesh_density, cfg.seed)?;
    let mesh_error = if samples.is_empty() { None } else { Some(mesh_accuracy(&samples, &gt.cloud)?) };
    let report = free_space_report(map, &gt.map, mesh_error.unwrap_or(f64::NAN))?;
    Ok(Evaluation {
        mesh,
        mesh_error,
        free_space: Some(report),
    })
}

/// Per-view depth metrics against ray-traced ground truth.
pub fn depth_rows(views: &[View], scene: &Scene, sky_depth: f64) -> Vec<(usize, &'static str, DepthMetricReport)> {
    views
        .iter()
        .filter_map(|v| {
            let mut gt = simulate_depth_camera(scene, &v.result.dense.intrinsics, &v.pose, Some(sky_depth));
            for d in gt.depth.as_mut_slice() {
                if matches!(d, Some(z) if *z >= sky_depth) {
                    *d = None;
                }
            }
            let mut pred: DepthImage = v.result.dense.clone();
            for (d, sky) in pred.depth.as_mut_slice().iter_mut().zip(v.result.sky.as_slice()) {
                if *sky {
                    *d = None;
                }
            }
            depth_metrics(&pred, &gt).ok().map(|r| (v.frame, v.camera, r))
        })
        .collect()
}

pub fn depth_csv(rows: &[(usize, &'static str, DepthMetricReport)]) -> String {
    let mut header = vec!["frame".to_string(), "camera".to_string()];
    header.extend(DepthMetricReport::csv_header());
    let mut body: Vec<Vec<String>> = rows
        .iter()
        .map(|(f, c, r)| {
            let mut row = vec![f.to_string(), c.to_string()];
            row.extend(r.csv_row());
            row
        })
        .collect();
    if !rows.is_empty() {
        body.push(mean_row(rows));
    }
    to_csv(&header, &body)
}

/// Per-image metrics averaged over images; optional columns over the
/// images that have them. Pixel counts are summed.
fn mean_row(rows: &[(usize, &'static str, DepthMetricReport)]) -> Vec<String> {
    let mean = |vals: Vec<f64>| -> String {
        if vals.is_empty() {
            String::new()
        } else {
            (vals.iter().sum::<f64>() / vals.len() as f64).to_string()
        }
    };
    let all = |f: &dyn Fn(&DepthMetricReport) -> f64| mean(rows.iter().map(|(_, _, r)| f(r)).collect());
    let some = |f: &dyn Fn(&DepthMetricReport) -> Option<f64>| mean(rows.iter().filter_map(|(_, _, r)| f(r)).collect());
    let mut row = vec![
        "all".to_string(),
        "mean".to_string(),
        all(&|r| r.rmse),
        all(&|r| r.mae),
        all(&|r| r.rel),
        all(&|r| r.imae),
    ];
    for (i, _) in rows[0].2.delta.iter().enumerate() {
        row.push(all(&|r| r.delta[i].1));
    }
    row.push(some(&|r| r.l_unc));
    row.push(some(&|r| r.ause));
    row.push(rows.iter().map(|(_, _, r)| r.pixels).sum::<usize>().to_string());
    row
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn stats_json(s: &IntegrationStats) -> Value {
    json!({
        "rays_integrated": s.rays_integrated,
        "rays_rejected": s.rays_rejected,
        "rays_sky": s.rays_sky,
        "rays_over_range": s.rays_over_range,
        "voxel_updates": s.voxel_updates,
    })
}

/// Everything a run produced; also serialised as `run_summary.json`.
pub struct RunSummary {
    pub map: OccupancyMap,
    pub stats: IntegrationStats,
    pub evaluation: Evaluation,
    pub plan: Option<PlanResult>,
    pub json: Value,
}

pub const SUMMARY_FILE: &str = "run_summary.json";

pub fn run_pipeline(cfg: &PipelineConfig, raw: &Config) -> Result<RunSummary> {
    let views = prepare_views(cfg)?;
    let (map, stats) = fuse(&views, &cfg.sensor, cfg.voxel_size)?;
    let gt = load_ground_truth(cfg)?;
    let evaluation = evaluate(&map, gt.as_ref(), cfg)?;

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut outputs = serde_json::Map::new();
    map.write(&out.join("map.bin"))?;
    outputs.insert("map".into(), "map.bin".into());
    write_point_cloud(&out.join("occupied.ply"), &map.export_occupied_cloud())?;
    outputs.insert("occupied_cloud".into(), "occupied.ply".into());
    write_mesh(&out.join("mesh.ply"), &evaluation.mesh, Encoding::BinaryLittleEndian)?;
    outputs.insert("mesh".into(), "mesh.ply".into());
    if let Some(r) = &evaluation.free_space {
        write_text(&out.join("report.csv"), &to_csv(&FreeSpaceReport::csv_header(), &[r.csv_row()]))?;
        outputs.insert("report".into(), "report.csv".into());
    }
    if let Some(scene_path) = &cfg.scene {
        let scene = Scene::read(scene_path)?;
        write_text(&out.join("depth_metrics.csv"), &depth_csv(&depth_rows(&views, &scene, cfg.sky_depth)))?;
        outputs.insert("depth_metrics".into(), "depth_metrics.csv".into());
    }
    let plan = match &cfg.plan {
        Some(req) => {
            let result = plan_rrt_star(&map, req)?;
            result.write_csv(&out.join("path.csv"))?;
            outputs.insert("path".into(), "path.csv".into());
            Some(result)
        }
        None => None,
    };

    let volumes = map.classify_volumes();
    let json = json!({
        "tool": "lidarfuse",
        "version": env!("CARGO_PKG_VERSION"),
        "config": raw.values(),
        "camera_order": cfg.cameras.iter().map(|c| c.name).collect::<Vec<_>>(),
        "frames_integrated": frame_indices(cfg, views.iter().map(|v| v.frame + 1).max().unwrap_or(0)).len(),
        "views": views.len(),
        "integration": stats_json(&stats),
        "map": {
            "voxel_size": map.voxel_size(),
            "observed_voxels": map.observed_count(),
            "free_m3": volumes.free_m3,
            "occupied_m3": volumes.occupied_m3,
        },
        "mesh": {
            "vertices": evaluation.mesh.vertices.len(),
            "triangles": evaluation.mesh.triangles.len(),
            "error_m": evaluation.mesh_error,
        },
        "free_space": evaluation.free_space.as_ref().map(|r| json!({
            "correct_free_m3": r.correct_free,
            "incorrect_free_pct": r.incorrect_free,
            "completeness_m3": r.completeness_vol,
        })),
        "plan": plan.as_ref().map(|p| json!({
            "status": match &p.status { PlanStatus::Found => "found".to_string(), PlanStatus::NotFound(m) => format!("not_found: {m}") },
            "cost": p.cost,
            "waypoints": p.path.len(),
            "tree_size": p.tree_size,
        })),
        "outputs": outputs,
    });
    write_text(&out.join(SUMMARY_FILE), &serde_json::to_string_pretty(&json)?)?;
    Ok(RunSummary {
        map,
        stats,
        evaluation,
        plan,
        json,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub rho: f64,
    pub mesh_error: Option<f64>,
    pub report: FreeSpaceReport,
    pub stats: IntegrationStats,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let header: Vec<String> = [
        "rho",
        "mesh_error",
        "correct_free",
        "incorrect_free_pct",
        "completeness_vol",
        "rays_integrated",
        "rays_rejected",
    ]
    .map(String::from)
    .to_vec();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.rho.to_string(),
                r.mesh_error.map_or("nan".into(), |e| e.to_string()),
                r.report.correct_free.to_string(),
                r.report.incorrect_free.to_string(),
                r.report.completeness_vol.to_string(),
                r.stats.rays_integrated.to_string(),
                r.stats.rays_rejected.to_string(),
            ]
        })
        .collect();
    to_csv(&header, &body)
}

/// Fuses the same completed views once per ρ and evaluates each map.
pub fn run_ablation_rho(cfg: &PipelineConfig, rhos: &[f64]) -> Result<Vec<AblationRow>> {
    if rhos.is_empty() {
        bail!("rho list is empty");
    }
    if let Some(bad) = rhos.iter().find(|r| !(**r > 0.0)) {
        bail!("rho values must be positive, got {bad}");
    }
    let gt = load_ground_truth(cfg)?.context("ablation needs `gt_cloud`")?;
    let views = prepare_views(cfg)?;
    let mut rows = Vec::new();
    for &rho in rhos {
        let params = SensorModelParams { rho, ..cfg.sensor };
        let (map, stats) = fuse(&views, &params, cfg.voxel_size)?;
        let eval = evaluate(&map, Some(&gt), cfg)?;
        rows.push(AblationRow {
            rho,
            mesh_error: eval.mesh_error,
            report: eval.free_space.expect("ground truth present"),
            stats,
        });
    }
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    write_text(&cfg.output_dir.join("ablation_rho.csv"), &ablation_csv(&rows))?;
    Ok(rows)
}
