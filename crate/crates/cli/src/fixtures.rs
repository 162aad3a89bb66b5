//! Synthetic datasets: scene, lidar trajectory, scans, ground-truth cloud
//! and a ready-to-run config.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lidarfuse::io::ply::{write_point_cloud, write_scan};
use lidarfuse::io::trajectory::write_trajectory;
use lidarfuse::lidar::LidarScan;
use lidarfuse::map::DEFAULT_VOXEL_SIZE;
use lidarfuse::synth::{simulate_lidar, LidarModel, Primitive, Scene};
use lidarfuse::{Frame, PointCloud, Pose, Vec3};

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// Closed room with furniture, short loop trajectory.
    Room,
    /// Long building corridor; the robot covers only its first metres.
    Corridor,
    /// Unit sphere circled by a single forward camera.
    Sphere,
}

impl Fixture {
    pub const ALL: [Fixture; 3] = [Fixture::Room, Fixture::Corridor, Fixture::Sphere];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Room => "room",
            Fixture::Corridor => "corridor",
            Fixture::Sphere => "sphere",
        }
    }
}

impl std::str::FromStr for Fixture {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .with_context(|| format!("unknown fixture {s:?} (room, corridor, sphere)"))
    }
}

pub struct Dataset {
    pub scene: Scene,
    pub poses: Vec<Pose>,
    pub scans: Vec<LidarScan>,
    pub gt_cloud: PointCloud,
    /// Config entries specific to the fixture.
    pub settings: Vec<(&'static str, String)>,
}

/// Moves a face coordinate so the face sits 10% inside a voxel whose
/// centre lies in the solid. `solid_above` is true when the solid occupies
/// coordinates greater than the face.
fn snap(w: f64, solid_above: bool) -> f64 {
    let k = (w / DEFAULT_VOXEL_SIZE).floor();
    let f = if solid_above { 0.1 } else { 0.9 };
    (k + f) * DEFAULT_VOXEL_SIZE
}

/// Box spanning `lo..hi` with every face snapped.
fn solid(lo: [f64; 3], hi: [f64; 3]) -> Primitive {
    let lo = Vec3::from(lo.map(|c| snap(c, true)));
    let hi = Vec3::from(hi.map(|c| snap(c, false)));
    Primitive::Box {
        center: (lo + hi) / 2.0,
        size: hi - lo,
    }
}

/// Six walls around the interior `lo..hi`, `t` thick.
fn enclosure(lo: [f64; 3], hi: [f64; 3], t: f64) -> Vec<Primitive> {
    let lo = lo.map(|c| snap(c, false));
    let hi = hi.map(|c| snap(c, true));
    let wall = |a: [f64; 3], b: [f64; 3]| {
        let (a, b) = (Vec3::from(a), Vec3::from(b));
        Primitive::Box { center: (a + b) / 2.0, size: b - a }
    };
    let (ol, oh) = (lo.map(|c| c - t), hi.map(|c| c + t));
    vec![
        wall([ol[0], ol[1], ol[2]], [lo[0], oh[1], oh[2]]),
        wall([hi[0], ol[1], ol[2]], [oh[0], oh[1], oh[2]]),
        wall([ol[0], ol[1], ol[2]], [oh[0], lo[1], oh[2]]),
        wall([ol[0], hi[1], ol[2]], [oh[0], oh[1], oh[2]]),
        wall([ol[0], ol[1], ol[2]], [oh[0], oh[1], lo[2]]),
        wall([ol[0], ol[1], hi[2]], [oh[0], oh[1], oh[2]]),
    ]
}

/// Dense survey scan from `stations`, thinned to one point per voxel.
fn survey(scene: &Scene, stations: &[Vec3]) -> Result<PointCloud> {
    let scanner = LidarModel {
        num_rings: 256,
        elevation_min: -75.0,
        elevation_max: 75.0,
        azimuth_steps: 2880,
        max_range: 200.0,
        ..Default::default()
    };
    let mut points = Vec::new();
    for s in stations {
        let pose = Pose::new(0.0, Default::default(), *s);
        let scan = simulate_lidar(scene, &scanner, &pose)?;
        points.extend(scan.points.iter().map(|p| pose.transform_point(&p.position)));
    }
    Ok(PointCloud::new(points, Frame::World).voxel_downsample(DEFAULT_VOXEL_SIZE))
}

fn fibonacci_sphere(center: Vec3, r: f64, n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            center + Vec3::new(rho * a.cos(), rho * a.sin(), z) * r
        })
        .collect()
}

pub fn build(fixture: Fixture, lidar: &LidarModel) -> Result<Dataset> {
    let (scene, poses, gt_cloud, settings) = match fixture {
        Fixture::Room => {
            let mut prims = enclosure([-3.0, -2.5, -1.0], [3.0, 2.5, 1.8], 0.3);
            prims.push(solid([1.2, 0.8, -1.0], [2.4, 2.5, -0.25]));
            prims.push(solid([-1.8, -2.5, -1.0], [-1.2, -1.9, 1.8]));
            prims.push(solid([-2.0, 1.0, -1.0], [-1.4, 1.6, 0.2]));
            let scene = Scene::new(prims)?;
            let poses: Vec<Pose> = (0..6)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / 6.0;
                    Pose::from_yaw(0.2 * i as f64, a + PI / 2.0, Vec3::new(a.cos(), 0.8 * a.sin(), 0.0))
                })
                .collect();
            let stations = [
                Vec3::zeros(),
                Vec3::new(1.5, -1.2, 0.0),
                Vec3::new(-1.5, 1.2, 0.0),
                Vec3::new(-1.5, -1.2, 0.6),
                Vec3::new(1.5, 1.2, 0.6),
            ];
            let gt = survey(&scene, &stations)?;
            (scene, poses, gt, vec![])
        }
        Fixture::Corridor => {
            let mut prims = enclosure([-2.5, -1.5, -1.0], [24.0, 1.5, 1.9], 0.3);
            prims.push(solid([6.0, 0.9, -1.0], [7.0, 1.5, 0.2]));
            prims.push(solid([10.0, -1.5, -1.0], [11.5, -1.0, 1.0]));
            prims.push(solid([15.0, 1.0, -1.0], [15.6, 1.5, 1.9]));
            prims.push(solid([19.0, -1.5, -1.0], [20.0, -0.9, 0.0]));
            let scene = Scene::new(prims)?;
            let poses: Vec<Pose> = (0..9)
                .map(|i| Pose::from_yaw(0.2 * i as f64, 0.0, Vec3::new(0.5 * i as f64, 0.0, 0.0)))
                .collect();
            let stations: Vec<Vec3> = (0..6).map(|i| Vec3::new(4.0 * i as f64, 0.0, 0.0)).collect();
            let gt = survey(&scene, &stations)?;
            let settings = vec![
                ("plan_start", "2.5,0,0".to_string()),
                ("plan_goal", "12,0,0".to_string()),
                ("plan_fixed_z", "0".to_string()),
                ("beam_keep_every", "4".to_string()),
            ];
            (scene, poses, gt, settings)
        }
        Fixture::Sphere => {
            let scene = Scene::new(vec![Primitive::Sphere {
                center: Vec3::zeros(),
                radius: 1.0,
            }])?;
            let poses: Vec<Pose> = (0..8)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / 8.0;
                    Pose::from_yaw(0.2 * i as f64, a + PI, Vec3::new(3.0 * a.cos(), 3.0 * a.sin(), 0.0))
                })
                .collect();
            let gt = PointCloud::new(fibonacci_sphere(Vec3::zeros(), 1.0, 40_000), Frame::World);
            let settings = vec![("cameras", "forward".to_string()), ("max_range", "10".to_string())];
            (scene, poses, gt, settings)
        }
    };
    let scans = poses
        .iter()
        .map(|p| simulate_lidar(&scene, lidar, p))
        .collect::<lidarfuse::Result<Vec<_>>>()?;
    Ok(Dataset {
        scene,
        poses,
        scans,
        gt_cloud,
        settings,
    })
}

/// Writes a dataset under `dir` and returns the path of its config file.
/// `base` supplies any extra settings; dataset paths always point into `dir`.
pub fn write(dataset: &Dataset, dir: &Path, base: &Config) -> Result<PathBuf> {
    let scans_dir = dir.join("scans");
    std::fs::create_dir_all(&scans_dir).with_context(|| format!("creating {}", scans_dir.display()))?;
    for (i, scan) in dataset.scans.iter().enumerate() {
        write_scan(&scans_dir.join(format!("scan_{i:06}.ply")), scan)?;
    }
    write_trajectory(&dir.join("trajectory.txt"), &dataset.poses)?;
    dataset.scene.write(&dir.join("scene.txt"))?;
    write_point_cloud(&dir.join("gt_cloud.ply"), &dataset.gt_cloud)?;

    let mut cfg = base.clone();
    for (k, v) in &dataset.settings {
        cfg.set(k, v)?;
    }
    for (k, v) in [
        ("scans_dir", "scans"),
        ("trajectory", "trajectory.txt"),
        ("scene", "scene.txt"),
        ("gt_cloud", "gt_cloud.ply"),
        ("output_dir", "out"),
    ] {
        cfg.set(k, v)?;
    }
    let path = dir.join("config.txt");
    std::fs::write(&path, cfg.to_text()).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn generate(fixture: Fixture, dir: &Path, lidar: &LidarModel, base: &Config) -> Result<PathBuf> {
    write(&build(fixture, lidar)?, dir, base)
}
