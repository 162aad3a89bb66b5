//! Flat `key = value` pipeline configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use lidarfuse::planner::PlanRequest;
use lidarfuse::{CameraIntrinsics, Pose, SensorModelParams, Vec3};

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Every recognised key. Empty defaults mean "unset".
pub const KEYS: &[Key] = &[
    key("l_min", "-5.0", "free-space log-odds per update and lower clamp"),
    key("l_max", "5.0", "upper log-odds clamp"),
    key("k_tau", "0.026", "surface thickness as a fraction of range"),
    key("k_sigma", "0.052", "depth noise slope"),
    key("sigma_min", "0.06", "depth noise floor, m"),
    key("sigma_max", "0.20", "depth noise ceiling, m"),
    key("max_range", "50.0", "integration range limit, m"),
    key("rho", "2.0", "rejection ratio for predicted sigma (inf disables)"),
    key("completer", "linear", "none | linear | external"),
    key("k_d", "0.01", "linear completer sigma growth per pixel of support distance"),
    key("external_dir", "", "directory with <frame>_<camera>_depth.png / _sigma.png"),
    key("sky_depth", "256.0", "depth value encoding sky, m"),
    key("voxel_size", "0.065", "map resolution, m"),
    key("frame_stride", "1", "integrate every n-th frame"),
    key("beam_keep_every", "1", "keep rings whose index is a multiple of this"),
    key("cameras", "left,forward,right", "cameras to use; integrated left, forward, right"),
    key("cam_fx", "120.0", "focal length x, px"),
    key("cam_fy", "120.0", "focal length y, px"),
    key("cam_cx", "119.5", "principal point x, px"),
    key("cam_cy", "89.5", "principal point y, px"),
    key("cam_width", "240", "image width, px"),
    key("cam_height", "180", "image height, px"),
    key("cam_yaw_left", "90.0", "left camera yaw from lidar forward, deg"),
    key("cam_yaw_forward", "0.0", "forward camera yaw, deg"),
    key("cam_yaw_right", "-90.0", "right camera yaw, deg"),
    key("cam_offset", "0,0,0", "camera position in the lidar frame, m"),
    key("scans_dir", "scans", "directory of scan_NNNNNN.ply lidar scans"),
    key("trajectory", "trajectory.txt", "lidar poses, one per scan (t x y z qx qy qz qw)"),
    key("gt_cloud", "", "world-frame ground-truth cloud (PLY)"),
    key("scene", "", "analytic scene for ground-truth depth"),
    key("output_dir", "out", "artifact directory"),
    key("mesh_density", "10000", "mesh samples per m^2 for accuracy"),
    key("seed", "0", "seed for mesh sampling and planning"),
    key("corrupt_fraction", "0.0", "fraction of predicted pixels replaced by bad depths"),
    key("corrupt_seed", "0", "seed for corruption"),
    key("plan_start", "", "planner start x,y,z"),
    key("plan_goal", "", "planner goal x,y,z"),
    key("robot_radius", "0.2", "collision ball radius, m"),
    key("max_iterations", "20000", "RRT* iteration budget"),
    key("step_size", "0.5", "RRT* steering step, m"),
    key("goal_tolerance", "0.2", "goal connection distance, m"),
    key("goal_bias", "0.05", "probability of sampling the goal"),
    key("plan_fixed_z", "none", "fix the planning height (ground robots) or none"),
];

const PATH_KEYS: &[&str] = &["external_dir", "scans_dir", "trajectory", "gt_cloud", "scene", "output_dir"];

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let mut out = String::from("Config keys (key = default):\n");
    for k in KEYS {
        let default = if k.default.is_empty() { "<unset>" } else { k.default };
        out.push_str(&format!("  {:<18} {:<20} {}\n", k.name, default, k.help));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
    /// Relative paths resolve against this directory.
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Config {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected `key = value`", origin.display(), n + 1))?;
            cfg.set(k.trim(), v.trim())
                .with_context(|| format!("{}:{}", origin.display(), n + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text, path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => bail!("unknown config key `{key}`"),
        }
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("override `{o}` is not key=value"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse::<T>().map_err(|e| anyhow!("config key `{key}`: cannot parse {v:?}: {e}"))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.parsed(key)
    }

    pub fn vec3(&self, key: &str) -> Result<Option<Vec3>> {
        let v = self.get(key);
        if v.is_empty() {
            return Ok(None);
        }
        parse_vec3(v).map(Some).with_context(|| format!("config key `{key}`"))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        debug_assert!(PATH_KEYS.contains(&key));
        let v = self.get(key);
        if v.is_empty() {
            None
        } else {
            Some(self.base_dir.join(v))
        }
    }
}

pub fn parse_vec3(s: &str) -> Result<Vec3> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| anyhow!("cannot parse {s:?} as x,y,z: {e}"))?;
    match parts[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => bail!("expected 3 comma-separated numbers, got {s:?}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompleterKind {
    None,
    Linear,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraSlot {
    pub name: &'static str,
    /// Lidar←camera.
    pub mount: Pose,
}

/// Typed view of a [`Config`].
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub sensor: SensorModelParams,
    pub completer: CompleterKind,
    pub k_d: f64,
    pub external_dir: Option<PathBuf>,
    pub sky_depth: f64,
    pub voxel_size: f64,
    pub frame_stride: usize,
    pub beam_keep_every: u16,
    pub cameras: Vec<CameraSlot>,
    pub intrinsics: CameraIntrinsics,
    pub scans_dir: PathBuf,
    pub trajectory: PathBuf,
    pub gt_cloud: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub mesh_density: f64,
    pub seed: u64,
    pub corrupt_fraction: f64,
    pub corrupt_seed: u64,
    pub plan: Option<PlanRequest>,
}

impl PipelineConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let sensor = SensorModelParams {
            l_min: cfg.f64("l_min")?,
            l_max: cfg.f64("l_max")?,
            k_tau: cfg.f64("k_tau")?,
            k_sigma: cfg.f64("k_sigma")?,
            sigma_min: cfg.f64("sigma_min")?,
            sigma_max: cfg.f64("sigma_max")?,
            max_range: cfg.f64("max_range")?,
            rho: cfg.f64("rho")?,
        };
        sensor.validate().context("sensor model keys")?;
        let completer = match cfg.get("completer") {
            "none" => CompleterKind::None,
            "linear" => CompleterKind::Linear,
            "external" => CompleterKind::External,
            other => bail!("config key `completer`: expected none, linear or external, got {other:?}"),
        };
        let external_dir = cfg.path("external_dir");
        if completer == CompleterKind::External && external_dir.is_none() {
            bail!("config key `external_dir` is required when completer = external");
        }
        let offset = cfg.vec3("cam_offset")?.unwrap_or_default();
        let mut wanted = Vec::new();
        for name in cfg.get("cameras").split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if !["left", "forward", "right"].contains(&name) {
                bail!("config key `cameras`: unknown camera {name:?}");
            }
            wanted.push(name);
        }
        let cameras: Vec<CameraSlot> = ["left", "forward", "right"]
            .into_iter()
            .filter(|n| wanted.contains(n))
            .map(|name| {
                let yaw = cfg.f64(&format!("cam_yaw_{name}"))?;
                Ok(CameraSlot {
                    name,
                    mount: Pose::optical_mount(yaw.to_radians(), offset),
                })
            })
            .collect::<Result<_>>()?;
        if cameras.is_empty() {
            bail!("config key `cameras`: at least one camera is required");
        }
        let intrinsics = CameraIntrinsics::new(
            cfg.f64("cam_fx")?,
            cfg.f64("cam_fy")?,
            cfg.f64("cam_cx")?,
            cfg.f64("cam_cy")?,
            cfg.parsed("cam_width")?,
            cfg.parsed("cam_height")?,
        )
        .context("camera intrinsics keys")?;
        let voxel_size = cfg.f64("voxel_size")?;
        if !(voxel_size > 0.0) {
            bail!("config key `voxel_size` must be positive");
        }
        let frame_stride: usize = cfg.parsed("frame_stride")?;
        let beam_keep_every: u16 = cfg.parsed("beam_keep_every")?;
        if frame_stride == 0 || beam_keep_every == 0 {
            bail!("config keys `frame_stride` and `beam_keep_every` must be at least 1");
        }
        let corrupt_fraction = cfg.f64("corrupt_fraction")?;
        if !(0.0..=1.0).contains(&corrupt_fraction) {
            bail!("config key `corrupt_fraction` must lie in [0, 1]");
        }
        let plan = match (cfg.vec3("plan_start")?, cfg.vec3("plan_goal")?) {
            (Some(start), Some(goal)) => {
                let fixed_z = match cfg.get("plan_fixed_z") {
                    "" | "none" => None,
                    _ => Some(cfg.f64("plan_fixed_z")?),
                };
                let req = PlanRequest {
                    start,
                    goal,
                    robot_radius: cfg.f64("robot_radius")?,
                    max_iterations: cfg.parsed("max_iterations")?,
                    step_size: cfg.f64("step_size")?,
                    goal_tolerance: cfg.f64("goal_tolerance")?,
                    seed: cfg.parsed("seed")?,
                    fixed_z,
                    goal_bias: cfg.f64("goal_bias")?,
                };
                req.validate().context("planner keys")?;
                Some(req)
            }
            (None, None) => None,
            _ => bail!("config keys `plan_start` and `plan_goal` must be set together"),
        };
        Ok(Self {
            sensor,
            completer,
            k_d: cfg.f64("k_d")?,
            external_dir,
            sky_depth: cfg.f64("sky_depth")?,
            voxel_size,
            frame_stride,
            beam_keep_every,
            cameras,
            intrinsics,
            scans_dir: cfg.path("scans_dir").context("config key `scans_dir` is required")?,
            trajectory: cfg.path("trajectory").context("config key `trajectory` is required")?,
            gt_cloud: cfg.path("gt_cloud"),
            scene: cfg.path("scene"),
            output_dir: cfg.path("output_dir").context("config key `output_dir` is required")?,
            mesh_density: cfg.f64("mesh_density")?,
            seed: cfg.parsed("seed")?,
            corrupt_fraction,
            corrupt_seed: cfg.parsed("corrupt_seed")?,
            plan,
        })
    }

    /// Fails naming the first referenced input that does not exist.
    pub fn check_inputs(&self) -> Result<()> {
        let mut inputs = vec![("scans_dir", &self.scans_dir), ("trajectory", &self.trajectory)];
        for (k, p) in [("gt_cloud", &self.gt_cloud), ("scene", &self.scene), ("external_dir", &self.external_dir)] {
            if let Some(p) = p {
                inputs.push((k, p));
            }
        }
        for (k, p) in inputs {
            if !p.exists() {
                bail!("config key `{k}`: {} does not exist", p.display());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = PipelineConfig::from_config(&Config::default()).unwrap();
        assert_eq!(cfg.sensor, SensorModelParams::default());
        assert_eq!(cfg.voxel_size, 0.065);
        assert_eq!(cfg.sky_depth, 256.0);
        assert_eq!(cfg.completer, CompleterKind::Linear);
        let names: Vec<_> = cfg.cameras.iter().map(|c| c.name).collect();
        assert_eq!(names, ["left", "forward", "right"]);
        assert!(cfg.plan.is_none());
    }

    #[test]
    fn file_then_overrides() {
        let text = "# experiment\nrho = 4\ncameras = right, left  # order is fixed\nplan_start = 0,0,0\nplan_goal = 1,0,0\n";
        let mut cfg = Config::parse(text, Path::new("x.cfg")).unwrap();
        cfg.apply_overrides(&["rho=inf", "plan_fixed_z = 0.5"]).unwrap();
        let p = PipelineConfig::from_config(&cfg).unwrap();
        assert_eq!(p.sensor.rho, f64::INFINITY);
        let names: Vec<_> = p.cameras.iter().map(|c| c.name).collect();
        assert_eq!(names, ["left", "right"]);
        assert_eq!(p.plan.unwrap().fixed_z, Some(0.5));
        assert_eq!(Config::parse(&cfg.to_text(), Path::new("y")).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_key() {
        let err = Config::parse("voxel = 1\n", Path::new("a.cfg")).unwrap_err();
        assert!(format!("{err:#}").contains("`voxel`"));
        assert!(format!("{err:#}").contains("a.cfg:1"));
        let mut cfg = Config::default();
        cfg.set("k_tau", "abc").unwrap();
        let err = PipelineConfig::from_config(&cfg).unwrap_err();
        assert!(format!("{err:#}").contains("k_tau"));
        let mut cfg = Config::default();
        cfg.set("cameras", "").unwrap();
        assert!(PipelineConfig::from_config(&cfg).is_err());
        let mut cfg = Config::default();
        cfg.set("plan_start", "1,2").unwrap();
        assert!(format!("{:#}", PipelineConfig::from_config(&cfg).unwrap_err()).contains("plan_start"));
        assert!(Config::default().apply_overrides(&["nonsense"]).is_err());
    }

    #[test]
    fn help_lists_every_key() {
        let help = keys_help();
        for k in KEYS {
            assert!(help.contains(k.name));
        }
    }
}
