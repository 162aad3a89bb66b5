use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use lidarfuse::completion::{write_completion, Completer, LinearCompleter};
use lidarfuse::eval::{build_gt_map, depth_metrics, free_space_report, to_csv, DepthMetricReport, FreeSpaceReport};
use lidarfuse::io::depth_png::{read_depth, read_sigma_raw, write_depth};
use lidarfuse::io::ply::{read_point_cloud, read_scan, write_mesh, Encoding};
use lidarfuse::io::trajectory::read_trajectory;
use lidarfuse::lidar::{downsample_beams, project_scan};
use lidarfuse::map::OccupancyMap;
use lidarfuse::mesh::{marching_cubes, mesh_accuracy, sample_mesh};
use lidarfuse::planner::{plan_rrt_star, PlanStatus};
use lidarfuse::synth::LidarModel;
use lidarfuse::{CameraIntrinsics, DepthImage, Frame, Pose};
use lidarfuse_cli::config::{keys_help, parse_vec3};
use lidarfuse_cli::fixtures::{generate, Fixture};
use lidarfuse_cli::pipeline::{ablation_csv, fuse, prepare_views, run_ablation_rho, run_pipeline};
use lidarfuse_cli::{Config, PipelineConfig};

#[derive(Parser)]
#[command(name = "lidarfuse", version, about = "Sparse lidar + depth completion volumetric mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable); wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        Ok(cfg)
    }

    fn pipeline(&self) -> Result<(Config, PipelineConfig)> {
        let raw = self.load()?;
        let cfg = PipelineConfig::from_config(&raw)?;
        Ok((raw, cfg))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with config.
    Synth {
        /// room, corridor or sphere
        #[arg(long)]
        fixture: Fixture,
        #[arg(long)]
        out: PathBuf,
        /// Gaussian range noise std-dev, m.
        #[arg(long, default_value_t = 0.0)]
        range_noise: f64,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        /// Azimuth steps of the simulated 64-ring lidar.
        #[arg(long, default_value_t = 1024)]
        azimuth_steps: u32,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Project a lidar scan into one camera as a 16-bit depth PNG.
    Project {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long, default_value = "forward")]
        camera: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Complete a sparse depth PNG with the linear completer.
    Complete {
        #[arg(long)]
        sparse: PathBuf,
        #[arg(long)]
        out_depth: PathBuf,
        #[arg(long)]
        out_sigma: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fuse all frames into map.bin in the output directory.
    Fuse {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Extract a marching-cubes mesh from a map file.
    Mesh {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ascii: bool,
    },
    /// Depth metrics of a prediction against ground truth (PNG inputs).
    EvalDepth {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        sigma: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mesh accuracy and free-space report of a map against a GT cloud.
    EvalMap {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        gt_cloud: PathBuf,
        /// Sensor poses used to ray-cast the ground-truth map.
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// RRT* on a map file.
    Plan {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        start: String,
        #[arg(long)]
        goal: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Sweep the rejection ratio and report mesh error and free space.
    AblateRho {
        /// Comma-separated ratios; `inf` disables rejection.
        #[arg(long, default_value = "0.5,1,2,4")]
        rhos: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Full pipeline: project, complete, fuse, mesh, evaluate, plan.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn png_image(path: &Path) -> Result<DepthImage> {
    let depth = read_depth(path)?;
    let (w, h) = depth.dims();
    let intrinsics = CameraIntrinsics::new(1.0, 1.0, w as f64 / 2.0, h as f64 / 2.0, w, h)?;
    Ok(DepthImage {
        intrinsics,
        depth,
        sigma: None,
        pose: Pose::identity(),
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            fixture,
            out,
            range_noise,
            noise_seed,
            azimuth_steps,
            cfg,
        } => {
            let lidar = LidarModel {
                azimuth_steps,
                range_noise,
                noise_seed,
                ..Default::default()
            };
            let path = generate(fixture, &out, &lidar, &cfg.load()?)?;
            println!("{}", path.display());
        }
        Command::Project { scan, camera, out, cfg } => {
            let (_, cfg) = cfg.pipeline()?;
            let slot = cfg
                .cameras
                .iter()
                .find(|c| c.name == camera)
                .with_context(|| format!("camera {camera:?} is not configured"))?;
            let scan = downsample_beams(&read_scan(&scan)?, cfg.beam_keep_every);
            let image = project_scan(&scan, &slot.mount.inverse(), &cfg.intrinsics);
            write_depth(&out, &image.depth)?;
            eprintln!("{} valid pixels", image.valid_count());
        }
        Command::Complete {
            sparse,
            out_depth,
            out_sigma,
            cfg,
        } => {
            let (_, cfg) = cfg.pipeline()?;
            let sparse = png_image(&sparse)?;
            let completer = LinearCompleter {
                params: cfg.sensor,
                k_d: cfg.k_d,
            };
            let result = completer.complete("", &sparse, None)?;
            write_completion(&result, &out_depth, &out_sigma)?;
        }
        Command::Fuse { cfg } => {
            let (_, cfg) = cfg.pipeline()?;
            let views = prepare_views(&cfg)?;
            let (map, stats) = fuse(&views, &cfg.sensor, cfg.voxel_size)?;
            std::fs::create_dir_all(&cfg.output_dir)
                .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
            let path = cfg.output_dir.join("map.bin");
            map.write(&path)?;
            eprintln!("{stats:?}");
            println!("{}", path.display());
        }
        Command::Mesh { map, out, ascii } => {
            let mesh = marching_cubes(&OccupancyMap::read(&map)?);
            let enc = if ascii { Encoding::Ascii } else { Encoding::BinaryLittleEndian };
            write_mesh(&out, &mesh, enc)?;
            eprintln!("{} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
        }
        Command::EvalDepth { pred, gt, sigma, out } => {
            let mut pred = png_image(&pred)?;
            let gt = png_image(&gt)?;
            if let Some(s) = sigma {
                let raw = read_sigma_raw(&s)?;
                if raw.dims() != pred.depth.dims() {
                    bail!("{}: sigma size differs from the prediction", s.display());
                }
                pred.sigma = Some(pred.depth.map(|_| None));
                let grid = pred.sigma.as_mut().unwrap();
                for (i, d) in pred.depth.as_slice().iter().enumerate() {
                    grid.as_mut_slice()[i] = d.map(|_| raw.as_slice()[i]);
                }
            }
            let report = depth_metrics(&pred, &gt)?;
            output(out.as_deref(), &to_csv(&DepthMetricReport::csv_header(), &[report.csv_row()]))?;
        }
        Command::EvalMap {
            map,
            gt_cloud,
            trajectory,
            out,
            cfg,
        } => {
            let (_, cfg) = cfg.pipeline()?;
            let map = OccupancyMap::read(&map)?;
            let cloud = read_point_cloud(&gt_cloud, Frame::World)?;
            let poses = read_trajectory(&trajectory)?;
            let gt = build_gt_map(&cloud, &poses, &cfg.sensor, map.voxel_size())?;
            let samples = sample_mesh(&marching_cubes(&map), cfg.mesh_density, cfg.seed)?;
            let err = if samples.is_empty() { f64::NAN } else { mesh_accuracy(&samples, &cloud)? };
            let report = free_space_report(&map, &gt, err)?;
            output(out.as_deref(), &to_csv(&FreeSpaceReport::csv_header(), &[report.csv_row()]))?;
        }
        Command::Plan {
            map,
            start,
            goal,
            out,
            mut cfg,
        } => {
            parse_vec3(&start).context("--start")?;
            parse_vec3(&goal).context("--goal")?;
            cfg.overrides.push(format!("plan_start={start}"));
            cfg.overrides.push(format!("plan_goal={goal}"));
            let (_, cfg) = cfg.pipeline()?;
            let map = OccupancyMap::read(&map)?;
            let result = plan_rrt_star(&map, cfg.plan.as_ref().expect("start and goal set"))?;
            output(out.as_deref(), &result.to_csv())?;
            match &result.status {
                PlanStatus::Found => eprintln!("found: cost {:.3} m, {} waypoints", result.cost, result.path.len()),
                PlanStatus::NotFound(m) => eprintln!("not_found: {m}"),
            }
        }
        Command::AblateRho { rhos, cfg } => {
            let (_, cfg) = cfg.pipeline()?;
            let rhos: Vec<f64> = rhos
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().with_context(|| format!("--rhos: bad value {s:?}")))
                .collect::<Result<_>>()?;
            let rows = run_ablation_rho(&cfg, &rhos)?;
            print!("{}", ablation_csv(&rows));
        }
        Command::Run { cfg } => {
            let (raw, cfg) = cfg.pipeline()?;
            let summary = run_pipeline(&cfg, &raw)?;
            println!("{}", serde_json::to_string_pretty(&summary.json)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let help = keys_help();
    let command = Cli::command()
        .after_help(help.clone())
        .mut_subcommands(|sc| sc.after_help(help.clone()));
    let cli = match Cli::from_arg_matches(&command.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
