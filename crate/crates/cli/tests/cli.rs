use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use lidarfuse::synth::LidarModel;
use lidarfuse_cli::fixtures::{generate, Fixture};
use lidarfuse_cli::pipeline::{run_ablation_rho, run_pipeline, SUMMARY_FILE};
use lidarfuse_cli::{Config, PipelineConfig};
use serde_json::Value;

fn room() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, config) = DIR.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let config = generate(Fixture::Room, &tmp.path().join("room"), &LidarModel::default(), &Config::default()).unwrap();
        (tmp, config)
    });
    config
}

fn lidarfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lidarfuse")).args(args).output().unwrap()
}

fn config_with(overrides: &[String]) -> (Config, PipelineConfig) {
    let mut raw = Config::load(room()).unwrap();
    raw.apply_overrides(overrides).unwrap();
    let cfg = PipelineConfig::from_config(&raw).unwrap();
    (raw, cfg)
}

#[test]
fn room_run_writes_every_output() {
    let out = tempfile::tempdir().unwrap();
    let config = room().to_str().unwrap();
    let set = format!("output_dir={}", out.path().display());
    let result = lidarfuse(&["run", "-c", config, "--set", &set]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));

    let summary: Value = serde_json::from_slice(&std::fs::read(out.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert!(summary["free_space"]["correct_free_m3"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["camera_order"], serde_json::json!(["left", "forward", "right"]));
    let outputs = summary["outputs"].as_object().unwrap();
    for key in ["map", "mesh", "occupied_cloud", "report", "depth_metrics"] {
        assert!(outputs.contains_key(key), "missing output {key}");
    }
    let depth = std::fs::read_to_string(out.path().join("depth_metrics.csv")).unwrap();
    assert!(depth.lines().last().unwrap().starts_with("all,mean,"));
    for file in outputs.values() {
        let path = out.path().join(file.as_str().unwrap());
        let bytes = std::fs::read(&path).unwrap();
        assert!(!bytes.is_empty(), "{} is empty", path.display());
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                let text = String::from_utf8(bytes).unwrap();
                let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
                assert!(widths.len() >= 2 && widths.iter().all(|w| *w == widths[0]), "{}", path.display());
            }
            Some("ply") => assert!(bytes.starts_with(b"ply\n")),
            Some("bin") => {
                lidarfuse::map::OccupancyMap::read(&path).unwrap();
            }
            _ => panic!("unexpected output {}", path.display()),
        }
    }
}

#[test]
fn missing_trajectory_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.txt");
    let mut text = std::fs::read_to_string(room()).unwrap();
    let scans = room().parent().unwrap().join("scans");
    text.push_str(&format!("scans_dir = {}\ntrajectory = nowhere/poses.txt\n", scans.display()));
    std::fs::write(&config, text).unwrap();
    let result = lidarfuse(&["run", "-c", config.to_str().unwrap()]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("nowhere/poses.txt"), "{stderr}");
    assert!(stderr.contains("trajectory"), "{stderr}");
}

#[test]
fn unknown_key_is_rejected() {
    let result = lidarfuse(&["run", "--set", "voxle_size=0.1"]);
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("voxle_size"));
}

#[test]
fn help_lists_every_config_key() {
    let result = lidarfuse(&["--help"]);
    assert!(result.status.success());
    let help = String::from_utf8_lossy(&result.stdout);
    for key in Config::default().values().keys() {
        assert!(help.contains(key.as_str()), "--help does not mention {key}");
    }
    let sub = lidarfuse(&["run", "--help"]);
    assert!(String::from_utf8_lossy(&sub.stdout).contains("k_tau"));
}

#[test]
fn single_rho_ablation_matches_a_plain_run() {
    let out = tempfile::tempdir().unwrap();
    let (raw, cfg) = config_with(&[format!("output_dir={}", out.path().display())]);
    let rows = run_ablation_rho(&cfg, &[cfg.sensor.rho]).unwrap();
    assert_eq!(rows.len(), 1);
    let run = run_pipeline(&cfg, &raw).unwrap();
    assert_eq!(Some(rows[0].report), run.evaluation.free_space);
    assert_eq!(rows[0].mesh_error, run.evaluation.mesh_error);
    assert_eq!(rows[0].stats, run.stats);
    let csv = std::fs::read_to_string(out.path().join("ablation_rho.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    assert!(run_ablation_rho(&cfg, &[]).is_err());
    assert!(run_ablation_rho(&cfg, &[0.0]).is_err());
}
