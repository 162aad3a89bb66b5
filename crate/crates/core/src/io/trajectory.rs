//! Plain-text trajectories: one `timestamp tx ty tz qx qy qz qw` per line,
//! `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Pose, Vec3};

pub fn parse_trajectory(text: &str, path: &Path) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != 8 {
            return Err(Error::parse(
                path,
                format!("line {}: expected 8 values, found {}", lineno + 1, vals.len()),
            ));
        }
        let pose = Pose::from_wxyz(
            vals[0],
            [vals[7], vals[4], vals[5], vals[6]],
            Vec3::new(vals[1], vals[2], vals[3]),
        )
        .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        if let Some(prev) = poses.last().map(|p: &Pose| p.timestamp) {
            if pose.timestamp < prev {
                return Err(Error::parse(
                    path,
                    format!("line {}: timestamps not sorted", lineno + 1),
                ));
            }
        }
        poses.push(pose);
    }
    Ok(poses)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<Pose>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(&text, path)
}

pub fn format_trajectory(poses: &[Pose]) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for p in poses {
        let [w, x, y, z] = p.wxyz();
        let t = p.translation;
        let _ = writeln!(out, "{} {} {} {} {} {} {} {}", p.timestamp, t.x, t.y, t.z, x, y, z, w);
    }
    out
}

pub fn write_trajectory(path: &Path, poses: &[Pose]) -> Result<()> {
    std::fs::write(path, format_trajectory(poses)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments() {
        let text = "# header\n0.0 1 2 3 0 0 0 1\n\n0.5 1 2 3 0 0 0.7071067811865476 0.7071067811865476 # yaw 90\n";
        let poses = parse_trajectory(text, Path::new("t.txt")).unwrap();
        assert_eq!(poses.len(), 2);
        assert_eq!(poses[0].translation, Vec3::new(1.0, 2.0, 3.0));
        let p = poses[1].transform_vector(&Vec3::x());
        assert!((p - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn round_trip() {
        let poses = vec![
            Pose::from_yaw(0.1, 0.3, Vec3::new(1.0, -2.0, 0.5)),
            Pose::from_yaw(0.2, -1.2, Vec3::new(0.0, 0.0, 1.0)),
        ];
        let back = parse_trajectory(&format_trajectory(&poses), Path::new("x")).unwrap();
        for (a, b) in poses.iter().zip(&back) {
            assert_eq!(a.timestamp, b.timestamp);
            assert!((a.translation - b.translation).norm() < 1e-12);
            assert!(a.rotation.angle_to(&b.rotation) < 1e-9);
        }
    }

    #[test]
    fn errors_name_the_file() {
        let err = parse_trajectory("0 1 2 3\n", Path::new("traj.txt")).unwrap_err();
        assert!(err.to_string().contains("traj.txt"));
        assert!(parse_trajectory("1 0 0 0 0 0 0 1\n0 0 0 0 0 0 0 1\n", Path::new("t")).is_err());
        let err = read_trajectory(Path::new("/nonexistent/poses.txt")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/poses.txt"));
    }
}
