//! Lidar scans to sparse depth images: projection with a z-buffer, beam
//! downsampling, and multi-scan accumulation for denser ground truth.

use crate::geom::{CameraIntrinsics, DepthImage, Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    /// Sensor-frame position, metres.
    pub position: Vec3,
    pub ring: u16,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LidarScan {
    pub points: Vec<LidarPoint>,
    pub num_rings: u16,
}

impl LidarScan {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Rasterises camera-frame points into `image`, keeping the nearest depth
/// per pixel.
fn splat_min(image: &mut DepthImage, points: impl Iterator<Item = Vec3>) {
    let intr = image.intrinsics;
    for p in points {
        if let Some(px) = intr.project(&p) {
            let (u, v) = px.rounded();
            let cell = image.depth.get_mut(u, v);
            match cell {
                Some(d) if *d <= px.depth => {}
                _ => *cell = Some(px.depth),
            }
        }
    }
}

/// Projects a scan into a camera. `extrinsics` maps lidar → camera
/// coordinates. The returned image has no sigma grid and an identity pose;
/// callers place it in the world.
pub fn project_scan(scan: &LidarScan, extrinsics: &Pose, intr: &CameraIntrinsics) -> DepthImage {
    let mut image = DepthImage::empty(*intr, Pose::identity());
    splat_min(
        &mut image,
        scan.points
            .iter()
            .map(|p| extrinsics.transform_point(&p.position)),
    );
    image
}

/// Keeps points whose ring index is a multiple of `keep_every`; `4` turns a
/// 64-ring scan into a 16-ring one.
pub fn downsample_beams(scan: &LidarScan, keep_every: u16) -> LidarScan {
    let keep_every = keep_every.max(1);
    LidarScan {
        points: scan
            .points
            .iter()
            .filter(|p| p.ring % keep_every == 0)
            .copied()
            .collect(),
        num_rings: scan.num_rings,
    }
}

/// Projects several world-posed scans into the camera attached to the lidar
/// at `target` (world←lidar). The returned image is posed at the camera.
pub fn accumulate_scans(
    scans: &[(LidarScan, Pose)],
    target: &Pose,
    intr: &CameraIntrinsics,
    extrinsics: &Pose,
) -> DepthImage {
    let camera_pose = target.compose(&extrinsics.inverse());
    let mut image = DepthImage::empty(*intr, camera_pose);
    let world_to_cam = extrinsics.compose(&target.inverse());
    for (scan, pose) in scans {
        let lidar_to_cam = world_to_cam.compose(pose);
        splat_min(
            &mut image,
            scan.points
                .iter()
                .map(|p| lidar_to_cam.transform_point(&p.position)),
        );
    }
    image
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use std::collections::BTreeSet;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 40.0, 100, 80).unwrap()
    }

    fn pt(x: f64, y: f64, z: f64, ring: u16) -> LidarPoint {
        LidarPoint {
            position: Vec3::new(x, y, z),
            ring,
            timestamp: 0.0,
        }
    }

    /// Synthetic wall at z = 4 sampled on a (ring, column) lattice.
    fn wall_scan(rings: u16) -> LidarScan {
        let mut points = Vec::new();
        for r in 0..rings {
            for c in 0..200 {
                let y = -1.2 + 2.4 * r as f64 / (rings - 1) as f64;
                let x = -1.9 + 3.8 * c as f64 / 199.0;
                points.push(pt(x, y, 4.0, r));
            }
        }
        LidarScan {
            points,
            num_rings: rings,
        }
    }

    #[test]
    fn empty_scan_projects_to_empty_image() {
        let img = project_scan(&LidarScan::default(), &Pose::identity(), &intr());
        assert_eq!(img.valid_count(), 0);
        assert!(img.sigma.is_none());
    }

    #[test]
    fn optical_axis_point() {
        let scan = LidarScan {
            points: vec![pt(0.0, 0.0, 3.0, 0)],
            num_rings: 1,
        };
        let img = project_scan(&scan, &Pose::identity(), &intr());
        assert_eq!(img.valid_count(), 1);
        assert_eq!(img.depth_at(50, 40), Some(3.0));
    }

    #[test]
    fn z_buffer_keeps_minimum() {
        for order in [[2.0, 5.0], [5.0, 2.0]] {
            let scan = LidarScan {
                points: order.iter().map(|&z| pt(0.0, 0.0, z, 0)).collect(),
                num_rings: 1,
            };
            let img = project_scan(&scan, &Pose::identity(), &intr());
            assert_eq!(img.depth_at(50, 40), Some(2.0));
        }
    }

    #[test]
    fn extrinsics_are_applied() {
        // Camera 1 m to the right of the lidar: lidar point at x=1 is on-axis.
        let ext = Pose::new(0.0, UnitQuaternion::identity(), Vec3::new(-1.0, 0.0, 0.0));
        let scan = LidarScan {
            points: vec![pt(1.0, 0.0, 3.0, 0)],
            num_rings: 1,
        };
        let img = project_scan(&scan, &ext, &intr());
        assert_eq!(img.depth_at(50, 40), Some(3.0));
    }

    #[test]
    fn downsample_examples() {
        let scan = LidarScan {
            points: (0..64).flat_map(|r| [pt(1.0, 0.0, 0.0, r), pt(0.0, 1.0, 0.0, r)]).collect(),
            num_rings: 64,
        };
        assert_eq!(downsample_beams(&scan, 1), scan);
        let rings: BTreeSet<u16> = downsample_beams(&scan, 4).points.iter().map(|p| p.ring).collect();
        assert_eq!(rings, (0..64).step_by(4).collect());
        assert_eq!(rings.len(), 16);

        let small = LidarScan {
            points: (0..4).map(|r| pt(1.0, 0.0, 0.0, r)).collect(),
            num_rings: 4,
        };
        let kept = downsample_beams(&small, 4);
        assert_eq!(kept.points.len(), 1);
        assert_eq!(kept.points[0].ring, 0);
    }

    #[test]
    fn downsampled_density_is_a_quarter() {
        let full = project_scan(&wall_scan(64), &Pose::identity(), &intr());
        let sparse = project_scan(&downsample_beams(&wall_scan(64), 4), &Pose::identity(), &intr());
        let ratio = sparse.valid_count() as f64 / full.valid_count() as f64;
        assert!((ratio - 0.25).abs() <= 0.025, "ratio {ratio}");
    }

    #[test]
    fn valid_pixels_backproject_near_inputs() {
        let scan = wall_scan(16);
        let k = intr();
        let img = project_scan(&scan, &Pose::identity(), &k);
        assert!(img.valid_count() <= scan.len());
        let voxel_diagonal = 0.065 * 3f64.sqrt();
        for (u, v, d) in img.depth.iter() {
            if let Some(d) = d {
                let p = k.backproject(u as f64, v as f64, *d).unwrap();
                let nearest = scan
                    .points
                    .iter()
                    .map(|q| (q.position - p).norm())
                    .fold(f64::INFINITY, f64::min);
                assert!(nearest <= voxel_diagonal, "pixel ({u},{v}) {nearest}");
            }
        }
    }

    #[test]
    fn accumulation_single_and_repeated() {
        let k = intr();
        let ext = Pose::new(0.0, UnitQuaternion::identity(), Vec3::new(0.1, 0.0, 0.0));
        let pose = Pose::new(0.0, UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3), Vec3::new(1.0, 2.0, 3.0));
        let scan = wall_scan(16);
        let single = accumulate_scans(&[(scan.clone(), pose)], &pose, &k, &ext);
        let direct = project_scan(&scan, &ext, &k);
        assert_eq!(single.depth, direct.depth);
        assert!((single.pose.translation - pose.compose(&ext.inverse()).translation).norm() < 1e-12);

        let many: Vec<_> = (0..11).map(|_| (scan.clone(), pose)).collect();
        assert_eq!(accumulate_scans(&many, &pose, &k, &ext).depth, single.depth);
    }

    #[test]
    fn accumulation_densifies() {
        let k = intr();
        let a = Pose::identity();
        let b = Pose::new(0.0, UnitQuaternion::identity(), Vec3::new(0.0, 0.1, 0.0));
        // The same world wall seen from both poses.
        let world_wall = wall_scan(16);
        let seen_from_b = LidarScan {
            points: world_wall
                .points
                .iter()
                .map(|p| LidarPoint {
                    position: b.inverse().transform_point(&p.position) + Vec3::new(0.0, 0.04, 0.0),
                    ..*p
                })
                .collect(),
            num_rings: 16,
        };
        let only_a = accumulate_scans(&[(world_wall.clone(), a)], &a, &k, &Pose::identity());
        let only_b = accumulate_scans(&[(seen_from_b.clone(), b)], &a, &k, &Pose::identity());
        let both = accumulate_scans(&[(world_wall, a), (seen_from_b, b)], &a, &k, &Pose::identity());
        assert!(both.valid_count() >= only_a.valid_count());
        assert!(both.valid_count() >= only_b.valid_count());
        assert!(both.valid_count() > only_a.valid_count());
    }
}
