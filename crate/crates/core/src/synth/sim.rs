use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::scene::{trace_ray, Scene};
use crate::completion::SKY_DEPTH;
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, DepthImage, Grid, Pose, Vec3};
use crate::lidar::{LidarPoint, LidarScan};

/// Spinning lidar geometry. Sensor frame: x forward, y left, z up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarModel {
    pub num_rings: u16,
    /// Degrees; ring 0 is the lowest beam.
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub azimuth_steps: u32,
    pub max_range: f64,
    /// Std-dev of additive Gaussian range noise, metres; 0 disables it.
    pub range_noise: f64,
    pub noise_seed: u64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self {
            num_rings: 64,
            elevation_min: -16.6,
            elevation_max: 16.6,
            azimuth_steps: 1024,
            max_range: 120.0,
            range_noise: 0.0,
            noise_seed: 0,
        }
    }
}

impl LidarModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.num_rings >= 1
            && self.azimuth_steps >= 1
            && (self.num_rings == 1 || self.elevation_min < self.elevation_max)
            && self.max_range > 0.0
            && self.range_noise >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid lidar model {self:?}")))
        }
    }

    pub fn elevation_deg(&self, ring: u16) -> f64 {
        if self.num_rings == 1 {
            self.elevation_min
        } else {
            self.elevation_min
                + ring as f64 * (self.elevation_max - self.elevation_min) / (self.num_rings - 1) as f64
        }
    }

    /// Unit beam direction in the sensor frame.
    pub fn beam(&self, ring: u16, step: u32) -> Vec3 {
        let e = self.elevation_deg(ring).to_radians();
        let a = (step as f64 * 360.0 / self.azimuth_steps as f64).to_radians();
        Vec3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
    }
}

/// One ray per (ring, azimuth step). Hits within `max_range` become
/// sensor-frame points stamped with the pose time.
pub fn simulate_lidar(scene: &Scene, model: &LidarModel, pose: &Pose) -> Result<LidarScan> {
    model.validate()?;
    let origin = pose.translation;
    let mut points: Vec<LidarPoint> = (0..model.num_rings)
        .into_par_iter()
        .flat_map_iter(|ring| {
            (0..model.azimuth_steps).filter_map(move |step| {
                let beam = model.beam(ring, step);
                let (_, range) = trace_ray(scene, &origin, &pose.transform_vector(&beam))?;
                (range <= model.max_range).then(|| LidarPoint {
                    position: beam * range,
                    ring,
                    timestamp: pose.timestamp,
                })
            })
        })
        .collect();
    if model.range_noise > 0.0 {
        let noise = Normal::new(0.0, model.range_noise)
            .map_err(|e| Error::InvalidParameter(format!("range noise: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(model.noise_seed);
        for p in &mut points {
            let r = p.position.norm();
            let noisy = (r + noise.sample(&mut rng)).max(1e-3);
            p.position *= noisy / r;
        }
    }
    Ok(LidarScan {
        points,
        num_rings: model.num_rings,
    })
}

/// Dense z-depth image; pixels whose ray misses the scene (or lands beyond
/// `sky_depth`) read `sky_depth`.
pub fn simulate_depth_camera(scene: &Scene, intr: &CameraIntrinsics, pose: &Pose, sky_depth: Option<f64>) -> DepthImage {
    let sky = sky_depth.unwrap_or(SKY_DEPTH);
    let origin = pose.translation;
    let data: Vec<Option<f64>> = (0..intr.pixel_count())
        .into_par_iter()
        .map(|i| {
            let (u, v) = ((i % intr.width as usize) as f64, (i / intr.width as usize) as f64);
            let ray = intr.ray(u, v);
            let norm = ray.norm();
            let dir = pose.transform_vector(&(ray / norm));
            let z = match trace_ray(scene, &origin, &dir) {
                Some((_, t)) => (t / norm).min(sky),
                None => sky,
            };
            Some(z)
        })
        .collect();
    DepthImage {
        intrinsics: *intr,
        depth: Grid::from_vec(intr.width, intr.height, data).expect("pixel count matches"),
        sigma: None,
        pose: *pose,
    }
}
