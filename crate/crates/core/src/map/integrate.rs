use super::raycast::traverse;
use super::OccupancyMap;
use crate::completion::{CompletionResult, PixelSource};
use crate::error::Result;
use crate::geom::{Pose, Vec3};
use crate::SensorModelParams;

/// What a single ray observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayMeasurement {
    /// Surface at Euclidean `range` along the ray with std-dev `sigma`.
    Surface { range: f64, sigma: f64 },
    /// Nothing within range: clear free space up to `max_range`.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntegrationStats {
    pub rays_integrated: usize,
    pub rays_rejected: usize,
    pub rays_sky: usize,
    pub rays_over_range: usize,
    pub voxel_updates: usize,
}

impl std::ops::AddAssign for IntegrationStats {
    fn add_assign(&mut self, o: Self) {
        self.rays_integrated += o.rays_integrated;
        self.rays_rejected += o.rays_rejected;
        self.rays_sky += o.rays_sky;
        self.rays_over_range += o.rays_over_range;
        self.voxel_updates += o.voxel_updates;
    }
}

impl OccupancyMap {
    /// Fuses one ray. `direction` must be unit length. Each traversed voxel
    /// is updated at most once, evaluated at its centre's distance from
    /// `origin`. Returns the number of voxel updates.
    pub fn integrate_ray(
        &mut self,
        origin: &Vec3,
        direction: &Vec3,
        measurement: RayMeasurement,
        params: &SensorModelParams,
    ) -> Result<usize> {
        let (lo, hi) = (params.l_min as f32, params.l_max as f32);
        let t_end = match measurement {
            RayMeasurement::Surface { range, .. } => (range * (1.0 + params.k_tau)).min(params.max_range),
            RayMeasurement::Free => params.max_range,
        };
        let mut updates = Vec::new();
        traverse(self.anchor(), self.voxel_size(), origin, &(direction * t_end), |idx| {
            let s = (self.center_of(idx) - origin).norm();
            if s > params.max_range {
                return;
            }
            let l = match measurement {
                RayMeasurement::Surface { range, sigma } => {
                    params.log_odds_update_with_sigma(s - range, range, sigma)
                }
                RayMeasurement::Free => Some(params.l_min),
            };
            if let Some(l) = l {
                updates.push((idx, l as f32));
            }
        });
        for &(idx, l) in &updates {
            self.add(idx, l, lo, hi)?;
        }
        Ok(updates.len())
    }

    /// Fuses every usable pixel of a completion result taken from
    /// `sensor_pose` (world←camera).
    ///
    /// Raw pixels use the sensor noise model at their range. Predicted
    /// pixels whose σ fails the rejection gate are skipped entirely;
    /// accepted ones use their own σ, floored at `sigma_min`. Sky pixels and
    /// pixels beyond `max_range` only clear free space.
    pub fn integrate_depth_image(
        &mut self,
        result: &CompletionResult,
        sensor_pose: &Pose,
        params: &SensorModelParams,
    ) -> Result<IntegrationStats> {
        let mut stats = IntegrationStats::default();
        let image = &result.dense;
        let intr = image.intrinsics;
        let origin = sensor_pose.translation;
        for (u, v, depth) in image.depth.iter() {
            let Some(depth) = *depth else { continue };
            let source = *result.source.get(u, v);
            if source == PixelSource::Invalid {
                continue;
            }
            let ray = intr.ray(u as f64, v as f64);
            let norm = ray.norm();
            let direction = sensor_pose.transform_vector(&(ray / norm));
            let range = depth * norm;

            let measurement = if *result.sky.get(u, v) {
                stats.rays_sky += 1;
                RayMeasurement::Free
            } else {
                let sigma = match source {
                    PixelSource::Predicted => {
                        let sigma_p = image.sigma_at(u, v).unwrap_or_else(|| params.sigma(depth));
                        if params.reject_prediction(depth, sigma_p) {
                            stats.rays_rejected += 1;
                            continue;
                        }
                        sigma_p.max(params.sigma_min)
                    }
                    _ => params.sigma(range),
                };
                if range > params.max_range {
                    stats.rays_over_range += 1;
                    RayMeasurement::Free
                } else {
                    stats.rays_integrated += 1;
                    RayMeasurement::Surface { range, sigma }
                }
            };
            stats.voxel_updates += self.integrate_ray(&origin, &direction, measurement, params)?;
        }
        Ok(stats)
    }
}
