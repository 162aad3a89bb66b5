use std::collections::HashSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::geom::{PointCloud, Pose, Vec3};
use crate::map::{traverse, OccupancyMap, VoxelIndex, VoxelState};
use crate::SensorModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FreeSpaceReport {
    /// Mean surface-sample distance to the ground-truth cloud, metres.
    pub recon_error: f64,
    /// Volume occupied in both maps, m³.
    pub completeness_vol: f64,
    /// Volume free in both maps, m³.
    pub correct_free: f64,
    /// Percent of reconstructed free voxels not free in the ground truth.
    pub incorrect_free: f64,
    /// False when the reconstruction has no free voxels.
    pub incorrect_defined: bool,
}

impl FreeSpaceReport {
    pub fn csv_header() -> Vec<String> {
        ["recon_error", "completeness_vol", "correct_free", "incorrect_free", "incorrect_defined"]
            .map(String::from)
            .to_vec()
    }

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.recon_error.to_string(),
            self.completeness_vol.to_string(),
            self.correct_free.to_string(),
            self.incorrect_free.to_string(),
            self.incorrect_defined.to_string(),
        ]
    }
}

/// Dense bitsets are used up to this many cells; larger extents fall back
/// to hash sets.
const DENSE_LIMIT: i64 = 1 << 30;

/// Ground-truth map by ray casting from every pose to every cloud point
/// within `max_range`. Endpoint voxels saturate occupied; voxels crossed
/// before the endpoint saturate free unless some ray ended in them.
pub fn build_gt_map(
    gt_cloud: &PointCloud,
    sensor_poses: &[Pose],
    params: &SensorModelParams,
    voxel_size: f64,
) -> Result<OccupancyMap> {
    if sensor_poses.is_empty() {
        return Err(Error::EmptyInput("ground-truth sensor poses"));
    }
    let mut map = OccupancyMap::new(voxel_size)?;
    let rays: Vec<(usize, usize)> = (0..sensor_poses.len())
        .flat_map(|p| (0..gt_cloud.len()).map(move |i| (p, i)))
        .filter(|&(p, i)| {
            (gt_cloud.points[i] - sensor_poses[p].translation).norm() <= params.max_range
        })
        .collect();
    if rays.is_empty() {
        return Ok(map);
    }

    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for &(p, i) in &rays {
        for v in [map.index_of(&sensor_poses[p].translation), map.index_of(&gt_cloud.points[i])] {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a] - 1);
                hi[a] = hi[a].max(v[a] + 1);
            }
        }
    }
    let dims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let cells = dims[0].saturating_mul(dims[1]).saturating_mul(dims[2]);

    let (occupied, free) = if cells <= DENSE_LIMIT {
        dense_walk(&map, gt_cloud, sensor_poses, &rays, lo, dims)
    } else {
        sparse_walk(&map, gt_cloud, sensor_poses, &rays)
    };

    let (l_lo, l_hi) = (params.l_min as f32, params.l_max as f32);
    for v in occupied {
        map.set(v, l_hi)?;
    }
    for v in free {
        map.set(v, l_lo)?;
    }
    Ok(map)
}

/// Visits every voxel of the walk except the final one.
fn walk_ray(map: &OccupancyMap, origin: &Vec3, target: &Vec3, mut visit: impl FnMut(VoxelIndex)) {
    let mut prev: Option<VoxelIndex> = None;
    traverse(map.anchor(), map.voxel_size(), origin, &(target - origin), |v| {
        if let Some(p) = prev.replace(v) {
            visit(p)
        }
    });
}

/// Sorted occupied and free voxel lists from bitsets over the bounding box.
fn dense_walk(
    map: &OccupancyMap,
    cloud: &PointCloud,
    poses: &[Pose],
    rays: &[(usize, usize)],
    lo: VoxelIndex,
    dims: [i64; 3],
) -> (Vec<VoxelIndex>, Vec<VoxelIndex>) {
    let cells = (dims[0] * dims[1] * dims[2]) as usize;
    let words = cells.div_ceil(64);
    let linear = |v: VoxelIndex| -> Option<usize> {
        let r = [v[0] - lo[0], v[1] - lo[1], v[2] - lo[2]];
        (0..3)
            .all(|a| r[a] >= 0 && r[a] < dims[a])
            .then(|| ((r[0] * dims[1] + r[1]) * dims[2] + r[2]) as usize)
    };
    let mut occ = vec![0u64; words];
    for &(_, i) in rays {
        let k = linear(map.index_of(&cloud.points[i])).expect("endpoint inside bounds");
        occ[k / 64] |= 1 << (k % 64);
    }
    let free: Vec<AtomicU64> = (0..words).map(|_| AtomicU64::new(0)).collect();
    rays.par_iter().for_each(|&(p, i)| {
        walk_ray(map, &poses[p].translation, &cloud.points[i], |v| {
            let k = linear(v).expect("walk stays inside the endpoint box");
            free[k / 64].fetch_or(1 << (k % 64), Ordering::Relaxed);
        });
    });
    let unlinear = |k: usize| -> VoxelIndex {
        let k = k as i64;
        let z = k % dims[2];
        let y = (k / dims[2]) % dims[1];
        let x = k / (dims[1] * dims[2]);
        [x + lo[0], y + lo[1], z + lo[2]]
    };
    let collect = |bits: &mut dyn Iterator<Item = u64>, skip: &[u64]| -> Vec<VoxelIndex> {
        let mut out = Vec::new();
        for (w, (mut word, mask)) in bits.zip(skip).enumerate() {
            word &= !mask;
            while word != 0 {
                let b = word.trailing_zeros() as usize;
                out.push(unlinear(w * 64 + b));
                word &= word - 1;
            }
        }
        out
    };
    let none = vec![0u64; words];
    let free_list = collect(&mut free.into_iter().map(AtomicU64::into_inner), &occ);
    let occupied = collect(&mut occ.iter().copied(), &none);
    (occupied, free_list)
}

fn sparse_walk(
    map: &OccupancyMap,
    cloud: &PointCloud,
    poses: &[Pose],
    rays: &[(usize, usize)],
) -> (Vec<VoxelIndex>, Vec<VoxelIndex>) {
    let occupied: HashSet<VoxelIndex> = rays.iter().map(|&(_, i)| map.index_of(&cloud.points[i])).collect();
    let free: HashSet<VoxelIndex> = rays
        .par_iter()
        .fold(HashSet::new, |mut set, &(p, i)| {
            walk_ray(map, &poses[p].translation, &cloud.points[i], |v| {
                if !occupied.contains(&v) {
                    set.insert(v);
                }
            });
            set
        })
        .reduce(HashSet::new, |mut a, b| {
            a.extend(b);
            a
        });
    let mut occupied: Vec<_> = occupied.into_iter().collect();
    occupied.sort_unstable();
    let mut free: Vec<_> = free.into_iter().collect();
    free.sort_unstable();
    (occupied, free)
}

/// Compares a reconstruction against a ground-truth map on the same
/// lattice.
pub fn free_space_report(recon: &OccupancyMap, gt: &OccupancyMap, mesh_err: f64) -> Result<FreeSpaceReport> {
    let shift = gt.index_shift_from(recon)?;
    let mut free = 0usize;
    let mut correct = 0usize;
    let mut both_occupied = 0usize;
    for (idx, l) in recon.observed_voxels() {
        let g = gt.state([idx[0] + shift[0], idx[1] + shift[1], idx[2] + shift[2]]);
        match VoxelState::from_log_odds(Some(l)) {
            VoxelState::Free => {
                free += 1;
                if g == VoxelState::Free {
                    correct += 1;
                }
            }
            VoxelState::Occupied if g == VoxelState::Occupied => both_occupied += 1,
            _ => {}
        }
    }
    let v = recon.voxel_size().powi(3);
    Ok(FreeSpaceReport {
        recon_error: mesh_err,
        completeness_vol: both_occupied as f64 * v,
        correct_free: correct as f64 * v,
        incorrect_free: if free > 0 {
            100.0 * (free - correct) as f64 / free as f64
        } else {
            0.0
        },
        incorrect_defined: free > 0,
    })
}
