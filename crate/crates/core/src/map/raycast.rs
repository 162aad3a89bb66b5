use super::{OccupancyMap, VoxelIndex};
use crate::geom::Vec3;

/// Every voxel of `map`'s lattice crossed by the segment
/// `[origin, origin + t_max·direction]`, in traversal order.
pub fn raycast_voxels(map: &OccupancyMap, origin: &Vec3, direction: &Vec3, t_max: f64) -> Vec<VoxelIndex> {
    let mut out = Vec::new();
    traverse(map.anchor(), map.voxel_size(), origin, &(direction * t_max.max(0.0)), |v| {
        out.push(v)
    });
    out
}

/// Grid walk over the segment `origin → origin + delta`. Steps exactly
/// `Σ|last - first|` times so the walk always ends in the endpoint voxel.
pub(crate) fn traverse(
    anchor: Vec3,
    voxel_size: f64,
    origin: &Vec3,
    delta: &Vec3,
    mut visit: impl FnMut(VoxelIndex),
) {
    let start = (origin - anchor) / voxel_size;
    let d = delta / voxel_size;
    let end = start + d;
    let mut cur = [0i64; 3];
    let mut step = [0i64; 3];
    let mut remaining = [0i64; 3];
    let mut t_next = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        cur[a] = start[a].floor() as i64;
        let last = end[a].floor() as i64;
        remaining[a] = (last - cur[a]).abs();
        step[a] = (last - cur[a]).signum();
        if d[a] != 0.0 {
            t_delta[a] = 1.0 / d[a].abs();
            let boundary = if d[a] > 0.0 { cur[a] as f64 + 1.0 } else { cur[a] as f64 };
            t_next[a] = (boundary - start[a]) / d[a];
        }
    }
    visit(cur);
    let mut total: i64 = remaining.iter().sum();
    while total > 0 {
        let mut axis = usize::MAX;
        for a in 0..3 {
            if remaining[a] > 0 && (axis == usize::MAX || t_next[a] < t_next[axis]) {
                axis = a;
            }
        }
        cur[axis] += step[axis];
        t_next[axis] += t_delta[axis];
        remaining[axis] -= 1;
        total -= 1;
        visit(cur);
    }
}
