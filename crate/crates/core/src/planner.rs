//! RRT* restricted to observed free space. The robot is a ball; a state is
//! valid only when every voxel touching the ball is free, so unknown space
//! is never entered.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dt::distance_transform_3d;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::map::{OccupancyMap, VoxelIndex, VoxelState};

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub start: Vec3,
    pub goal: Vec3,
    pub robot_radius: f64,
    pub max_iterations: usize,
    pub step_size: f64,
    pub goal_tolerance: f64,
    pub seed: u64,
    /// Plan in the plane `z = fixed_z` (ground robots).
    pub fixed_z: Option<f64>,
    /// Probability of sampling the goal itself.
    pub goal_bias: f64,
}

impl Default for PlanRequest {
    fn default() -> Self {
        Self {
            start: Vec3::zeros(),
            goal: Vec3::zeros(),
            robot_radius: 0.2,
            max_iterations: 20_000,
            step_size: 0.5,
            goal_tolerance: 0.2,
            seed: 0,
            fixed_z: None,
            goal_bias: 0.05,
        }
    }
}

impl PlanRequest {
    pub fn validate(&self) -> Result<()> {
        let ok = self.robot_radius > 0.0
            && self.max_iterations > 0
            && self.step_size > 0.0
            && self.goal_tolerance >= 0.0
            && (0.0..=1.0).contains(&self.goal_bias)
            && self.start.iter().chain(self.goal.iter()).all(|c| c.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "plan request needs radius > 0, iterations > 0, step > 0, tolerance >= 0, goal bias in [0, 1]: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanStatus {
    Found,
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub status: PlanStatus,
    pub path: Vec<Vec3>,
    /// Sum of segment lengths, metres; infinite when not found.
    pub cost: f64,
    pub tree_size: usize,
}

impl PlanResult {
    fn not_found(reason: impl Into<String>, tree_size: usize) -> Self {
        Self {
            status: PlanStatus::NotFound(reason.into()),
            path: Vec::new(),
            cost: f64::INFINITY,
            tree_size,
        }
    }

    pub fn found(&self) -> bool {
        self.status == PlanStatus::Found
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z\n");
        for p in &self.path {
            out.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Squared distance from `p` to the axis-aligned box `[lo, hi]`.
fn box_distance2(p: &Vec3, lo: &Vec3, hi: &Vec3) -> f64 {
    (0..3)
        .map(|a| {
            let d = (lo[a] - p[a]).max(0.0).max(p[a] - hi[a]);
            d * d
        })
        .sum()
}

fn ball_voxels<'a>(map: &'a OccupancyMap, p: &Vec3, radius: f64) -> impl Iterator<Item = VoxelIndex> + 'a {
    let lo = map.index_of(&(p - Vec3::repeat(radius)));
    let hi = map.index_of(&(p + Vec3::repeat(radius)));
    let s = map.voxel_size();
    let p = *p;
    (lo[2]..=hi[2])
        .flat_map(move |z| (lo[1]..=hi[1]).flat_map(move |y| (lo[0]..=hi[0]).map(move |x| [x, y, z])))
        .filter(move |&idx| {
            let c = map.corner_of(idx);
            box_distance2(&p, &c, &(c + Vec3::repeat(s))) <= radius * radius
        })
}

/// True when every voxel whose box meets the closed ball `B(p, radius)` is
/// free.
pub fn is_state_free(map: &OccupancyMap, p: &Vec3, radius: f64) -> bool {
    ball_voxels(map, p, radius).all(|idx| map.state(idx) == VoxelState::Free)
}

/// Dense snapshot of a map's free voxels for fast collision queries.
/// Agrees with [`is_state_free`] on the map it was built from.
pub struct CollisionGrid {
    map: OccupancyMap,
    min: VoxelIndex,
    dims: [usize; 3],
    free: Vec<bool>,
    /// Squared distance (voxels) from each cell centre to the nearest
    /// non-free cell centre.
    clearance2: Vec<f64>,
    free_count: usize,
}

impl CollisionGrid {
    pub fn new(map: &OccupancyMap) -> Option<Self> {
        let (lo, hi) = map.bounds_of(VoxelState::Free)?;
        // One blocked layer of padding makes the outside count as blocked.
        let min = [lo[0] - 1, lo[1] - 1, lo[2] - 1];
        let dims = [0, 1, 2].map(|a| (hi[a] - lo[a] + 3) as usize);
        let mut free = vec![false; dims[0] * dims[1] * dims[2]];
        let mut free_count = 0;
        for (idx, l) in map.observed_voxels() {
            if l < 0.0 {
                let i = (idx[0] - min[0]) as usize
                    + dims[0] * ((idx[1] - min[1]) as usize + dims[1] * (idx[2] - min[2]) as usize);
                free[i] = true;
                free_count += 1;
            }
        }
        let blocked: Vec<bool> = free.iter().map(|f| !f).collect();
        let clearance2 = distance_transform_3d(&blocked, dims);
        Some(Self {
            map: map.clone(),
            min,
            dims,
            free,
            clearance2,
            free_count,
        })
    }

    fn cell(&self, idx: VoxelIndex) -> Option<usize> {
        let mut i = 0;
        let mut stride = 1;
        for a in 0..3 {
            let o = idx[a] - self.min[a];
            if o < 0 || o >= self.dims[a] as i64 {
                return None;
            }
            i += o as usize * stride;
            stride *= self.dims[a];
        }
        Some(i)
    }

    fn voxel_free(&self, idx: VoxelIndex) -> bool {
        self.cell(idx).is_some_and(|i| self.free[i])
    }

    pub fn is_free(&self, p: &Vec3, radius: f64) -> bool {
        let Some(i) = self.cell(self.map.index_of(p)) else {
            return false;
        };
        if !self.free[i] {
            return false;
        }
        // Any blocked box is at least (clearance - √3) voxels from p.
        let safe = self.clearance2[i].sqrt() - 3f64.sqrt();
        if safe * self.map.voxel_size() > radius {
            return true;
        }
        ball_voxels(&self.map, p, radius).all(|idx| self.voxel_free(idx))
    }

    /// Samples the segment at spacing ≤ half a voxel, endpoints included.
    pub fn is_edge_free(&self, a: &Vec3, b: &Vec3, radius: f64) -> bool {
        let len = (b - a).norm();
        let n = (len / (0.5 * self.map.voxel_size())).ceil().max(1.0) as usize;
        (0..=n).all(|i| self.is_free(&(a + (b - a) * (i as f64 / n as f64)), radius))
    }

    /// World-space bounds `(lo, hi)` of the free voxels.
    pub fn free_bounds(&self) -> (Vec3, Vec3) {
        let lo = self.map.corner_of([self.min[0] + 1, self.min[1] + 1, self.min[2] + 1]);
        let hi = self.map.corner_of([
            self.min[0] + self.dims[0] as i64 - 1,
            self.min[1] + self.dims[1] as i64 - 1,
            self.min[2] + self.dims[2] as i64 - 1,
        ]);
        (lo, hi)
    }

    pub fn free_volume(&self) -> f64 {
        self.free_count as f64 * self.map.voxel_size().powi(3)
    }

    /// Free area of the horizontal voxel slice containing `z`, m².
    pub fn free_area_at(&self, z: f64) -> f64 {
        let k = self.map.index_of(&Vec3::new(0.0, 0.0, z))[2] - self.min[2];
        if k < 0 || k >= self.dims[2] as i64 {
            return 0.0;
        }
        let plane = self.dims[0] * self.dims[1];
        let start = k as usize * plane;
        let n = self.free[start..start + plane].iter().filter(|f| **f).count();
        n as f64 * self.map.voxel_size().powi(2)
    }
}

struct Node {
    p: Vec3,
    parent: Option<usize>,
    cost: f64,
    children: Vec<usize>,
}

/// RRT* over the map's free space.
pub fn plan_rrt_star(map: &OccupancyMap, req: &PlanRequest) -> Result<PlanResult> {
    req.validate()?;
    let Some(grid) = CollisionGrid::new(map) else {
        return Ok(PlanResult::not_found("map has no free space", 0));
    };
    Ok(plan_with_grid(&grid, req))
}

pub fn plan_with_grid(grid: &CollisionGrid, req: &PlanRequest) -> PlanResult {
    let project = |p: Vec3| match req.fixed_z {
        Some(z) => Vec3::new(p.x, p.y, z),
        None => p,
    };
    let start = project(req.start);
    let goal = project(req.goal);
    let r = req.robot_radius;
    if !grid.is_free(&start, r) {
        return PlanResult::not_found("start is not in free space", 0);
    }
    if !grid.is_free(&goal, r) {
        return PlanResult::not_found("goal is not in free space", 0);
    }
    if (goal - start).norm() <= req.goal_tolerance {
        return PlanResult {
            status: PlanStatus::Found,
            path: vec![start],
            cost: 0.0,
            tree_size: 1,
        };
    }

    let (lo, hi) = grid.free_bounds();
    let (dim, measure, unit_ball) = match req.fixed_z {
        Some(z) => (2.0, grid.free_area_at(z), PI),
        None => (3.0, grid.free_volume(), 4.0 / 3.0 * PI),
    };
    let gamma = 1.1 * 2.0 * (1.0f64 + 1.0 / dim).powf(1.0 / dim) * (measure / unit_ball).powf(1.0 / dim);

    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let mut nodes = vec![Node {
        p: start,
        parent: None,
        cost: 0.0,
        children: Vec::new(),
    }];
    // Tree nodes with a free straight edge to the goal.
    let mut goal_links: Vec<usize> = Vec::new();

    for _ in 0..req.max_iterations {
        let bias: f64 = rng.random();
        let x: f64 = rng.random();
        let y: f64 = rng.random();
        let z: f64 = rng.random();
        let sample = if bias < req.goal_bias {
            goal
        } else {
            project(Vec3::new(
                lo.x + x * (hi.x - lo.x),
                lo.y + y * (hi.y - lo.y),
                lo.z + z * (hi.z - lo.z),
            ))
        };

        let nearest = (0..nodes.len())
            .min_by(|&a, &b| {
                (nodes[a].p - sample)
                    .norm_squared()
                    .total_cmp(&(nodes[b].p - sample).norm_squared())
            })
            .unwrap();
        let from = nodes[nearest].p;
        let dist = (sample - from).norm();
        if dist == 0.0 {
            continue;
        }
        let new = if dist > req.step_size {
            from + (sample - from) * (req.step_size / dist)
        } else {
            sample
        };
        if !grid.is_free(&new, r) {
            continue;
        }

        let n = nodes.len() as f64 + 1.0;
        let radius = (gamma * (n.ln() / n).powf(1.0 / dim)).min(req.step_size);
        let mut near: Vec<(f64, usize)> = (0..nodes.len())
            .filter_map(|i| {
                let d = (nodes[i].p - new).norm();
                (d <= radius || i == nearest).then(|| (nodes[i].cost + d, i))
            })
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let Some(&(cost, parent)) = near
            .iter()
            .find(|(_, i)| grid.is_edge_free(&nodes[*i].p, &new, r))
        else {
            continue;
        };
        let id = nodes.len();
        nodes.push(Node {
            p: new,
            parent: Some(parent),
            cost,
            children: Vec::new(),
        });
        nodes[parent].children.push(id);

        for &(_, i) in &near {
            if i == parent {
                continue;
            }
            let d = (nodes[i].p - new).norm();
            let candidate = cost + d;
            if candidate < nodes[i].cost && grid.is_edge_free(&new, &nodes[i].p, r) {
                let old_parent = nodes[i].parent.expect("only the root lacks a parent");
                nodes[old_parent].children.retain(|&c| c != i);
                nodes[i].parent = Some(id);
                nodes[id].children.push(i);
                let delta = nodes[i].cost - candidate;
                let mut stack = vec![i];
                while let Some(k) = stack.pop() {
                    nodes[k].cost -= delta;
                    stack.extend(nodes[k].children.iter().copied());
                }
            }
        }

        if (new - goal).norm() <= req.goal_tolerance && grid.is_edge_free(&new, &goal, r) {
            goal_links.push(id);
        }
    }

    let best = goal_links
        .iter()
        .map(|&i| (nodes[i].cost + (nodes[i].p - goal).norm(), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let Some((cost, mut at)) = best else {
        return PlanResult::not_found(
            format!("no path within {} iterations", req.max_iterations),
            nodes.len(),
        );
    };
    let mut path = vec![goal];
    if nodes[at].p != goal {
        path.push(nodes[at].p);
    }
    while let Some(p) = nodes[at].parent {
        path.push(nodes[p].p);
        at = p;
    }
    path.reverse();
    PlanResult {
        status: PlanStatus::Found,
        path,
        cost,
        tree_size: nodes.len(),
    }
}
