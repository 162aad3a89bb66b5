//! Surface extraction from the occupancy map and mesh-to-cloud accuracy.

mod tables;

use std::collections::HashMap;

use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{Frame, PointCloud, Vec3};
use crate::map::{OccupancyMap, VoxelIndex};
use tables::{EDGE_TABLE, TRIANGLE_TABLE};

/// Default surface sampling density, points per m².
pub const DEFAULT_SAMPLE_DENSITY: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Undirected edge → number of incident triangles.
    pub fn edge_valence(&self) -> HashMap<(u32, u32), usize> {
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        !self.is_empty() && self.edge_valence().values().all(|&n| n == 2)
    }

    /// V − E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|u| **u).count() as i64;
        v - self.edge_valence().len() as i64 + self.triangles.len() as i64
    }
}

/// Cell corner offsets, Bourke numbering.
const CORNERS: [[i64; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Corner pairs per edge.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Extracts the log-odds 0 isosurface over cells whose eight corners (voxel
/// centres) are all observed. Cells touching unknown voxels emit nothing.
pub fn marching_cubes(map: &OccupancyMap) -> TriMesh {
    let mut mesh = TriMesh::default();
    let mut vertex_of: HashMap<(VoxelIndex, u8), u32> = HashMap::new();
    let mut values = [0f32; 8];

    'cells: for (base, _) in map.observed_voxels() {
        let mut cube = 0usize;
        for (k, off) in CORNERS.iter().enumerate() {
            let idx = [base[0] + off[0], base[1] + off[1], base[2] + off[2]];
            match map.get(idx) {
                Some(l) => values[k] = l,
                None => continue 'cells,
            }
            if values[k] <= 0.0 {
                cube |= 1 << k;
            }
        }
        if EDGE_TABLE[cube] == 0 {
            continue;
        }
        let mut edge_vertex = [u32::MAX; 12];
        for (e, &(a, b)) in EDGES.iter().enumerate() {
            if EDGE_TABLE[cube] >> e & 1 == 0 {
                continue;
            }
            let (ca, cb) = (CORNERS[a], CORNERS[b]);
            let axis = (0..3).find(|&i| ca[i] != cb[i]).unwrap() as u8;
            let lo = if ca[axis as usize] < cb[axis as usize] { ca } else { cb };
            let key = ([base[0] + lo[0], base[1] + lo[1], base[2] + lo[2]], axis);
            edge_vertex[e] = *vertex_of.entry(key).or_insert_with(|| {
                let pa = map.center_of([base[0] + ca[0], base[1] + ca[1], base[2] + ca[2]]);
                let pb = map.center_of([base[0] + cb[0], base[1] + cb[1], base[2] + cb[2]]);
                let (va, vb) = (values[a] as f64, values[b] as f64);
                let t = if va == vb { 0.5 } else { va / (va - vb) };
                mesh.vertices.push(pa + (pb - pa) * t);
                (mesh.vertices.len() - 1) as u32
            });
        }
        for tri in TRIANGLE_TABLE[cube].chunks(3) {
            if tri[0] < 0 {
                break;
            }
            let t = [0, 1, 2].map(|k| edge_vertex[tri[k] as usize]);
            let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
            if (b - a).cross(&(c - a)).norm_squared() > 0.0 {
                mesh.triangles.push(t);
            }
        }
    }
    mesh
}

/// Area-weighted uniform surface sampling, `round(density · area)` points.
pub fn sample_mesh(mesh: &TriMesh, density: f64, seed: u64) -> Result<PointCloud> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sample density must be positive, got {density}"
        )));
    }
    if mesh.is_empty() {
        return Ok(PointCloud::empty(Frame::World));
    }
    let mut cdf = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cdf.push(total);
    }
    let n = (density * total).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let x = rng.random::<f64>() * total;
            let t = cdf.partition_point(|c| *c <= x).min(cdf.len() - 1);
            let [a, b, c] = mesh.triangle(t);
            let r1 = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect();
    Ok(PointCloud::new(points, Frame::World))
}

/// Mean distance from each sample to its nearest ground-truth point.
pub fn mesh_accuracy(samples: &PointCloud, gt: &PointCloud) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("accuracy samples"));
    }
    if gt.is_empty() {
        return Err(Error::EmptyInput("ground-truth cloud"));
    }
    let nearest = NearestCloud::new(gt);
    let sum: f64 = samples.points.iter().map(|p| nearest.distance(p)).sum();
    Ok(sum / samples.len() as f64)
}

/// Nearest-neighbour index over a point cloud.
pub struct NearestCloud {
    tree: ImmutableKdTree<f64, u32, 3, 32>,
}

impl NearestCloud {
    pub fn new(cloud: &PointCloud) -> Self {
        let pts: Vec<[f64; 3]> = cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect();
        Self {
            tree: ImmutableKdTree::new_from_slice(&pts),
        }
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        self.tree
            .nearest_one::<SquaredEuclidean>(&[p.x, p.y, p.z])
            .distance
            .sqrt()
    }
}
