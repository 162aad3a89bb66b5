//! Octree occupancy map storing clamped log-odds per voxel.
//!
//! Voxel `i` covers `[anchor + i·s, anchor + (i+1)·s)` on each axis. Storage
//! is a fixed-depth octree whose leaves are dense 8³ blocks; interior nodes
//! are allocated on first write and the root grows by re-rooting when a
//! write falls outside it.

mod integrate;
mod raycast;
mod serialize;

pub use integrate::{IntegrationStats, RayMeasurement};
pub use raycast::raycast_voxels;
pub(crate) use raycast::traverse;

use crate::error::{Error, Result};
use crate::geom::{Frame, PointCloud, Vec3};

/// Integer voxel coordinates.
pub type VoxelIndex = [i64; 3];

/// Default voxel edge, metres.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.065;

const BLOCK_BITS: u32 = 3;
const BLOCK_SIDE: i64 = 1 << BLOCK_BITS;
const BLOCK_VOXELS: usize = 1 << (3 * BLOCK_BITS);
const MIN_DEPTH: u32 = BLOCK_BITS + 1;
const MAX_DEPTH: u32 = 21;
const NULL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VoxelState {
    Free,
    Unknown,
    Occupied,
}

impl VoxelState {
    pub fn from_log_odds(observed: Option<f32>) -> Self {
        match observed {
            Some(l) if l < 0.0 => VoxelState::Free,
            Some(l) if l > 0.0 => VoxelState::Occupied,
            _ => VoxelState::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VolumeStats {
    pub free_m3: f64,
    pub occupied_m3: f64,
}

#[derive(Clone)]
struct Block {
    log_odds: [f32; BLOCK_VOXELS],
    observed: [u64; BLOCK_VOXELS / 64],
}

impl Block {
    fn new() -> Self {
        Self {
            log_odds: [0.0; BLOCK_VOXELS],
            observed: [0; BLOCK_VOXELS / 64],
        }
    }

    fn is_observed(&self, i: usize) -> bool {
        self.observed[i / 64] >> (i % 64) & 1 == 1
    }

    fn get(&self, i: usize) -> Option<f32> {
        self.is_observed(i).then(|| self.log_odds[i])
    }
}

#[derive(Clone)]
pub struct OccupancyMap {
    voxel_size: f64,
    anchor: Vec3,
    tree_depth: u32,
    root_min: VoxelIndex,
    root: u32,
    nodes: Vec<[u32; 8]>,
    blocks: Vec<Block>,
    /// Block base index per block, parallel to `blocks`.
    block_base: Vec<VoxelIndex>,
}

impl std::fmt::Debug for OccupancyMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OccupancyMap")
            .field("voxel_size", &self.voxel_size)
            .field("anchor", &self.anchor)
            .field("tree_depth", &self.tree_depth)
            .field("root_min", &self.root_min)
            .field("blocks", &self.blocks.len())
            .finish()
    }
}

impl OccupancyMap {
    /// Empty map anchored at the world origin.
    pub fn new(voxel_size: f64) -> Result<Self> {
        Self::with_anchor(voxel_size, Vec3::zeros())
    }

    pub fn with_anchor(voxel_size: f64, anchor: Vec3) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "voxel_size must be positive, got {voxel_size}"
            )));
        }
        if !anchor.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("map anchor must be finite".into()));
        }
        let half = 1 << (MIN_DEPTH - 1);
        Ok(Self {
            voxel_size,
            anchor,
            tree_depth: MIN_DEPTH,
            root_min: [-half; 3],
            root: 0,
            nodes: vec![[NULL; 8]],
            blocks: Vec::new(),
            block_base: Vec::new(),
        })
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    /// World position of voxel index (0,0,0)'s minimum corner.
    pub fn anchor(&self) -> Vec3 {
        self.anchor
    }

    /// World position of the root cube's minimum corner.
    pub fn origin(&self) -> Vec3 {
        self.corner_of(self.root_min)
    }

    pub fn tree_depth(&self) -> u32 {
        self.tree_depth
    }

    /// Voxel edge count of the root cube.
    pub fn root_side(&self) -> i64 {
        1 << self.tree_depth
    }

    pub fn root_min(&self) -> VoxelIndex {
        self.root_min
    }

    pub fn index_of(&self, p: &Vec3) -> VoxelIndex {
        let g = (p - self.anchor) / self.voxel_size;
        [g.x.floor() as i64, g.y.floor() as i64, g.z.floor() as i64]
    }

    pub fn corner_of(&self, idx: VoxelIndex) -> Vec3 {
        self.anchor + Vec3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64) * self.voxel_size
    }

    pub fn center_of(&self, idx: VoxelIndex) -> Vec3 {
        self.anchor
            + Vec3::new(
                idx[0] as f64 + 0.5,
                idx[1] as f64 + 0.5,
                idx[2] as f64 + 0.5,
            ) * self.voxel_size
    }

    /// Index offset `k` such that voxel `i` of `other` coincides with voxel
    /// `i + k` of `self`. Errors unless both maps share voxel size and a
    /// lattice.
    pub fn index_shift_from(&self, other: &OccupancyMap) -> Result<VoxelIndex> {
        if (self.voxel_size - other.voxel_size).abs() > 1e-12 * self.voxel_size {
            return Err(Error::GridMismatch(format!(
                "voxel sizes differ: {} vs {}",
                self.voxel_size, other.voxel_size
            )));
        }
        let g = (other.anchor - self.anchor) / self.voxel_size;
        let mut shift = [0i64; 3];
        for a in 0..3 {
            let r = g[a].round();
            if (g[a] - r).abs() > 1e-6 {
                return Err(Error::GridMismatch(format!(
                    "map lattices are offset by a fractional voxel ({:?})",
                    g
                )));
            }
            shift[a] = r as i64;
        }
        Ok(shift)
    }

    fn contains_index(&self, idx: VoxelIndex) -> bool {
        let side = self.root_side();
        (0..3).all(|a| idx[a] >= self.root_min[a] && idx[a] < self.root_min[a] + side)
    }

    fn interior_levels(&self) -> u32 {
        self.tree_depth - BLOCK_BITS
    }

    fn octant(local: VoxelIndex, shift: u32) -> usize {
        ((local[0] >> shift & 1) | (local[1] >> shift & 1) << 1 | (local[2] >> shift & 1) << 2) as usize
    }

    fn voxel_offset(local: VoxelIndex) -> usize {
        let m = BLOCK_SIDE - 1;
        ((local[0] & m) | (local[1] & m) << BLOCK_BITS | (local[2] & m) << (2 * BLOCK_BITS)) as usize
    }

    fn locate(&self, idx: VoxelIndex) -> Option<(usize, usize)> {
        if !self.contains_index(idx) {
            return None;
        }
        let local = [
            idx[0] - self.root_min[0],
            idx[1] - self.root_min[1],
            idx[2] - self.root_min[2],
        ];
        let levels = self.interior_levels();
        let mut node = self.root;
        for level in 0..levels {
            let child = self.nodes[node as usize][Self::octant(local, self.tree_depth - 1 - level)];
            if child == NULL {
                return None;
            }
            node = child;
        }
        Some((node as usize, Self::voxel_offset(local)))
    }

    fn grow_to(&mut self, idx: VoxelIndex) -> Result<()> {
        while !self.contains_index(idx) {
            if self.tree_depth >= MAX_DEPTH {
                return Err(Error::InvalidParameter(format!(
                    "voxel {idx:?} lies beyond the largest supported map extent"
                )));
            }
            let side = self.root_side();
            let mut octant = 0;
            let mut new_min = self.root_min;
            for a in 0..3 {
                if idx[a] < self.root_min[a] {
                    new_min[a] -= side;
                    octant |= 1 << a;
                }
            }
            let mut children = [NULL; 8];
            children[octant] = self.root;
            self.nodes.push(children);
            self.root = (self.nodes.len() - 1) as u32;
            self.root_min = new_min;
            self.tree_depth += 1;
        }
        Ok(())
    }

    fn locate_or_alloc(&mut self, idx: VoxelIndex) -> Result<(usize, usize)> {
        self.grow_to(idx)?;
        let local = [
            idx[0] - self.root_min[0],
            idx[1] - self.root_min[1],
            idx[2] - self.root_min[2],
        ];
        let levels = self.interior_levels();
        let mut node = self.root as usize;
        for level in 0..levels {
            let oct = Self::octant(local, self.tree_depth - 1 - level);
            let mut child = self.nodes[node][oct];
            if child == NULL {
                if level + 1 == levels {
                    self.blocks.push(Block::new());
                    let m = !(BLOCK_SIDE - 1);
                    self.block_base.push([idx[0] & m, idx[1] & m, idx[2] & m]);
                    child = (self.blocks.len() - 1) as u32;
                } else {
                    self.nodes.push([NULL; 8]);
                    child = (self.nodes.len() - 1) as u32;
                }
                self.nodes[node][oct] = child;
            }
            node = child as usize;
        }
        Ok((node, Self::voxel_offset(local)))
    }

    /// Stored log-odds of an observed voxel.
    pub fn get(&self, idx: VoxelIndex) -> Option<f32> {
        self.locate(idx).and_then(|(b, i)| self.blocks[b].get(i))
    }

    pub fn state(&self, idx: VoxelIndex) -> VoxelState {
        VoxelState::from_log_odds(self.get(idx))
    }

    /// State and log-odds (0 when unknown) of the voxel containing `p`.
    pub fn query(&self, p: &Vec3) -> (VoxelState, f64) {
        let l = self.get(self.index_of(p));
        (VoxelState::from_log_odds(l), l.unwrap_or(0.0) as f64)
    }

    /// Overwrites a voxel and marks it observed.
    pub fn set(&mut self, idx: VoxelIndex, log_odds: f32) -> Result<()> {
        let (b, i) = self.locate_or_alloc(idx)?;
        let block = &mut self.blocks[b];
        block.log_odds[i] = log_odds;
        block.observed[i / 64] |= 1 << (i % 64);
        Ok(())
    }

    /// Adds `delta` in f32 and clamps to `[lo, hi]`, marking the voxel
    /// observed.
    pub fn add(&mut self, idx: VoxelIndex, delta: f32, lo: f32, hi: f32) -> Result<()> {
        let (b, i) = self.locate_or_alloc(idx)?;
        let block = &mut self.blocks[b];
        block.log_odds[i] = (block.log_odds[i] + delta).clamp(lo, hi);
        block.observed[i / 64] |= 1 << (i % 64);
        Ok(())
    }

    /// All observed voxels, sorted by index.
    pub fn observed_voxels(&self) -> Vec<(VoxelIndex, f32)> {
        let mut out = Vec::new();
        for (block, base) in self.blocks.iter().zip(&self.block_base) {
            for (w, word) in block.observed.iter().enumerate() {
                let mut bits = *word;
                while bits != 0 {
                    let i = w * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let m = (BLOCK_SIDE - 1) as usize;
                    let idx = [
                        base[0] + (i & m) as i64,
                        base[1] + (i >> BLOCK_BITS & m) as i64,
                        base[2] + (i >> (2 * BLOCK_BITS) & m) as i64,
                    ];
                    out.push((idx, block.log_odds[i]));
                }
            }
        }
        out.sort_unstable_by_key(|(idx, _)| *idx);
        out
    }

    pub fn observed_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.observed.iter().map(|w| w.count_ones() as usize).sum::<usize>())
            .sum()
    }

    pub fn count_state(&self, state: VoxelState) -> usize {
        self.blocks
            .iter()
            .map(|b| {
                (0..BLOCK_VOXELS)
                    .filter(|&i| VoxelState::from_log_odds(b.get(i)) == state)
                    .count()
            })
            .sum()
    }

    /// Volume of allocated leaf blocks, m³.
    pub fn allocated_m3(&self) -> f64 {
        self.blocks.len() as f64 * BLOCK_VOXELS as f64 * self.voxel_size.powi(3)
    }

    pub fn classify_volumes(&self) -> VolumeStats {
        let v = self.voxel_size.powi(3);
        VolumeStats {
            free_m3: self.count_state(VoxelState::Free) as f64 * v,
            occupied_m3: self.count_state(VoxelState::Occupied) as f64 * v,
        }
    }

    /// Centres of occupied voxels, world frame.
    pub fn export_occupied_cloud(&self) -> PointCloud {
        PointCloud::new(
            self.observed_voxels()
                .into_iter()
                .filter(|(_, l)| *l > 0.0)
                .map(|(idx, _)| self.center_of(idx))
                .collect(),
            Frame::World,
        )
    }

    /// Index bounding box `(min, max)` inclusive of voxels in `state`.
    pub fn bounds_of(&self, state: VoxelState) -> Option<(VoxelIndex, VoxelIndex)> {
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        let mut any = false;
        for (idx, l) in self.observed_voxels() {
            if VoxelState::from_log_odds(Some(l)) == state {
                any = true;
                for a in 0..3 {
                    lo[a] = lo[a].min(idx[a]);
                    hi[a] = hi[a].max(idx[a]);
                }
            }
        }
        any.then_some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn fresh_map() {
        let map = OccupancyMap::new(DEFAULT_VOXEL_SIZE).unwrap();
        assert_eq!(map.query(&Vec3::new(1.0, -2.0, 3.0)), (VoxelState::Unknown, 0.0));
        assert_eq!(map.classify_volumes(), VolumeStats::default());
        assert!(map.export_occupied_cloud().is_empty());
        assert!(OccupancyMap::new(0.0).is_err());
        assert!(OccupancyMap::new(-1.0).is_err());
    }

    #[test]
    fn single_free_voxel_volume() {
        let mut map = OccupancyMap::new(0.065).unwrap();
        map.set([3, -4, 5], -1.0).unwrap();
        let v = map.classify_volumes();
        assert!((v.free_m3 - 0.065f64.powi(3)).abs() < 1e-15);
        assert!((v.free_m3 - 2.746e-4).abs() < 1e-7);
        assert_eq!(v.occupied_m3, 0.0);
    }

    #[test]
    fn occupied_cloud_centres() {
        let mut map = OccupancyMap::new(0.065).unwrap();
        map.set([0, 0, 0], 2.0).unwrap();
        let cloud = map.export_occupied_cloud();
        assert_eq!(cloud.len(), 1);
        assert!((cloud.points[0] - Vec3::new(0.0325, 0.0325, 0.0325)).norm() < 1e-15);
        map.set([1, 0, 0], 1.0).unwrap();
        map.set([2, 0, 0], -1.0).unwrap();
        map.set([3, 0, 0], 0.0).unwrap();
        assert_eq!(map.export_occupied_cloud().len(), map.count_state(VoxelState::Occupied));
        assert_eq!(map.count_state(VoxelState::Occupied), 2);
        assert_eq!(map.count_state(VoxelState::Unknown), BLOCK_VOXELS - 3);
    }

    #[test]
    fn zero_log_odds_is_unknown_but_observed() {
        let mut map = OccupancyMap::new(0.1).unwrap();
        map.set([0, 0, 0], 0.0).unwrap();
        assert_eq!(map.state([0, 0, 0]), VoxelState::Unknown);
        assert_eq!(map.observed_count(), 1);
    }

    #[test]
    fn add_clamps() {
        let mut map = OccupancyMap::new(0.1).unwrap();
        for _ in 0..10 {
            map.add([1, 1, 1], 1.5, -5.0, 5.0).unwrap();
        }
        assert_eq!(map.get([1, 1, 1]), Some(5.0));
    }

    #[test]
    fn grows_far_away() {
        let mut map = OccupancyMap::new(0.065).unwrap();
        map.set([0, 0, 0], 1.0).unwrap();
        map.set([900, -700, 5], -1.0).unwrap();
        map.set([-1000, 1000, -1000], 1.0).unwrap();
        assert_eq!(map.get([0, 0, 0]), Some(1.0));
        assert_eq!(map.get([900, -700, 5]), Some(-1.0));
        assert_eq!(map.get([-1000, 1000, -1000]), Some(1.0));
        assert!(map.tree_depth() >= 11);
    }

    #[test]
    fn shift_between_anchors() {
        let a = OccupancyMap::new(0.1).unwrap();
        let b = OccupancyMap::with_anchor(0.1, Vec3::new(0.3, -0.2, 0.0)).unwrap();
        assert_eq!(a.index_shift_from(&b).unwrap(), [3, -2, 0]);
        let c = OccupancyMap::with_anchor(0.1, Vec3::new(0.05, 0.0, 0.0)).unwrap();
        assert!(matches!(a.index_shift_from(&c), Err(Error::GridMismatch(_))));
        let d = OccupancyMap::new(0.2).unwrap();
        assert!(a.index_shift_from(&d).is_err());
    }

    proptest! {
        #[test]
        fn behaves_like_a_hash_map(writes in proptest::collection::vec(((-300i64..300, -300i64..300, -300i64..300), -5.0f32..5.0), 1..200)) {
            let mut map = OccupancyMap::new(0.1).unwrap();
            let mut oracle = BTreeMap::new();
            for ((x, y, z), l) in writes {
                map.set([x, y, z], l).unwrap();
                oracle.insert([x, y, z], l);
            }
            let got: Vec<_> = map.observed_voxels();
            let expected: Vec<_> = oracle.into_iter().collect();
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn point_lookup_round_trip(x in -50.0f64..50.0, y in -50.0f64..50.0, z in -50.0f64..50.0) {
            let map = OccupancyMap::with_anchor(0.065, Vec3::new(0.01, 0.02, -0.03)).unwrap();
            let p = Vec3::new(x, y, z);
            let idx = map.index_of(&p);
            let c = map.center_of(idx);
            for a in 0..3 {
                prop_assert!((p[a] - c[a]).abs() <= 0.5 * 0.065 + 1e-9);
            }
            prop_assert_eq!(map.index_of(&c), idx);
        }
    }
}
