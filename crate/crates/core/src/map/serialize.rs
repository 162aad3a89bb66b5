use std::path::Path;

use super::{OccupancyMap, VoxelIndex, MAX_DEPTH, MIN_DEPTH};
use crate::error::{Error, Result};
use crate::geom::Vec3;

const MAGIC: &[u8; 8] = b"LFOCCMAP";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 24 + 4 + 8;

fn spread(v: u64) -> u64 {
    let mut x = v & 0x1f_ffff;
    x = (x | x << 32) & 0x1f00000000ffff;
    x = (x | x << 16) & 0x1f0000ff0000ff;
    x = (x | x << 8) & 0x100f00f00f00f00f;
    x = (x | x << 4) & 0x10c30c30c30c30c3;
    (x | x << 2) & 0x1249249249249249
}

fn compact(v: u64) -> u64 {
    let mut x = v & 0x1249249249249249;
    x = (x | x >> 2) & 0x10c30c30c30c30c3;
    x = (x | x >> 4) & 0x100f00f00f00f00f;
    x = (x | x >> 8) & 0x1f0000ff0000ff;
    x = (x | x >> 16) & 0x1f00000000ffff;
    (x | x >> 32) & 0x1f_ffff
}

/// Interleaves the low 21 bits of each coordinate, x in the lowest bit.
pub fn morton_encode(local: [u64; 3]) -> u64 {
    spread(local[0]) | spread(local[1]) << 1 | spread(local[2]) << 2
}

pub fn morton_decode(code: u64) -> [u64; 3] {
    [compact(code), compact(code >> 1), compact(code >> 2)]
}

impl OccupancyMap {
    /// Little-endian binary encoding: header (magic, version, voxel size,
    /// root-corner origin, tree depth, count) followed by
    /// `(morton, log-odds)` pairs of observed voxels in Morton order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut pairs: Vec<(u64, f32)> = self
            .observed_voxels()
            .into_iter()
            .map(|(idx, l)| {
                let local = [0, 1, 2].map(|a| (idx[a] - self.root_min[a]) as u64);
                (morton_encode(local), l)
            })
            .collect();
        pairs.sort_unstable_by_key(|p| p.0);

        let mut out = Vec::with_capacity(HEADER_LEN + pairs.len() * 12);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.voxel_size.to_le_bytes());
        for c in self.origin().iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&self.tree_depth.to_le_bytes());
        out.extend_from_slice(&(pairs.len() as u64).to_le_bytes());
        for (code, l) in pairs {
            out.extend_from_slice(&code.to_le_bytes());
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::parse(path, msg);
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(bad("not an occupancy map file".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

        let version = u32_at(8);
        if version != VERSION {
            return Err(bad(format!("unsupported map version {version}")));
        }
        let voxel_size = f64_at(12);
        let origin = Vec3::new(f64_at(20), f64_at(28), f64_at(36));
        let tree_depth = u32_at(44);
        let count = u64_at(48) as usize;
        if !(MIN_DEPTH..=MAX_DEPTH).contains(&tree_depth) {
            return Err(bad(format!("tree depth {tree_depth} out of range")));
        }
        if bytes.len() != HEADER_LEN + count * 12 {
            return Err(bad(format!(
                "expected {count} voxel records, file has {} bytes",
                bytes.len()
            )));
        }

        // Maps anchored at the world origin round-trip to the same indices.
        let g = origin / voxel_size;
        let integral = g.iter().all(|c| (c - c.round()).abs() < 1e-6);
        let (anchor, root_min): (Vec3, VoxelIndex) = if integral {
            (Vec3::zeros(), [g.x.round() as i64, g.y.round() as i64, g.z.round() as i64])
        } else {
            (origin, [0; 3])
        };
        let mut map = OccupancyMap::with_anchor(voxel_size, anchor)
            .map_err(|e| bad(e.to_string()))?;
        map.root_min = root_min;
        map.tree_depth = tree_depth;

        let side = 1u64 << tree_depth;
        for rec in bytes[HEADER_LEN..].chunks_exact(12) {
            let code = u64::from_le_bytes(rec[..8].try_into().unwrap());
            let l = f32::from_le_bytes(rec[8..].try_into().unwrap());
            let local = morton_decode(code);
            if local.iter().any(|c| *c >= side) || !l.is_finite() {
                return Err(bad(format!("voxel record {code} outside the map")));
            }
            map.set([0, 1, 2].map(|a| root_min[a] + local[a] as i64), l)
                .map_err(|e| bad(e.to_string()))?;
        }
        Ok(map)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_file() {
        let mut map = OccupancyMap::new(0.065).unwrap();
        map.set([0, 0, 0], 1.5).unwrap();
        map.set([-40, 300, 7], -5.0).unwrap();
        map.set([2, 2, 2], 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.bin");
        map.write(&path).unwrap();
        let back = OccupancyMap::read(&path).unwrap();
        assert_eq!(back.observed_voxels(), map.observed_voxels());
        assert_eq!(back.tree_depth(), map.tree_depth());
        assert_eq!(back.origin(), map.origin());
        assert_eq!(back.voxel_size(), 0.065);
    }

    #[test]
    fn offset_anchor_round_trip() {
        let mut map = OccupancyMap::with_anchor(0.1, Vec3::new(0.013, 0.0, -0.02)).unwrap();
        map.set([1, 2, 3], 2.0).unwrap();
        let back = OccupancyMap::from_bytes(&map.to_bytes(), Path::new("m")).unwrap();
        let p = map.center_of([1, 2, 3]);
        assert_eq!(back.query(&p), map.query(&p));
    }

    #[test]
    fn rejects_garbage() {
        let p = Path::new("x.bin");
        assert!(OccupancyMap::from_bytes(b"nope", p).is_err());
        let mut bytes = OccupancyMap::new(0.1).unwrap().to_bytes();
        bytes[8] = 9;
        let err = OccupancyMap::from_bytes(&bytes, p).unwrap_err();
        assert!(err.to_string().contains("x.bin"));
        let mut bytes = OccupancyMap::new(0.1).unwrap().to_bytes();
        bytes.push(0);
        assert!(OccupancyMap::from_bytes(&bytes, p).is_err());
    }

    proptest! {
        #[test]
        fn morton_round_trip(x in 0u64..(1 << 21), y in 0u64..(1 << 21), z in 0u64..(1 << 21)) {
            prop_assert_eq!(morton_decode(morton_encode([x, y, z])), [x, y, z]);
        }

        #[test]
        fn morton_orders_lexicographically_within_octant(x in 0u64..2, y in 0u64..2, z in 0u64..2) {
            prop_assert_eq!(morton_encode([x, y, z]), x | y << 1 | z << 2);
        }
    }
}
