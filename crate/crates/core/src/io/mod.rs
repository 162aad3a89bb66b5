//! File formats: PLY clouds/scans/meshes, 16-bit depth PNGs, trajectories.

pub mod depth_png;
pub mod ply;
pub mod trajectory;
