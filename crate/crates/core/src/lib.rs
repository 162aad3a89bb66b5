//! Probabilistic volumetric mapping from sparse lidar depth.
//!
//! Sparse lidar depth is densified by a [`completion::Completer`], each pixel
//! carrying a σ; depth rays are fused into an octree [`map::OccupancyMap`]
//! with a piecewise log-odds inverse sensor model that drops predictions
//! whose σ is too large. The map can be meshed, evaluated against ground
//! truth and used for RRT* planning. [`synth`] provides analytic scenes and
//! a lidar/camera simulator for testing the whole chain.

pub mod completion;
mod dt;
pub mod error;
pub mod eval;
pub mod geom;
pub mod io;
pub mod lidar;
pub mod map;
pub mod mesh;
pub mod planner;
pub mod sensor_model;
pub mod synth;

pub use error::{Error, Result};
pub use geom::{CameraIntrinsics, DepthImage, Frame, Grid, PointCloud, Pose, Vec3};
pub use sensor_model::SensorModelParams;
