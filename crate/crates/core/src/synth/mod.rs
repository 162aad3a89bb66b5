//! Analytic scenes and simulated lidar / depth-camera sensing.

mod scene;
mod sim;

pub use scene::{trace_ray, Primitive, Scene};
pub use sim::{simulate_depth_camera, simulate_lidar, LidarModel};
