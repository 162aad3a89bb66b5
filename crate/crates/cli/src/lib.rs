//! Pipeline orchestration for the `lidarfuse` command-line tool.

pub mod config;
pub mod fixtures;
pub mod pipeline;

pub use config::{Config, PipelineConfig};
