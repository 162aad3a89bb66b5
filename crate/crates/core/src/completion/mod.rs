//! Depth completion: turns a sparse depth image into a dense one with a
//! per-pixel σ. Two completers ship here, a triangulation-based linear
//! interpolator and a loader for predictions produced by an external model.

mod external;
mod linear;
mod sigma;

pub use external::{load_external, write_completion, ExternalCompleter};
pub use linear::{complete_linear, LinearCompleter};
pub use crate::dt::distance_transform;
pub use sigma::heuristic_sigma;

use crate::error::Result;
use crate::geom::{DepthImage, Grid};

/// Default sky encoding, metres.
pub const SKY_DEPTH: f64 = 256.0;

/// Default growth of predicted σ per pixel of distance to raw support.
pub const DEFAULT_K_D: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelSource {
    Raw,
    Predicted,
    Invalid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    /// Dense depth; `sigma` is always present.
    pub dense: DepthImage,
    pub source: Grid<PixelSource>,
    /// Pixels to be integrated as free-to-max-range rays.
    pub sky: Grid<bool>,
}

impl CompletionResult {
    /// Wraps a sparse image as-is, every valid pixel marked raw, σ from the
    /// sensor noise model. Used when fusing raw lidar without completion.
    pub fn from_sparse(sparse: &DepthImage, params: &crate::SensorModelParams) -> Self {
        let (w, h) = sparse.depth.dims();
        let source = sparse.depth.map(|d| {
            if d.is_some() {
                PixelSource::Raw
            } else {
                PixelSource::Invalid
            }
        });
        let sigma = sparse.depth.map(|d| d.map(|d| params.sigma(d)));
        Self {
            dense: DepthImage {
                sigma: Some(sigma),
                ..sparse.clone()
            },
            source,
            sky: Grid::filled(w, h, false),
        }
    }

    pub fn count(&self, kind: PixelSource) -> usize {
        self.source.as_slice().iter().filter(|s| **s == kind).count()
    }
}

/// Flags predicted pixels at or beyond `sky_depth`.
pub fn apply_sky_convention(mut result: CompletionResult, sky_depth: f64) -> CompletionResult {
    for ((d, s), sky) in result
        .dense
        .depth
        .as_slice()
        .iter()
        .zip(result.source.as_slice())
        .zip(result.sky.as_mut_slice())
    {
        if *s == PixelSource::Predicted && matches!(d, Some(d) if *d >= sky_depth) {
            *sky = true;
        }
    }
    result
}

/// Common interface over completers. `name` identifies the frame for
/// completers that read per-frame artefacts; `gray` is optional guidance.
pub trait Completer: Send + Sync {
    fn complete(
        &self,
        name: &str,
        sparse: &DepthImage,
        gray: Option<&Grid<u8>>,
    ) -> Result<CompletionResult>;
}
