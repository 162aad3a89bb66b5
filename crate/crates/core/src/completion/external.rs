use std::path::{Path, PathBuf};

use super::{Completer, CompletionResult, PixelSource};
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, DepthImage, Grid, Pose};
use crate::io::depth_png::{self, DEPTH_SCALE};

/// Smallest σ reported for a predicted pixel whose encoded σ is zero.
const SIGMA_FLOOR: f64 = 0.5 / DEPTH_SCALE;

/// Reads a dense depth / σ PNG pair written by an external predictor.
/// Every valid pixel is marked predicted.
pub fn load_external(
    dense_path: &Path,
    sigma_path: &Path,
    intr: &CameraIntrinsics,
) -> Result<CompletionResult> {
    let depth = depth_png::read_depth(dense_path)?;
    let sigma_raw = depth_png::read_sigma_raw(sigma_path)?;
    let dims = (intr.width, intr.height);
    for actual in [depth.dims(), sigma_raw.dims()] {
        if actual != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual,
            });
        }
    }
    let sigma_data = depth
        .as_slice()
        .iter()
        .zip(sigma_raw.as_slice())
        .map(|(d, s)| d.map(|_| s.max(SIGMA_FLOOR)))
        .collect();
    let sigma = Grid::from_vec(dims.0, dims.1, sigma_data)?;
    let source = depth.map(|d| {
        if d.is_some() {
            PixelSource::Predicted
        } else {
            PixelSource::Invalid
        }
    });
    Ok(CompletionResult {
        dense: DepthImage {
            intrinsics: *intr,
            depth,
            sigma: Some(sigma),
            pose: Pose::identity(),
        },
        source,
        sky: Grid::filled(dims.0, dims.1, false),
    })
}

/// Writes the dense depth and σ of a result as 16-bit PNGs.
pub fn write_completion(result: &CompletionResult, dense_path: &Path, sigma_path: &Path) -> Result<()> {
    depth_png::write_depth(dense_path, &result.dense.depth)?;
    let sigma = match &result.dense.sigma {
        Some(s) => s.clone(),
        None => result.dense.depth.map(|_| None),
    };
    depth_png::write_sigma(sigma_path, &sigma)
}

/// Loads `<dir>/<name>_depth.png` and `<dir>/<name>_sigma.png` per frame.
#[derive(Debug, Clone)]
pub struct ExternalCompleter {
    pub dir: PathBuf,
}

impl ExternalCompleter {
    pub fn paths(&self, name: &str) -> (PathBuf, PathBuf) {
        (
            self.dir.join(format!("{name}_depth.png")),
            self.dir.join(format!("{name}_sigma.png")),
        )
    }
}

impl Completer for ExternalCompleter {
    fn complete(
        &self,
        name: &str,
        sparse: &DepthImage,
        _gray: Option<&Grid<u8>>,
    ) -> Result<CompletionResult> {
        let (d, s) = self.paths(name);
        let mut result = load_external(&d, &s, &sparse.intrinsics)?;
        result.dense.pose = sparse.pose;
        Ok(result)
    }
}
