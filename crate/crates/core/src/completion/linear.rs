use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use super::{heuristic_sigma, Completer, CompletionResult, PixelSource, DEFAULT_K_D};
use crate::error::{Error, Result};
use crate::geom::{DepthImage, Grid};
use crate::SensorModelParams;

#[derive(Debug, Clone, Copy)]
struct Sample {
    u: i64,
    v: i64,
    depth: f64,
}

impl HasPosition for Sample {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        Point2::new(self.u as f64, self.v as f64)
    }
}

/// Linear completer with the default σ constants.
pub fn complete_linear(sparse: &DepthImage, gray: Option<&Grid<u8>>) -> Result<CompletionResult> {
    LinearCompleter::default().complete("", sparse, gray)
}

#[derive(Debug, Clone, Copy)]
pub struct LinearCompleter {
    pub params: SensorModelParams,
    pub k_d: f64,
}

impl Default for LinearCompleter {
    fn default() -> Self {
        Self {
            params: SensorModelParams::default(),
            k_d: DEFAULT_K_D,
        }
    }
}

impl Completer for LinearCompleter {
    fn complete(
        &self,
        _name: &str,
        sparse: &DepthImage,
        _gray: Option<&Grid<u8>>,
    ) -> Result<CompletionResult> {
        let (depth, source) = interpolate(sparse)?;
        let sigma = heuristic_sigma(&depth, &source, &self.params, self.k_d);
        let (w, h) = depth.dims();
        Ok(CompletionResult {
            dense: DepthImage {
                intrinsics: sparse.intrinsics,
                depth,
                sigma: Some(sigma),
                pose: sparse.pose,
            },
            source,
            sky: Grid::filled(w, h, false),
        })
    }
}

/// Delaunay triangulation over valid pixel centres, then barycentric
/// rasterisation of every triangle. Inside tests use exact integer cross
/// products so hull-edge pixels are classified consistently.
fn interpolate(sparse: &DepthImage) -> Result<(Grid<Option<f64>>, Grid<PixelSource>)> {
    let samples: Vec<Sample> = sparse
        .depth
        .iter()
        .filter_map(|(u, v, d)| {
            d.map(|depth| Sample {
                u: u as i64,
                v: v as i64,
                depth,
            })
        })
        .collect();
    if samples.len() < 3 {
        return Err(Error::InsufficientSupport(format!(
            "{} valid pixels, need at least 3",
            samples.len()
        )));
    }
    let tri = DelaunayTriangulation::<Sample>::bulk_load(samples)
        .map_err(|e| Error::InsufficientSupport(format!("triangulation failed: {e:?}")))?;
    if tri.num_inner_faces() == 0 {
        return Err(Error::InsufficientSupport(
            "all valid pixels are collinear".into(),
        ));
    }

    let (w, h) = sparse.depth.dims();
    let mut depth = sparse.depth.clone();
    let mut source = sparse.depth.map(|d| {
        if d.is_some() {
            PixelSource::Raw
        } else {
            PixelSource::Invalid
        }
    });

    for face in tri.inner_faces() {
        let [a, b, c] = face.vertices().map(|v| *v.data());
        let area = cross(&a, &b, c.u, c.v);
        if area == 0 {
            continue;
        }
        let (u0, u1) = (a.u.min(b.u).min(c.u), a.u.max(b.u).max(c.u));
        let (v0, v1) = (a.v.min(b.v).min(c.v), a.v.max(b.v).max(c.v));
        for v in v0.max(0)..=v1.min(h as i64 - 1) {
            for u in u0.max(0)..=u1.min(w as i64 - 1) {
                let (pu, pv) = (u as u32, v as u32);
                if *source.get(pu, pv) != PixelSource::Invalid {
                    continue;
                }
                let wa = cross(&b, &c, u, v);
                let wb = cross(&c, &a, u, v);
                let wc = cross(&a, &b, u, v);
                let inside = if area > 0 {
                    wa >= 0 && wb >= 0 && wc >= 0
                } else {
                    wa <= 0 && wb <= 0 && wc <= 0
                };
                if !inside {
                    continue;
                }
                let inv = 1.0 / area as f64;
                let d = (wa as f64 * a.depth + wb as f64 * b.depth + wc as f64 * c.depth) * inv;
                if d > 0.0 {
                    depth.set(pu, pv, Some(d));
                    source.set(pu, pv, PixelSource::Predicted);
                }
            }
        }
    }
    Ok((depth, source))
}

/// Twice the signed area of (p, q, (u, v)).
fn cross(p: &Sample, q: &Sample, u: i64, v: i64) -> i64 {
    (q.u - p.u) * (v - p.v) - (q.v - p.v) * (u - p.u)
}
