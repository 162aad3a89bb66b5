use super::PixelSource;
use crate::dt::distance_transform;
use crate::geom::Grid;
use crate::SensorModelParams;

/// Heuristic per-pixel σ. Raw pixels get the sensor noise model; predicted
/// pixels get `max(σ(d), k_d · r_near · d)` where `r_near` is the pixel
/// distance to the nearest raw measurement.
pub fn heuristic_sigma(
    depth: &Grid<Option<f64>>,
    source: &Grid<PixelSource>,
    params: &SensorModelParams,
    k_d: f64,
) -> Grid<Option<f64>> {
    let seeds = source.map(|s| *s == PixelSource::Raw);
    let dist2 = distance_transform(&seeds);
    let (w, h) = depth.dims();
    let data = depth
        .as_slice()
        .iter()
        .zip(source.as_slice())
        .zip(dist2.as_slice())
        .map(|((d, s), r2)| {
            let d = (*d)?;
            let base = params.sigma(d);
            Some(match s {
                PixelSource::Predicted => base.max(k_d * r2.sqrt() * d),
                _ => base,
            })
        })
        .collect();
    Grid::from_vec(w, h, data).expect("dimensions preserved")
}
