//! 16-bit single-channel PNG codec for depth and sigma grids.
//!
//! `metres = raw / 256`; raw `0` marks an invalid pixel. Values are rounded
//! to the nearest step and saturate at raw `65535` (≈ 255.996 m). A valid
//! depth that would round to zero is stored as raw `1`.

use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::geom::Grid;

pub const DEPTH_SCALE: f64 = 256.0;

pub fn encode(value: f64) -> u16 {
    (value * DEPTH_SCALE).round().clamp(1.0, u16::MAX as f64) as u16
}

pub fn decode(raw: u16) -> f64 {
    raw as f64 / DEPTH_SCALE
}

fn save(path: &Path, width: u32, height: u32, raw: Vec<u16>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width, height, raw).expect("buffer sized from grid");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn load(path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    if !matches!(img.color(), image::ColorType::L16) {
        return Err(Error::parse(
            path,
            format!("expected 16-bit single-channel PNG, got {:?}", img.color()),
        ));
    }
    let img = img.into_luma16();
    Ok((img.width(), img.height(), img.into_raw()))
}

/// Writes a depth grid; absent pixels become raw 0.
pub fn write_depth(path: &Path, depth: &Grid<Option<f64>>) -> Result<()> {
    let raw = depth
        .as_slice()
        .iter()
        .map(|d| d.map_or(0, encode))
        .collect();
    save(path, depth.width(), depth.height(), raw)
}

pub fn read_depth(path: &Path) -> Result<Grid<Option<f64>>> {
    let (w, h, raw) = load(path)?;
    Grid::from_vec(
        w,
        h,
        raw.into_iter()
            .map(|r| (r != 0).then(|| decode(r)))
            .collect(),
    )
}

/// Writes a sigma grid. Sigma may legitimately be zero, so raw 0 is not a
/// sentinel here; validity comes from the paired depth image.
pub fn write_sigma(path: &Path, sigma: &Grid<Option<f64>>) -> Result<()> {
    let raw = sigma
        .as_slice()
        .iter()
        .map(|s| s.map_or(0, |s| (s * DEPTH_SCALE).round().clamp(0.0, u16::MAX as f64) as u16))
        .collect();
    save(path, sigma.width(), sigma.height(), raw)
}

pub fn read_sigma_raw(path: &Path) -> Result<Grid<f64>> {
    let (w, h, raw) = load(path)?;
    Grid::from_vec(w, h, raw.into_iter().map(decode).collect())
}
