//! Exact squared Euclidean distance transforms (lower envelope of parabolas).

use crate::geom::Grid;

/// Exact squared Euclidean distance (pixels) to the nearest `true` cell,
/// separable lower-envelope algorithm. Infinite when there are no seeds.
pub fn distance_transform(seeds: &Grid<bool>) -> Grid<f64> {
    let (w, h) = (seeds.width() as usize, seeds.height() as usize);
    let mut grid: Vec<f64> = seeds
        .as_slice()
        .iter()
        .map(|s| if *s { 0.0 } else { f64::INFINITY })
        .collect();

    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        envelope(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        envelope(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    Grid::from_vec(w as u32, h as u32, grid).expect("dimensions preserved")
}

/// Squared distance (voxels) to the nearest seed on an `x`-fastest dense
/// volume of `dims`.
pub(crate) fn distance_transform_3d(seeds: &[bool], dims: [usize; 3]) -> Vec<f64> {
    let mut grid: Vec<f64> = seeds
        .iter()
        .map(|s| if *s { 0.0 } else { f64::INFINITY })
        .collect();
    let n = dims.iter().copied().max().unwrap_or(0);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let len = dims[axis];
        let stride = strides[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for a in 0..dims[o1] {
            for b in 0..dims[o2] {
                let base = a * strides[o1] + b * strides[o2];
                for i in 0..len {
                    f[i] = grid[base + i * stride];
                }
                envelope(&f[..len], &mut out[..len], &mut v, &mut z);
                for i in 0..len {
                    grid[base + i * stride] = out[i];
                }
            }
        }
    }
    grid
}

/// 1D squared-distance transform of sampled function `f`.
pub(crate) fn envelope(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        out.fill(f64::INFINITY);
        return;
    };
    let mut k = 0;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}
