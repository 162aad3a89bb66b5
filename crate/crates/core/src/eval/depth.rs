use crate::error::{Error, Result};
use crate::geom::DepthImage;

pub const DELTA_THRESHOLDS: [f64; 3] = [1.05, 1.10, 1.25];
const AUSE_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMetricReport {
    /// Metres.
    pub rmse: f64,
    /// Metres.
    pub mae: f64,
    /// Percent.
    pub rel: f64,
    /// Inverse-depth MAE, km⁻¹.
    pub imae: f64,
    /// `(threshold, percent of pixels with max(f/y, y/f) < threshold)`.
    pub delta: Vec<(f64, f64)>,
    /// Absent without σ, or when some σ is not positive.
    pub l_unc: Option<f64>,
    /// Absent without σ.
    pub ause: Option<f64>,
    pub pixels: usize,
}

impl DepthMetricReport {
    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = ["rmse", "mae", "rel", "imae"].map(String::from).to_vec();
        h.extend(DELTA_THRESHOLDS.iter().map(|t| format!("delta_{t:.2}")));
        h.extend(["l_unc", "ause", "pixels"].map(String::from));
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut r = vec![
            self.rmse.to_string(),
            self.mae.to_string(),
            self.rel.to_string(),
            self.imae.to_string(),
        ];
        r.extend(self.delta.iter().map(|(_, p)| p.to_string()));
        r.push(opt(self.l_unc));
        r.push(opt(self.ause));
        r.push(self.pixels.to_string());
        r
    }

    pub fn delta_at(&self, threshold: f64) -> Option<f64> {
        self.delta
            .iter()
            .find(|(t, _)| (t - threshold).abs() < 1e-12)
            .map(|(_, p)| *p)
    }
}

/// Metrics over pixels valid in both `pred` and `gt`.
pub fn depth_metrics(pred: &DepthImage, gt: &DepthImage) -> Result<DepthMetricReport> {
    if pred.depth.dims() != gt.depth.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.depth.dims(),
            actual: pred.depth.dims(),
        });
    }
    let mut f = Vec::new();
    let mut y = Vec::new();
    let mut s = Vec::new();
    for (u, v, d) in pred.depth.iter() {
        if let (Some(fp), Some(yp)) = (*d, gt.depth_at(u, v)) {
            f.push(fp);
            y.push(yp);
            s.push(pred.sigma_at(u, v));
        }
    }
    let n = f.len();
    if n == 0 {
        return Err(Error::EmptyInput("no pixels valid in both prediction and ground truth"));
    }
    let nf = n as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut rel = 0.0;
    let mut inv = 0.0;
    let mut hits = [0usize; DELTA_THRESHOLDS.len()];
    for (&fp, &yp) in f.iter().zip(&y) {
        let e = yp - fp;
        sq += e * e;
        abs += e.abs();
        rel += (e / yp).abs();
        inv += (1.0 / yp - 1.0 / fp).abs();
        let ratio = (fp / yp).max(yp / fp);
        for (h, t) in hits.iter_mut().zip(DELTA_THRESHOLDS) {
            if ratio < t {
                *h += 1;
            }
        }
    }

    let sigma: Option<Vec<f64>> = s.into_iter().collect();
    let (l_unc, ause) = match &sigma {
        Some(sig) => {
            let l_unc = sig.iter().all(|s| *s > 0.0).then(|| {
                f.iter()
                    .zip(&y)
                    .zip(sig)
                    .map(|((fp, yp), s)| (yp - fp).powi(2) / (s * s) + (s * s).ln())
                    .sum::<f64>()
                    / nf
            });
            (l_unc, Some(sparsify_ause(&f, sig, &y)?))
        }
        None => (None, None),
    };

    Ok(DepthMetricReport {
        rmse: (sq / nf).sqrt(),
        mae: abs / nf,
        rel: 100.0 * rel / nf,
        imae: 1000.0 * inv / nf,
        delta: DELTA_THRESHOLDS
            .iter()
            .zip(hits)
            .map(|(t, h)| (*t, 100.0 * h as f64 / nf))
            .collect(),
        l_unc,
        ause,
        pixels: n,
    })
}

/// Normalised RMSE after removing `⌊i·N/100⌋` pixels for `i = 0..100`,
/// ranked by `key` descending (stable on ties).
fn curve(err2: &[f64], key: &[f64]) -> Vec<f64> {
    let n = err2.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| key[b].total_cmp(&key[a]));
    // suffix[k] = sum of squared errors of order[k..]
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + err2[order[k]];
    }
    let rmse = |k: usize| (suffix[k] / (n - k) as f64).sqrt();
    let base = rmse(0);
    (0..AUSE_STEPS)
        .map(|i| {
            let k = i * n / AUSE_STEPS;
            if base == 0.0 {
                0.0
            } else {
                rmse(k) / base
            }
        })
        .collect()
}

/// `(curve by σ, oracle curve by |error|)` sparsification curves.
pub fn sparsification_curves(pred: &[f64], sigma: &[f64], gt: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let err2: Vec<f64> = pred.iter().zip(gt).map(|(f, y)| (y - f).powi(2)).collect();
    (curve(&err2, sigma), curve(&err2, &err2))
}

/// Area between the σ-ranked and error-ranked sparsification curves.
pub fn sparsify_ause(pred: &[f64], sigma: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != sigma.len() || pred.len() != gt.len() {
        return Err(Error::InvalidParameter(format!(
            "AUSE inputs differ in length: {} predictions, {} sigmas, {} targets",
            pred.len(),
            sigma.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("AUSE pixels"));
    }
    let (c, o) = sparsification_curves(pred, sigma, gt);
    Ok(c.iter().zip(&o).map(|(c, o)| c - o).sum::<f64>() / AUSE_STEPS as f64)
}
