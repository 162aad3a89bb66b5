//! Lidar measurement model: depth-dependent noise, the piecewise-linear
//! inverse sensor model in log-odds, and the uncertainty rejection gate.
//!
//! The inverse sensor model is written in terms of `d`, the signed distance
//! of a sample *behind* the measured surface along the ray
//! (`d = sample_range - measured_range`): samples well in front of the
//! surface (`d <= -3σ`) saturate to `l_min`, the model ramps linearly
//! through zero at the surface, plateaus over the second half of the surface
//! thickness `k_tau · d_r`, and produces no update beyond it.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModelParams {
    /// Free-space log-odds per update, and the lower clamp.
    pub l_min: f64,
    /// Upper clamp for stored log-odds.
    pub l_max: f64,
    /// Surface thickness as a fraction of the measured range.
    pub k_tau: f64,
    pub k_sigma: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Measurements beyond this range only clear free space up to it.
    pub max_range: f64,
    /// Predicted σ above `rho · σ(d)` is rejected.
    pub rho: f64,
}

impl Default for SensorModelParams {
    fn default() -> Self {
        Self {
            l_min: -5.0,
            l_max: 5.0,
            k_tau: 0.026,
            k_sigma: 0.052,
            sigma_min: 0.06,
            sigma_max: 0.20,
            max_range: 50.0,
            rho: 2.0,
        }
    }
}

impl SensorModelParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.l_min < 0.0, "l_min < 0"),
            (self.l_max > 0.0, "l_max > 0"),
            (self.k_tau > 0.0, "k_tau > 0"),
            (self.k_sigma > 0.0, "k_sigma > 0"),
            (
                0.0 < self.sigma_min && self.sigma_min < self.sigma_max,
                "0 < sigma_min < sigma_max",
            ),
            (self.max_range > 0.0, "max_range > 0"),
            (self.rho > 0.0, "rho > 0"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "sensor model requires {what}: {self:?}"
                )));
            }
        }
        Ok(())
    }

    /// Linear depth noise model, clamped to `[sigma_min, sigma_max]`.
    pub fn sigma_of_depth(&self, depth: f64) -> Result<f64> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok(self.sigma(depth))
    }

    #[inline]
    pub(crate) fn sigma(&self, depth: f64) -> f64 {
        if depth <= self.sigma_min / self.k_sigma {
            self.sigma_min
        } else if depth >= self.sigma_max / self.k_sigma {
            self.sigma_max
        } else {
            self.k_sigma * depth
        }
    }

    /// Inverse sensor model with the noise model's σ at `measured_range`.
    pub fn log_odds_update(&self, d: f64, measured_range: f64) -> Option<f64> {
        if !(measured_range > 0.0) {
            return None;
        }
        self.log_odds_update_with_sigma(d, measured_range, self.sigma(measured_range))
    }

    /// Inverse sensor model with an explicit σ (e.g. a predicted one).
    /// `None` means "no update".
    #[inline]
    pub fn log_odds_update_with_sigma(&self, d: f64, measured_range: f64, sigma: f64) -> Option<f64> {
        if !(measured_range > 0.0 && sigma > 0.0) {
            return None;
        }
        let three_sigma = 3.0 * sigma;
        let thickness = self.k_tau * measured_range;
        let half = 0.5 * thickness;
        let slope = -self.l_min / three_sigma;
        if d <= -three_sigma {
            Some(self.l_min)
        } else if d <= half {
            Some(slope * d)
        } else if d <= thickness {
            Some(slope * half)
        } else {
            None
        }
    }

    /// True when a predicted depth should be discarded: its σ exceeds
    /// `rho` times the noise model at that depth.
    pub fn reject_prediction(&self, depth: f64, sigma: f64) -> bool {
        sigma > self.rho * self.sigma(depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> SensorModelParams {
        SensorModelParams::default()
    }

    #[test]
    fn defaults_validate() {
        params().validate().unwrap();
        let bad = SensorModelParams {
            l_min: 1.0,
            ..params()
        };
        assert!(bad.validate().is_err());
        let bad = SensorModelParams {
            sigma_min: 0.3,
            ..params()
        };
        assert!(bad.validate().is_err());
        let no_reject = SensorModelParams {
            rho: f64::INFINITY,
            ..params()
        };
        no_reject.validate().unwrap();
        assert!(!no_reject.reject_prediction(1.0, 1e9));
    }

    #[test]
    fn sigma_examples() {
        let p = params();
        assert!((p.sigma_of_depth(1.0).unwrap() - 0.06).abs() < 1e-12);
        assert!((p.sigma_of_depth(2.0).unwrap() - 0.104).abs() < 1e-12);
        assert!((p.sigma_of_depth(10.0).unwrap() - 0.20).abs() < 1e-12);
        assert!(p.sigma_of_depth(0.0).is_err());
        assert!(p.sigma_of_depth(-1.0).is_err());
    }

    #[test]
    fn log_odds_examples() {
        let p = params();
        assert_eq!(p.log_odds_update(0.0, 10.0), Some(0.0));
        assert!((p.log_odds_update(-0.6, 10.0).unwrap() + 5.0).abs() < 1e-9);
        assert_eq!(p.log_odds_update(-30.0, 10.0), Some(-5.0));
        let ramp_top = 5.0 / 0.6 * 0.13;
        assert!((p.log_odds_update(0.13, 10.0).unwrap() - ramp_top).abs() < 1e-9);
        assert!((p.log_odds_update(0.20, 10.0).unwrap() - ramp_top).abs() < 1e-9);
        assert!((p.log_odds_update(0.26, 10.0).unwrap() - ramp_top).abs() < 1e-9);
        assert_eq!(p.log_odds_update(0.30, 10.0), None);
        assert_eq!(p.log_odds_update(0.0, 0.0), None);
    }

    #[test]
    fn rejection_examples() {
        let p = params();
        assert!(p.reject_prediction(2.0, 0.30));
        assert!(!p.reject_prediction(2.0, 0.208));
        assert!(!p.reject_prediction(2.0, 0.0));
        assert!(!p.reject_prediction(200.0, 0.0));
    }

    proptest! {
        #[test]
        fn sigma_monotone_and_bounded(a in 1e-3f64..100.0, b in 1e-3f64..100.0) {
            let p = params();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (sl, sh) = (p.sigma(lo), p.sigma(hi));
            prop_assert!(sl <= sh);
            prop_assert!(sl >= p.sigma_min && sh <= p.sigma_max);
        }

        #[test]
        fn log_odds_sign_matches_side(d in -5.0f64..1.0, range in 0.1f64..60.0) {
            let p = params();
            match p.log_odds_update(d, range) {
                Some(l) => {
                    prop_assert!(d <= p.k_tau * range);
                    if d < 0.0 { prop_assert!(l < 0.0); }
                    if d > 0.0 { prop_assert!(l > 0.0); }
                    prop_assert!(l >= p.l_min);
                    if d <= -3.0 * p.sigma(range) { prop_assert_eq!(l, p.l_min); }
                }
                None => prop_assert!(d > p.k_tau * range),
            }
        }

        #[test]
        fn rejection_monotone(d in 0.1f64..80.0, s1 in 0.0f64..2.0, s2 in 0.0f64..2.0, r1 in 0.1f64..8.0, r2 in 0.1f64..8.0) {
            let p = params();
            let (slo, shi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
            // Raising sigma never turns reject into keep.
            if p.reject_prediction(d, slo) { prop_assert!(p.reject_prediction(d, shi)); }
            let (rlo, rhi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let lo = SensorModelParams { rho: rlo, ..p };
            let hi = SensorModelParams { rho: rhi, ..p };
            // Raising rho never turns keep into reject.
            if !lo.reject_prediction(d, s1) { prop_assert!(!hi.reject_prediction(d, s1)); }
        }
    }
}
