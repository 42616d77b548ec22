//! Closed-form two-branch model: amplitudes grow as `exp(λ t)`.

use serde::{Deserialize, Serialize};

use super::{positive, threshold, Numerics, ScenarioOutput, Series};
use crate::{Error, Result};

/// Normalized weights `(w_full, w_empty)` at time `t` for initial weights
/// `(p, 1 - p)` and amplitude rates `λ_full`, `λ_empty`.
pub fn two_branch_oracle(p: f64, lambda_full: f64, lambda_empty: f64, t: f64) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p must lie in (0, 1), got {p}")));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    // logistic form, stable for large exponents
    let x = (p / (1.0 - p)).ln() + 2.0 * (lambda_full - lambda_empty) * t;
    let w = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    Ok((w, 1.0 - w))
}

/// Time at which the full branch, starting at weight `p`, reaches `1 - η`
/// when its amplitude outgrows the other branch at rate `delta_lambda`.
pub fn oracle_crossing_time(p: f64, delta_lambda: f64, eta: f64) -> f64 {
    let target = ((1.0 - eta) / eta * (1.0 - p) / p).ln();
    if target <= 0.0 {
        0.0
    } else if delta_lambda <= 0.0 {
        f64::INFINITY
    } else {
        target / (2.0 * delta_lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoBranchOracleSpec {
    pub p: f64,
    pub lambda_full: f64,
    pub lambda_empty: f64,
    pub collapse_threshold: f64,
    pub samples: usize,
}

impl Default for TwoBranchOracleSpec {
    fn default() -> Self {
        TwoBranchOracleSpec {
            p: 0.5,
            lambda_full: 1.0,
            lambda_empty: 0.0,
            collapse_threshold: 1e-3,
            samples: 201,
        }
    }
}

impl TwoBranchOracleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::Spec(format!("p must lie in (0, 1), got {}", self.p)));
        }
        if !(self.lambda_full.is_finite() && self.lambda_empty.is_finite()) {
            return Err(Error::Spec("rates must be finite".into()));
        }
        threshold("collapse_threshold", self.collapse_threshold)?;
        positive("samples", self.samples as f64)
    }
}

#[derive(Debug, Clone, Serialize)]
struct OracleReport {
    spec: TwoBranchOracleSpec,
    t_max: f64,
    crossing_time: f64,
    final_weights: (f64, f64),
    /// Largest residual of `dw/dt = 2Δλ w (1 - w)` by central differences.
    logistic_residual: f64,
}

pub fn two_branch_oracle_report(spec: &TwoBranchOracleSpec, numerics: &Numerics) -> Result<ScenarioOutput> {
    let t_max = numerics.t_max;
    let n = spec.samples.max(2);
    let dl = spec.lambda_full - spec.lambda_empty;
    let mut series = Series::new("weights", &["t", "w_full", "w_empty"]);
    let h = 1e-5 * (1.0 + t_max);
    let mut residual: f64 = 0.0;
    for i in 0..n {
        let t = t_max * i as f64 / (n - 1) as f64;
        let (w, e) = two_branch_oracle(spec.p, spec.lambda_full, spec.lambda_empty, t)?;
        series.push(vec![t, w, e]);
        let lo = (t - h).max(0.0);
        let (wl, _) = two_branch_oracle(spec.p, spec.lambda_full, spec.lambda_empty, lo)?;
        let (wh, _) = two_branch_oracle(spec.p, spec.lambda_full, spec.lambda_empty, t + h)?;
        let deriv = (wh - wl) / (t + h - lo);
        residual = residual.max((deriv - 2.0 * dl * w * (1.0 - w)).abs());
    }
    let report = OracleReport {
        spec: spec.clone(),
        t_max,
        crossing_time: oracle_crossing_time(spec.p, dl, spec.collapse_threshold),
        final_weights: two_branch_oracle(spec.p, spec.lambda_full, spec.lambda_empty, t_max)?,
        logistic_residual: residual,
    };
    ScenarioOutput::new("two_branch_oracle", &report, vec![series])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn initial_weights() {
        let (w, e) = two_branch_oracle(0.3, 2.0, 0.5, 0.0).unwrap();
        assert!((w - 0.3).abs() < 1e-15 && (e - 0.7).abs() < 1e-15);
    }

    #[test]
    fn equal_rates_freeze_weights() {
        for t in [0.0, 1.0, 100.0] {
            let (w, _) = two_branch_oracle(0.3, 1.5, 1.5, t).unwrap();
            assert!((w - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn threshold_crossing() {
        let dl = 0.7;
        let t = 999f64.ln() / (2.0 * dl);
        let (w, _) = two_branch_oracle(0.5, dl, 0.0, t).unwrap();
        assert!((w - 0.999).abs() < 1e-12);
        assert!((oracle_crossing_time(0.5, dl, 1e-3) - t).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_p() {
        assert!(two_branch_oracle(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(two_branch_oracle(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(two_branch_oracle(0.5, 1.0, 0.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn logistic_ode(p in 0.01f64..0.99, lf in 0.0f64..3.0, le in 0.0f64..3.0, t in 0.0f64..5.0) {
            let h = 1e-5;
            let (w, _) = two_branch_oracle(p, lf, le, t + h).unwrap();
            let (wp, _) = two_branch_oracle(p, lf, le, t + 2.0 * h).unwrap();
            let (wm, _) = two_branch_oracle(p, lf, le, t).unwrap();
            let d = (wp - wm) / (2.0 * h);
            // central difference error is at most h² r³ / 48 for rate r
            let r = 2.0 * (lf - le).abs();
            let tol = h * h * r.powi(3) / 10.0 + 1e-10;
            prop_assert!((d - 2.0 * (lf - le) * w * (1.0 - w)).abs() < tol);
        }

        #[test]
        fn monotone_in_time(p in 0.01f64..0.99, dl in 0.0f64..3.0, t in 0.0f64..5.0, dt in 0.0f64..1.0) {
            let (a, _) = two_branch_oracle(p, dl, 0.0, t).unwrap();
            let (b, _) = two_branch_oracle(p, dl, 0.0, t + dt).unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn weights_sum_to_one(p in 0.01f64..0.99, lf in -3.0f64..3.0, le in -3.0f64..3.0, t in 0.0f64..50.0) {
            let (w, e) = two_branch_oracle(p, lf, le, t).unwrap();
            prop_assert!((w + e - 1.0).abs() < 1e-15 && (0.0..=1.0).contains(&w));
        }
    }
}
