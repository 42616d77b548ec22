//! Order-of-magnitude estimators for macroscopic objects.
//!
//! These drop geometric prefactors: a body of mass `M` and size `L` has
//! self-gravitational energy `G M²/L`, and a superposition of two positions
//! separated by about `L` collapses on the time scale `ħ/(ε |E_sg|)`.

use serde::Serialize;

use crate::units::{UnitSystem, ELECTRON_MASS, ELEMENTARY_CHARGE, PROTON_MASS, VACUUM_PERMITTIVITY};
use crate::{Error, Result};

fn check_finite_nonneg(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Domain(format!("{name} must be finite and non-negative, got {v}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::Domain(format!("{name} must be finite and positive, got {v}")));
    }
    Ok(())
}

/// `|E_sg| ≃ G M² / L`.
///
/// `M = 0` is the zero-mass limit and yields 0; negative masses and
/// non-positive sizes are rejected.
pub fn self_grav_energy(mass: f64, size: f64, units: &UnitSystem) -> Result<f64> {
    check_finite_nonneg("mass", mass)?;
    check_positive("size", size)?;
    Ok(units.grav_const * mass * mass / size)
}

/// `τ ≃ ħ / (ε |E_sg|)`; returns `f64::INFINITY` when there is no
/// anti-Hermitian term (`ε = 0`) or no mass.
pub fn collapse_time_estimate(epsilon: f64, mass: f64, size: f64, units: &UnitSystem) -> Result<f64> {
    check_finite_nonneg("epsilon", epsilon)?;
    let energy = self_grav_energy(mass, size, units)?;
    let rate = epsilon * energy;
    if rate == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(units.hbar / rate)
}

/// Ratio of Coulomb to gravitational attraction between an electron and a
/// proton, `q² / (4π ε₀ G mₑ mₚ)`. Only meaningful in SI units.
pub fn coulomb_gravity_ratio(units: &UnitSystem) -> Result<f64> {
    coulomb_gravity_ratio_with_masses(units, ELECTRON_MASS, PROTON_MASS)
}

pub fn coulomb_gravity_ratio_with_masses(units: &UnitSystem, m_e: f64, m_p: f64) -> Result<f64> {
    if !units.is_si() {
        return Err(Error::Unsupported(
            "the Coulomb/gravity ratio needs SI constants; natural units carry no charge scale".into(),
        ));
    }
    check_positive("electron mass", m_e)?;
    check_positive("proton mass", m_p)?;
    Ok(coulomb_constant_term() / (units.grav_const * m_e * m_p))
}

/// `q² / (4π ε₀)` in J·m.
pub fn coulomb_constant_term() -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub size: f64,
    pub mass: f64,
    pub collapse_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FifthPowerScaling {
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of `log τ` against `log L`.
    pub log_log_slope: f64,
}

/// Collapse times at constant density, `M = ρ L³`, so that `τ ∝ L⁻⁵`.
pub fn fifth_power_scaling_check(
    density: f64,
    sizes: &[f64],
    epsilon: f64,
    units: &UnitSystem,
) -> Result<FifthPowerScaling> {
    check_positive("density", density)?;
    check_positive("epsilon", epsilon)?;
    for &s in sizes {
        check_positive("size", s)?;
    }
    let mut distinct: Vec<f64> = sizes.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Domain("scaling check needs at least two distinct sizes".into()));
    }
    let points = sizes
        .iter()
        .map(|&size| {
            let mass = density * size.powi(3);
            collapse_time_estimate(epsilon, mass, size, units).map(|collapse_time| ScalingPoint {
                size,
                mass,
                collapse_time,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.size.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.collapse_time.ln()).collect();
    let log_log_slope = crate::stats::linear_fit(&xs, &ys)?.slope;
    Ok(FifthPowerScaling { points, log_log_slope })
}
