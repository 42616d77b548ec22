//! Unit systems.
//!
//! Dynamics run in natural units (ħ = 1, masses in units of a reference mass,
//! gravity folded into a dimensionless strength γ). SI values are only used by
//! the closed-form estimators, where the physical constants matter.

use serde::{Deserialize, Serialize};

/// Reduced Planck constant, J·s.
pub const HBAR_SI: f64 = 1.0545718e-34;
/// Newton's constant, m³ kg⁻¹ s⁻².
pub const G_SI: f64 = 6.674e-11;
/// Elementary charge, C (CODATA 2018, exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
/// Vacuum permittivity, F/m (CODATA 2018).
pub const VACUUM_PERMITTIVITY: f64 = 8.8541878128e-12;
/// Electron mass, kg (CODATA 2018).
pub const ELECTRON_MASS: f64 = 9.1093837015e-31;
/// Proton mass, kg (CODATA 2018).
pub const PROTON_MASS: f64 = 1.67262192369e-27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitMode {
    #[serde(rename = "si")]
    SI,
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub mode: UnitMode,
    pub hbar: f64,
    /// Newton's constant in SI mode, the dimensionless strength γ in natural
    /// mode.
    pub grav_const: f64,
}

impl UnitSystem {
    pub const fn si() -> Self {
        UnitSystem {
            mode: UnitMode::SI,
            hbar: HBAR_SI,
            grav_const: G_SI,
        }
    }

    pub const fn natural(gamma: f64) -> Self {
        UnitSystem {
            mode: UnitMode::Natural,
            hbar: 1.0,
            grav_const: gamma,
        }
    }

    pub fn is_si(&self) -> bool {
        self.mode == UnitMode::SI
    }
}

impl Default for UnitSystem {
    fn default() -> Self {
        UnitSystem::natural(1.0)
    }
}
