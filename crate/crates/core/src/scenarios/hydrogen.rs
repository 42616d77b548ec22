//! Bound pair with a weak Bohmian-sourced gravitational attraction.

use serde::{Deserialize, Serialize};

use super::{positive, Numerics, ScenarioOutput, Series};
use crate::estimators::coulomb_gravity_ratio;
use crate::hamiltonian::InternalPotential;
use crate::params::ParticleSpec;
use crate::propagator::{relax_ground_state, Propagator, RelaxationOptions};
use crate::units::UnitSystem;
use crate::wavefunction::{gaussian_amplitude, BohmianConfiguration, WaveFunction};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HydrogenSpec {
    pub electron_mass: f64,
    pub proton_mass: f64,
    /// Strength `C` of the pairwise soft Coulomb attraction.
    pub coulomb_strength: f64,
    pub coulomb_softening: f64,
    /// Weak trap keeping the pair near the origin.
    pub trap_omega: f64,
    /// Effective Coulomb/gravity ratio, `γ = C / X_eff`.
    pub x_eff: f64,
    /// Ratio the linear response is extrapolated to.
    pub x_target: f64,
    pub dtau: f64,
    pub energy_tolerance: f64,
    pub state_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for HydrogenSpec {
    fn default() -> Self {
        HydrogenSpec {
            electron_mass: 1.0,
            proton_mass: 10.0,
            coulomb_strength: 1.0,
            coulomb_softening: 1.0,
            trap_omega: 0.2,
            x_eff: 1e6,
            x_target: 1e39,
            dtau: 0.01,
            energy_tolerance: 1e-14,
            state_tolerance: 1e-10,
            max_iterations: 500_000,
        }
    }
}

impl HydrogenSpec {
    pub fn validate(&self) -> Result<()> {
        positive("electron_mass", self.electron_mass)?;
        positive("proton_mass", self.proton_mass)?;
        positive("coulomb_strength", self.coulomb_strength)?;
        positive("coulomb_softening", self.coulomb_softening)?;
        positive("trap_omega", self.trap_omega)?;
        positive("x_eff", self.x_eff)?;
        positive("x_target", self.x_target)?;
        positive("dtau", self.dtau)?;
        positive("energy_tolerance", self.energy_tolerance)?;
        positive("state_tolerance", self.state_tolerance)?;
        positive("max_iterations", self.max_iterations as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HydrogenPoint {
    pub x_eff: f64,
    pub grav_strength: f64,
    pub energy: f64,
    /// `|E(γ) - E(0)| / |E(0)|`.
    pub energy_shift: f64,
    /// `∫ |ρ_γ - ρ₀|` over configuration space.
    pub density_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HydrogenReport {
    pub spec: HydrogenSpec,
    pub unperturbed_energy: f64,
    pub points: Vec<HydrogenPoint>,
    /// Shift at `X_eff` over shift at `2 X_eff`.
    pub energy_shift_ratio: f64,
    pub density_shift_ratio: f64,
    /// Linear extrapolation of the relative shifts to `x_target`.
    pub extrapolated_energy_shift: f64,
    pub extrapolated_density_shift: f64,
    /// Coulomb/gravity ratio of the electron-proton pair in SI units.
    pub physical_ratio: f64,
}

pub fn hydrogen_report(spec: &HydrogenSpec, numerics: &Numerics) -> Result<HydrogenReport> {
    spec.validate()?;
    let grid = numerics.grid(2)?;
    let guess = WaveFunction::from_fn(grid, vec![0, 1], 1, |_, x| {
        gaussian_amplitude(x[0], 0.0, 1.5, 0.0) * gaussian_amplitude(x[1], 0.0, 1.0, 0.0)
    })?;
    let q = BohmianConfiguration::new(vec![vec![0.0], vec![0.0]]);
    let internal = vec![
        InternalPotential::PairwiseSoftCoulomb {
            strength: spec.coulomb_strength,
            softening: spec.coulomb_softening,
        },
        InternalPotential::Harmonic { omega: spec.trap_omega },
    ];
    let opts = RelaxationOptions::new(spec.dtau, spec.energy_tolerance, spec.max_iterations)
        .with_state_tolerance(spec.state_tolerance);
    let solve = |gamma: f64, guess: WaveFunction| -> Result<(WaveFunction, f64)> {
        let mut params = numerics.params(
            vec![ParticleSpec::new(spec.electron_mass), ParticleSpec::new(spec.proton_mass)],
            gamma,
            internal.clone(),
        );
        params.dt = spec.dtau;
        let prop = Propagator::new(&guess, &params)?;
        relax_ground_state(&prop, guess, &q, &opts)
    };
    let (rho0_state, e0) = solve(0.0, guess)?;
    let rho0 = rho0_state.density();
    let dv = rho0_state.grid().cell_volume();
    let mut points = Vec::new();
    for x_eff in [spec.x_eff, 2.0 * spec.x_eff] {
        let gamma = spec.coulomb_strength / x_eff;
        let (state, e) = solve(gamma, rho0_state.clone())?;
        let density_shift = state.density().iter().zip(&rho0).map(|(a, b)| (a - b).abs()).sum::<f64>() * dv;
        points.push(HydrogenPoint {
            x_eff,
            grav_strength: gamma,
            energy: e,
            energy_shift: (e - e0).abs() / e0.abs(),
            density_shift,
        });
    }
    let scale = spec.x_eff / spec.x_target;
    Ok(HydrogenReport {
        spec: spec.clone(),
        unperturbed_energy: e0,
        energy_shift_ratio: points[0].energy_shift / points[1].energy_shift,
        density_shift_ratio: points[0].density_shift / points[1].density_shift,
        extrapolated_energy_shift: points[0].energy_shift * scale,
        extrapolated_density_shift: points[0].density_shift * scale,
        physical_ratio: coulomb_gravity_ratio(&UnitSystem::si())?,
        points,
    })
}

pub fn hydrogen_analog(spec: &HydrogenSpec, numerics: &Numerics) -> Result<ScenarioOutput> {
    let report = hydrogen_report(spec, numerics)?;
    let mut s = Series::new("shifts", &["x_eff", "grav_strength", "energy", "energy_shift", "density_shift"]);
    for p in &report.points {
        s.push(vec![p.x_eff, p.grav_strength, p.energy, p.energy_shift, p.density_shift]);
    }
    ScenarioOutput::new("hydrogen_analog", &report, vec![s])
}
