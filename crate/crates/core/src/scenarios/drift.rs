//! Energy drift of a trapped particle under the localization term.

use serde::{Deserialize, Serialize};

use super::{positive, Numerics, ScenarioOutput, Series};
use crate::hamiltonian::InternalPotential;
use crate::observables::{energies_with, localization_derivative, ObservableSpec};
use crate::params::ParticleSpec;
use crate::propagator::{relax_ground_state, BohmianMode, Propagator, PropagatorState, RelaxationOptions};
use crate::wavefunction::{gaussian_amplitude, BohmianConfiguration, WaveFunction};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftInitial {
    /// Ground state of the full Hermitian Hamiltonian at the initial `q`.
    #[default]
    Ground,
    /// Ground state displaced by `displacement`.
    Coherent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenstateDriftSpec {
    pub mass: f64,
    pub omega: f64,
    /// Gravitational strength γ of the self-source `γ m²`.
    pub grav_strength: f64,
    pub initial: DriftInitial,
    pub displacement: f64,
    pub bohmian: BohmianMode,
    pub q_position: f64,
    /// Imaginary time step for the ground-state relaxation.
    pub dtau: f64,
    pub observe_every: u64,
}

impl Default for EigenstateDriftSpec {
    fn default() -> Self {
        EigenstateDriftSpec {
            mass: 1.0,
            omega: 1.0,
            grav_strength: 1e-3,
            initial: DriftInitial::Ground,
            displacement: 1.0,
            bohmian: BohmianMode::Pinned,
            q_position: 0.0,
            dtau: 1e-3,
            observe_every: 10,
        }
    }
}

impl EigenstateDriftSpec {
    pub fn validate(&self) -> Result<()> {
        positive("mass", self.mass)?;
        positive("omega", self.omega)?;
        if !(self.grav_strength.is_finite() && self.grav_strength >= 0.0) {
            return Err(Error::Spec("grav_strength must be >= 0".into()));
        }
        positive("dtau", self.dtau)?;
        positive("observe_every", self.observe_every as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenstateDriftReport {
    pub spec: EigenstateDriftSpec,
    pub dt: f64,
    pub steps: u64,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Largest `|E(t) - E(0)|`.
    pub max_energy_change: f64,
    /// `max |E(t) - E(0)| / t_max`.
    pub drift_rate: f64,
    /// `1e-6 |E(0)|` per unit time.
    pub eigenstate_threshold: f64,
    pub relative_energy_drift: f64,
    /// Localization-only `d⟨H⟩/dt` at t = 0.
    pub initial_localization_derivative: f64,
    pub norm_drift: f64,
    pub stalled: u64,
}

pub fn eigenstate_drift_report(spec: &EigenstateDriftSpec, numerics: &Numerics) -> Result<(EigenstateDriftReport, Series)> {
    spec.validate()?;
    let grid = numerics.grid(1)?;
    let sigma = (numerics.hbar / (spec.mass * spec.omega)).sqrt();
    let guess = WaveFunction::from_fn(grid, vec![0], 1, |_, x| gaussian_amplitude(x[0], spec.q_position, sigma, 0.0))?;
    let mut params = numerics.params(
        vec![ParticleSpec::new(spec.mass).collective(true)],
        spec.grav_strength,
        vec![InternalPotential::Harmonic { omega: spec.omega }],
    );
    let q = BohmianConfiguration::new(vec![vec![spec.q_position]]);
    params.dt = numerics.resolve_dt(&guess, &q, &params)?;
    let prop = Propagator::new(&guess, &params)?
        .with_mode(numerics.flow_mode)
        .with_bohmian(spec.bohmian);
    let opts = RelaxationOptions::new(spec.dtau, 1e-15, 2_000_000).with_state_tolerance(1e-12);
    let (ground, _) = relax_ground_state(&prop, guess, &q, &opts)?;
    let psi0 = match spec.initial {
        DriftInitial::Ground => ground,
        DriftInitial::Coherent => {
            let shift = (spec.displacement / ground.grid().axes[0].dx()).round() as usize;
            let n = ground.grid().axes[0].points;
            let amps = (0..n).map(|i| ground.amplitudes()[(i + n - shift % n) % n]).collect();
            ground.with_amplitudes(amps)?
        }
    };
    let initial_localization_derivative = localization_derivative(&psi0, &q, &params, &ObservableSpec::Hamiltonian)?;
    let energy = |st: &PropagatorState| -> Result<f64> {
        Ok(energies_with(&st.psi, &st.q, prop.builder(), prop.spectral())?.total())
    };
    let mut state = PropagatorState::new(psi0, q)?;
    let n_steps = params.n_steps();
    let e0 = energy(&state)?;
    let mut series = Series::new("energy", &["t", "energy", "log_norm", "q"]);
    series.push(vec![0.0, e0, 0.0, state.q.positions[0][0]]);
    let mut max_change: f64 = 0.0;
    let mut e_last = e0;
    for s in 1..=n_steps {
        prop.step(&mut state)?;
        if s % spec.observe_every == 0 || s == n_steps {
            let e = energy(&state)?;
            max_change = max_change.max((e - e0).abs());
            e_last = e;
            series.push(vec![state.t, e, state.psi.log_norm, state.q.positions[0][0]]);
        }
    }
    let report = EigenstateDriftReport {
        spec: spec.clone(),
        dt: params.dt,
        steps: n_steps,
        initial_energy: e0,
        final_energy: e_last,
        max_energy_change: max_change,
        drift_rate: if state.t > 0.0 { max_change / state.t } else { 0.0 },
        eigenstate_threshold: 1e-6 * e0.abs(),
        relative_energy_drift: max_change / e0.abs(),
        initial_localization_derivative,
        norm_drift: if numerics.epsilon == 0.0 {
            ((2.0 * state.psi.log_norm).exp() - 1.0).abs()
        } else {
            f64::NAN
        },
        stalled: state.stalled_count,
    };
    Ok((report, series))
}

pub fn eigenstate_drift(spec: &EigenstateDriftSpec, numerics: &Numerics) -> Result<ScenarioOutput> {
    let (report, series) = eigenstate_drift_report(spec, numerics)?;
    ScenarioOutput::new("eigenstate_drift", &report, vec![series])
}
