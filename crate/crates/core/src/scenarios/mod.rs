//! Ready-made experiments.
//!
//! Each scenario takes its own parameters plus a shared [`Numerics`] block
//! (grid, coupling, time stepping) and returns a JSON report together with
//! one or more tabular [`Series`].

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSpec;
use crate::grid::{Axis, GridSpec};
use crate::hamiltonian::{assemble_hamiltonian, suggest_dt, InternalPotential};
use crate::params::{ModelParams, ParticleSpec};
use crate::propagator::FlowMode;
use crate::wavefunction::{BohmianConfiguration, WaveFunction};
use crate::{Error, Result};

pub mod bipartite;
pub mod drift;
pub mod hydrogen;
pub mod oracle;
pub mod pointer;

pub use bipartite::{bipartite_no_signal, BipartiteSpec};
pub use drift::{eigenstate_drift, EigenstateDriftSpec};
pub use hydrogen::{hydrogen_analog, HydrogenSpec};
pub use oracle::{oracle_crossing_time, two_branch_oracle, two_branch_oracle_report, TwoBranchOracleSpec};
pub use pointer::{
    mass_identical_superposition, pointer_cat, scaling_sweep, MassIdenticalSpec, PointerCatSpec, ScalingSweepSpec,
};

/// Grid, coupling and stepping shared by all scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Points per axis.
    pub grid_points: usize,
    /// Box length per axis.
    pub box_length: f64,
    pub epsilon: f64,
    pub hbar: f64,
    /// Softening of the gravitational kernel.
    pub softening: f64,
    pub smear_length: f64,
    /// Fixed time step; `None` selects it from the phase-error rule.
    pub dt: Option<f64>,
    pub t_max: f64,
    pub seed: u64,
    pub flow_mode: FlowMode,
    pub localization_self_terms: bool,
}

impl Numerics {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::Spec("grid_points must be at least 2".into()));
        }
        if !(self.box_length.is_finite() && self.box_length > 0.0) {
            return Err(Error::Spec("box_length must be > 0".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::Spec(format!("dt must be > 0, got {dt}")));
            }
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(Error::Spec(format!("t_max must be >= 0, got {}", self.t_max)));
        }
        Ok(())
    }

    pub fn grid(&self, dims: usize) -> Result<GridSpec> {
        GridSpec::new(vec![Axis::new(self.grid_points, self.box_length); dims])
    }

    /// Model parameters with a placeholder step; see [`resolve_dt`].
    pub fn params(&self, particles: Vec<ParticleSpec>, grav_strength: f64, internal: Vec<InternalPotential>) -> ModelParams {
        ModelParams {
            epsilon: self.epsilon,
            grav_strength,
            hbar: self.hbar,
            particles,
            softening: self.softening,
            smear_length: self.smear_length,
            dt: self.dt.unwrap_or(1.0),
            t_max: self.t_max,
            seed: self.seed,
            localization_self_terms: self.localization_self_terms,
            internal,
        }
    }

    /// The configured step, or the phase-error rule evaluated on `psi` at `q`.
    pub fn resolve_dt(&self, psi: &WaveFunction, q: &BohmianConfiguration, params: &ModelParams) -> Result<f64> {
        match self.dt {
            Some(dt) => Ok(dt),
            None => {
                let h = assemble_hamiltonian(psi, q, params)?;
                Ok(suggest_dt(&h, psi.grid()))
            }
        }
    }
}

/// Named table of numbers written as CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Series {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Wavefunction captured at the end of a run, written as a binary checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub name: String,
    pub psi: WaveFunction,
    pub time: f64,
    pub step: u64,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub kind: &'static str,
    pub report: serde_json::Value,
    pub series: Vec<Series>,
    pub states: Vec<StateSnapshot>,
}

impl ScenarioOutput {
    pub fn new<T: Serialize>(kind: &'static str, report: &T, series: Vec<Series>) -> Result<Self> {
        let report = serde_json::to_value(report).map_err(|e| Error::Spec(format!("report serialization: {e}")))?;
        Ok(ScenarioOutput {
            kind,
            report,
            series,
            states: Vec::new(),
        })
    }

    pub fn with_states(mut self, states: Vec<StateSnapshot>) -> Self {
        self.states = states;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    EigenstateDrift(EigenstateDriftSpec),
    HydrogenAnalog(HydrogenSpec),
    PointerCat(PointerCatSpec),
    ScalingSweep(ScalingSweepSpec),
    MassIdenticalSuperposition(MassIdenticalSpec),
    BipartiteNoSignal(BipartiteSpec),
    TwoBranchOracle(TwoBranchOracleSpec),
}

impl ScenarioSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioSpec::EigenstateDrift(_) => "eigenstate_drift",
            ScenarioSpec::HydrogenAnalog(_) => "hydrogen_analog",
            ScenarioSpec::PointerCat(_) => "pointer_cat",
            ScenarioSpec::ScalingSweep(_) => "scaling_sweep",
            ScenarioSpec::MassIdenticalSuperposition(_) => "mass_identical_superposition",
            ScenarioSpec::BipartiteNoSignal(_) => "bipartite_no_signal",
            ScenarioSpec::TwoBranchOracle(_) => "two_branch_oracle",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScenarioSpec::EigenstateDrift(s) => s.validate(),
            ScenarioSpec::HydrogenAnalog(s) => s.validate(),
            ScenarioSpec::PointerCat(s) => s.validate(),
            ScenarioSpec::ScalingSweep(s) => s.validate(),
            ScenarioSpec::MassIdenticalSuperposition(s) => s.validate(),
            ScenarioSpec::BipartiteNoSignal(s) => s.validate(),
            ScenarioSpec::TwoBranchOracle(s) => s.validate(),
        }
    }

    /// Numerics used when the configuration leaves them unset.
    pub fn default_numerics(&self) -> Numerics {
        let base = Numerics {
            grid_points: 512,
            box_length: 40.0,
            epsilon: 0.1,
            hbar: 1.0,
            softening: 1.0,
            smear_length: 0.0,
            dt: None,
            t_max: 40.0,
            seed: 0,
            flow_mode: FlowMode::Normalized,
            localization_self_terms: true,
        };
        match self {
            ScenarioSpec::EigenstateDrift(_) => Numerics {
                grid_points: 128,
                box_length: 16.0,
                epsilon: 1e-2,
                t_max: 2.0,
                ..base
            },
            ScenarioSpec::HydrogenAnalog(_) => Numerics {
                grid_points: 64,
                box_length: 20.0,
                epsilon: 1e-3,
                t_max: 0.0,
                ..base
            },
            ScenarioSpec::BipartiteNoSignal(_) => Numerics {
                grid_points: 64,
                box_length: 20.0,
                epsilon: 0.5,
                t_max: 15.0,
                ..base
            },
            ScenarioSpec::TwoBranchOracle(_) => Numerics { t_max: 10.0, ..base },
            _ => base,
        }
    }

    /// Whether the scenario uses the `[ensemble]` section.
    pub fn uses_ensemble(&self) -> bool {
        matches!(self, ScenarioSpec::PointerCat(_) | ScenarioSpec::BipartiteNoSignal(_))
    }
}

pub fn run_scenario(spec: &ScenarioSpec, numerics: &Numerics, ensemble: Option<&EnsembleSpec>) -> Result<ScenarioOutput> {
    spec.validate()?;
    numerics.validate()?;
    match spec {
        ScenarioSpec::EigenstateDrift(s) => eigenstate_drift(s, numerics),
        ScenarioSpec::HydrogenAnalog(s) => hydrogen_analog(s, numerics),
        ScenarioSpec::PointerCat(s) => pointer_cat(s, numerics, ensemble),
        ScenarioSpec::ScalingSweep(s) => scaling_sweep(s, numerics),
        ScenarioSpec::MassIdenticalSuperposition(s) => mass_identical_superposition(s, numerics),
        ScenarioSpec::BipartiteNoSignal(s) => bipartite_no_signal(s, numerics, ensemble),
        ScenarioSpec::TwoBranchOracle(s) => two_branch_oracle_report(s, numerics),
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Spec(format!("{name} must be > 0, got {v}")))
    }
}

pub(crate) fn threshold(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 0.5 {
        Ok(())
    } else {
        Err(Error::Spec(format!("{name} must lie in (0, 0.5), got {v}")))
    }
}
