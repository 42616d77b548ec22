//! Physical and numerical model parameters (natural units, ħ = 1 by default).

use serde::{Deserialize, Serialize};

use crate::hamiltonian::InternalPotential;
use crate::{Error, Result};

/// Default imaginary part of the gravitational coupling.
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub mass: f64,
    /// Multiplies this particle's mass when it acts as a gravitational
    /// source. Values above 1 stand in for a macroscopic body.
    #[serde(default = "one")]
    pub source_scale: f64,
    /// Offset of this particle's box in physical space. Particles with
    /// different origins are treated as remote: distances between them are
    /// not wrapped.
    #[serde(default)]
    pub origin: Vec<f64>,
    /// A collective coordinate also gravitates towards its own Bohmian
    /// position. Unset means "collective iff it is the only particle".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collective: Option<bool>,
}

fn one() -> f64 {
    1.0
}

impl ParticleSpec {
    pub fn new(mass: f64) -> Self {
        ParticleSpec {
            mass,
            source_scale: 1.0,
            origin: Vec::new(),
            collective: None,
        }
    }

    pub fn collective(mut self, yes: bool) -> Self {
        self.collective = Some(yes);
        self
    }

    pub fn with_source_scale(mut self, s: f64) -> Self {
        self.source_scale = s;
        self
    }

    pub fn with_origin(mut self, origin: Vec<f64>) -> Self {
        self.origin = origin;
        self
    }

    /// Origin coordinate along spatial dimension `k` (zero when unset).
    pub fn origin_coord(&self, k: usize) -> f64 {
        self.origin.get(k).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub epsilon: f64,
    /// Dimensionless gravitational strength γ.
    pub grav_strength: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    pub particles: Vec<ParticleSpec>,
    /// Softening length of the `1/(s + a)` kernel.
    pub softening: f64,
    /// Gaussian smearing of the Bohmian mass density; 0 means point sources.
    #[serde(default)]
    pub smear_length: f64,
    pub dt: f64,
    pub t_max: f64,
    #[serde(default)]
    pub seed: u64,
    /// Whether a non-collective particle's localization potential includes
    /// its own Bohmian position.
    #[serde(default = "yes")]
    pub localization_self_terms: bool,
    #[serde(default)]
    pub internal: Vec<InternalPotential>,
}

fn yes() -> bool {
    true
}

impl ModelParams {
    /// Single free particle with the default coupling; callers adjust fields.
    pub fn single(mass: f64, softening: f64, dt: f64) -> Self {
        ModelParams {
            epsilon: DEFAULT_EPSILON,
            grav_strength: 0.0,
            hbar: 1.0,
            particles: vec![ParticleSpec::new(mass)],
            softening,
            smear_length: 0.0,
            dt,
            t_max: 0.0,
            seed: 0,
            localization_self_terms: true,
            internal: Vec::new(),
        }
    }

    pub fn masses(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.mass).collect()
    }

    pub fn is_collective(&self, n: usize) -> bool {
        self.particles[n].collective.unwrap_or(self.particles.len() == 1)
    }

    /// Number of whole steps needed to reach `t_max`.
    pub fn n_steps(&self) -> u64 {
        if self.t_max <= 0.0 {
            0
        } else {
            (self.t_max / self.dt - 1e-9).ceil() as u64
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Spec(what));
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !self.grav_strength.is_finite() || self.grav_strength < 0.0 {
            return bad(format!("grav_strength must be >= 0, got {}", self.grav_strength));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return bad(format!("hbar must be > 0, got {}", self.hbar));
        }
        if self.particles.is_empty() {
            return bad("at least one particle is required".into());
        }
        for (n, p) in self.particles.iter().enumerate() {
            if !(p.mass.is_finite() && p.mass > 0.0) {
                return bad(format!("particle {n}: mass must be > 0, got {}", p.mass));
            }
            if !(p.source_scale.is_finite() && p.source_scale >= 0.0) {
                return bad(format!("particle {n}: source_scale must be >= 0"));
            }
        }
        if !(self.softening.is_finite() && self.softening > 0.0) {
            return bad(format!("softening must be > 0, got {}", self.softening));
        }
        if !(self.smear_length.is_finite() && self.smear_length >= 0.0) {
            return bad(format!("smear_length must be >= 0, got {}", self.smear_length));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return bad(format!("t_max must be >= 0, got {}", self.t_max));
        }
        for term in &self.internal {
            term.validate()?;
        }
        Ok(())
    }
}
