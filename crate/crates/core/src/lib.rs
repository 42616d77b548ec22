//! Deterministic gravity-induced wavefunction collapse.
//!
//! A configuration-space wavefunction evolves under a non-Hermitian
//! Hamiltonian whose gravitational source is the set of Bohmian particle
//! positions. The small imaginary part `ε` of the gravitational coupling
//! amplifies the branch of a superposition that contains the Bohmian
//! positions and suppresses the others, while the positions themselves follow
//! the usual guidance equation.
//!
//! The crate is organised bottom-up:
//!
//! * [`units`] and [`estimators`]: unit systems and closed-form
//!   order-of-magnitude estimates (collapse time, Coulomb/gravity ratio).
//! * [`grid`], [`wavefunction`], [`kinematics`]: grids, states, densities,
//!   currents and Bohmian velocities.
//! * [`hamiltonian`]: internal potentials, Bohmian-sourced gravity and the
//!   localization potential.
//! * [`propagator`]: split-step propagation of the coupled system.
//! * [`observables`], [`stats`], [`ensemble`]: measurements and Monte Carlo.
//! * [`scenarios`]: ready-made experiments.
//! * [`config`], [`output`], [`checkpoint`]: configuration, reports and
//!   binary checkpoints used by the command-line tool.

pub mod checkpoint;
pub mod config;
pub mod ensemble;
mod error;
pub mod estimators;
pub mod grid;
pub mod hamiltonian;
pub mod kinematics;
pub mod observables;
pub mod output;
pub mod params;
pub mod propagator;
pub mod scenarios;
pub mod stats;
pub mod units;
pub mod wavefunction;

pub use error::{Error, Result};
pub use grid::{Axis, GridSpec};
pub use params::{ModelParams, ParticleSpec};
pub use units::UnitSystem;
pub use wavefunction::{BohmianConfiguration, WaveFunction};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
