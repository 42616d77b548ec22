//! Coupled time integration of the wavefunction and the Bohmian point.
//!
//! One step of length `dt`:
//!
//! 1. Strang split-step for `iħ ∂ψ = (T + V - i(-L))ψ` with the Bohmian
//!    positions frozen: potential half-step `exp((-iV + L) dt/2ħ)`, kinetic
//!    step in Fourier space, potential half-step.
//! 2. Renormalization; the removed factor is accumulated in `log_norm`.
//! 3. RK4 step of `dq/dt = v(q)` in the updated, normalized wavefunction.
//!
//! In normalized-flow mode the half-steps use `L - ⟨L⟩` and each half-step
//! is projected back onto the unit sphere, which is the exact solution of
//! the norm-preserving flow for a position-diagonal `L`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::NanDiagnostic;
use crate::grid::Spectral;
use crate::hamiltonian::{HamiltonianBuilder, Instantaneous, PotentialField, SourceTime};
use crate::kinematics::{PointVelocity, VelocityField, VelocityLimits};
use crate::params::ModelParams;
use crate::wavefunction::{BohmianConfiguration, WaveFunction};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    #[default]
    Normalized,
    Unnormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BohmianMode {
    #[default]
    CoEvolve,
    /// Positions stay where they are.
    Pinned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorState {
    pub psi: WaveFunction,
    pub q: BohmianConfiguration,
    pub t: f64,
    pub step_count: u64,
    /// Number of RK4 stages that met a density node.
    pub stalled_count: u64,
}

impl PropagatorState {
    pub fn new(psi: WaveFunction, q: BohmianConfiguration) -> Result<Self> {
        q.check_layout(&psi)?;
        Ok(PropagatorState {
            psi,
            q,
            t: 0.0,
            step_count: 0,
            stalled_count: 0,
        })
    }
}

/// Returned by observers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub steps: u64,
    pub observations: u64,
    pub stopped_early: bool,
}

#[derive(Clone)]
pub struct Propagator {
    builder: HamiltonianBuilder,
    spectral: Spectral,
    dt: f64,
    kinetic_phase: Arc<Vec<C64>>,
    limits: VelocityLimits,
    masses: Vec<f64>,
    pub mode: FlowMode,
    pub bohmian: BohmianMode,
    source_time: Arc<dyn SourceTime>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("dt", &self.dt)
            .field("mode", &self.mode)
            .field("bohmian", &self.bohmian)
            .finish()
    }
}

/// `Σ_a ħ² k_a² / 2m_a` for every Fourier mode of the configuration grid.
pub fn kinetic_symbol(psi: &WaveFunction, spectral: &Spectral, hbar: f64, axis_mass: &[f64]) -> Vec<f64> {
    let grid = psi.grid();
    let mut multi = vec![0; grid.dims()];
    (0..grid.total_points())
        .map(|i| {
            grid.unravel(i, &mut multi);
            (0..grid.dims())
                .map(|a| {
                    let k = spectral.wavenumbers(a)[multi[a]];
                    hbar * hbar * k * k / (2.0 * axis_mass[a])
                })
                .sum()
        })
        .collect()
}

impl Propagator {
    pub fn new(psi: &WaveFunction, params: &ModelParams) -> Result<Self> {
        let builder = HamiltonianBuilder::new(psi, params)?;
        let spectral = Spectral::new(psi.grid());
        let mut p = Propagator {
            kinetic_phase: Arc::new(Vec::new()),
            limits: VelocityLimits::for_step(psi.grid(), params.dt),
            masses: params.masses(),
            dt: params.dt,
            builder,
            spectral,
            mode: FlowMode::default(),
            bohmian: BohmianMode::default(),
            source_time: Arc::new(Instantaneous),
        };
        p.set_dt(params.dt, psi);
        Ok(p)
    }

    pub fn with_mode(mut self, mode: FlowMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_bohmian(mut self, bohmian: BohmianMode) -> Self {
        self.bohmian = bohmian;
        self
    }

    pub fn with_source_time(mut self, source_time: Arc<dyn SourceTime>) -> Self {
        self.source_time = source_time;
        self
    }

    /// Changes the step length (negative steps run backwards in time).
    pub fn set_dt(&mut self, dt: f64, psi: &WaveFunction) {
        let kin = self.builder.kinetic();
        let symbol = kinetic_symbol(psi, &self.spectral, kin.hbar, &kin.axis_mass);
        self.kinetic_phase = Arc::new(symbol.iter().map(|&e| C64::from_polar(1.0, -e * dt / kin.hbar)).collect());
        self.dt = dt;
        self.limits = VelocityLimits::for_step(psi.grid(), dt.abs());
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn builder(&self) -> &HamiltonianBuilder {
        &self.builder
    }

    pub fn params(&self) -> &ModelParams {
        self.builder.params()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn limits(&self) -> VelocityLimits {
        self.limits
    }

    pub fn set_limits(&mut self, limits: VelocityLimits) {
        self.limits = limits;
    }

    fn kinetic_step(&self, psi: &mut WaveFunction) {
        for c in 0..psi.components() {
            let block = psi.component_mut(c);
            self.spectral.forward(block);
            block.iter_mut().zip(self.kinetic_phase.iter()).for_each(|(a, p)| *a *= p);
            self.spectral.inverse(block);
        }
    }

    /// Multiplies by `exp((-iV + (L - shift)) τ/ħ)`.
    fn potential_step(&self, psi: &mut WaveFunction, v: &[f64], l: &[f64], shift: f64, tau: f64) {
        let hbar = self.builder.kinetic().hbar;
        let n = v.len();
        let factors: Vec<C64> = v
            .iter()
            .zip(l)
            .map(|(&vh, &vl)| C64::from_polar(((vl - shift) * tau / hbar).exp(), -vh * tau / hbar))
            .collect();
        for c in 0..psi.components() {
            psi.component_mut(c).iter_mut().zip(&factors).for_each(|(a, f)| *a *= f);
        }
        debug_assert_eq!(n, psi.grid().total_points());
    }

    fn localization_mean(psi: &WaveFunction, l: &[f64]) -> f64 {
        let n = psi.grid().total_points();
        let mut num = 0.0;
        let mut den = 0.0;
        for c in 0..psi.components() {
            for (a, &li) in psi.component(c).iter().zip(l) {
                let r = a.norm_sqr();
                num += r * li;
                den += r;
            }
        }
        debug_assert_eq!(l.len(), n);
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Hermitian and localization potentials at the current Bohmian
    /// positions, expanded to the configuration grid.
    pub fn potentials(&self, q: &BohmianConfiguration, t: f64) -> Result<(PotentialField, PotentialField)> {
        let sources = self.source_time.sources(q, t);
        let h = self.builder.assemble(&sources)?;
        Ok((h.hermitian, h.localization))
    }

    /// Advances the wavefunction by one step with `q` frozen. The state is
    /// left normalized; the norm change goes into `log_norm`.
    pub fn step_wavefunction(&self, psi: &mut WaveFunction, q: &BohmianConfiguration, t: f64, mode: FlowMode) -> Result<()> {
        let (vh, vl) = self.potentials(q, t)?;
        let v = vh.to_dense();
        let l = vl.to_dense();
        let half = 0.5 * self.dt;
        let hbar = self.builder.kinetic().hbar;
        match mode {
            FlowMode::Unnormalized => {
                self.potential_step(psi, &v, &l, 0.0, half);
                self.kinetic_step(psi);
                self.potential_step(psi, &v, &l, 0.0, half);
                if psi.norm_squared().is_finite() && psi.norm_squared() > 0.0 {
                    psi.normalize()?;
                }
            }
            FlowMode::Normalized => {
                for stage in 0..2 {
                    let shift = Self::localization_mean(psi, &l);
                    self.potential_step(psi, &v, &l, shift, half);
                    let n2 = psi.norm_squared();
                    if n2.is_finite() && n2 > 0.0 {
                        psi.normalize()?;
                        psi.log_norm += shift * half / hbar;
                    }
                    if stage == 0 {
                        self.kinetic_step(psi);
                    }
                }
            }
        }
        Ok(())
    }

    fn check_finite(&self, state: &PropagatorState, vh: Option<&PotentialField>, vl: Option<&PotentialField>) -> Result<()> {
        let positions_ok = state.q.positions.iter().flatten().all(|x| x.is_finite());
        let n2 = state.psi.norm_squared();
        if state.psi.is_finite() && positions_ok && n2.is_finite() && n2 > 0.0 {
            return Ok(());
        }
        let non_finite = state
            .psi
            .amplitudes()
            .iter()
            .filter(|a| !(a.re.is_finite() && a.im.is_finite()))
            .count();
        Err(Error::Integration(Box::new(NanDiagnostic {
            step: state.step_count,
            time: state.t,
            dt: self.dt,
            norm_squared: n2,
            non_finite_points: non_finite,
            max_abs_hermitian_potential: vh.map_or(f64::NAN, |f| f.max_abs_bound()),
            max_localization_potential: vl.map_or(f64::NAN, |f| f.max_abs_bound()),
            positions: state.q.positions.clone(),
        })))
    }

    /// RK4 step of the guidance equation with `psi` frozen.
    pub fn advance_bohmian(&self, psi: &WaveFunction, q: &BohmianConfiguration) -> Result<(BohmianConfiguration, u64)> {
        let mut eval = PointVelocity::new(psi, &self.spectral, self.builder.kinetic().hbar, &self.masses, self.limits)?;
        let map = psi.axis_particle().to_vec();
        let x0 = q.to_config_point(&map);
        let (x1, stalled) = rk4(&x0, self.dt, |x| eval.at_point(x));
        let mut out = BohmianConfiguration::from_config_point(&x1, &map);
        out.wrap(psi.grid(), &map);
        Ok((out, stalled))
    }

    /// One full coupled step.
    pub fn step(&self, state: &mut PropagatorState) -> Result<()> {
        self.step_with_mode(state, self.mode)
    }

    pub fn step_unnormalized(&self, state: &mut PropagatorState) -> Result<()> {
        self.step_with_mode(state, FlowMode::Unnormalized)
    }

    pub fn step_normalized(&self, state: &mut PropagatorState) -> Result<()> {
        state.psi.require_normalized()?;
        self.step_with_mode(state, FlowMode::Normalized)
    }

    fn step_with_mode(&self, state: &mut PropagatorState, mode: FlowMode) -> Result<()> {
        self.step_wavefunction(&mut state.psi, &state.q, state.t, mode)?;
        state.step_count += 1;
        state.t = state.step_count as f64 * self.dt;
        if let Err(e) = self.check_finite(state, None, None) {
            return Err(self.enrich(e, &state.q, state.t));
        }
        if self.bohmian == BohmianMode::CoEvolve {
            let (q, stalled) = self.advance_bohmian(&state.psi, &state.q)?;
            state.q = q;
            state.stalled_count += stalled;
            self.check_finite(state, None, None)?;
        }
        Ok(())
    }

    fn enrich(&self, e: Error, q: &BohmianConfiguration, t: f64) -> Error {
        match e {
            Error::Integration(mut d) => {
                if let Ok((vh, vl)) = self.potentials(q, t) {
                    d.max_abs_hermitian_potential = vh.max_abs_bound();
                    d.max_localization_potential = vl.max_abs_bound();
                }
                Error::Integration(d)
            }
            other => other,
        }
    }

    /// Runs `n_steps` steps, calling `observe` at step 0 and every `cadence`
    /// steps. `cadence` must divide `n_steps` (when `n_steps > 0`).
    pub fn run(
        &self,
        state: &mut PropagatorState,
        n_steps: u64,
        cadence: u64,
        mut observe: impl FnMut(&PropagatorState) -> Result<Control>,
    ) -> Result<RunSummary> {
        if cadence == 0 || (n_steps > 0 && n_steps % cadence != 0) {
            return Err(Error::Spec(format!(
                "observer cadence {cadence} must be positive and divide the step count {n_steps}"
            )));
        }
        let mut summary = RunSummary {
            steps: 0,
            observations: 1,
            stopped_early: false,
        };
        if observe(state)? == Control::Stop {
            summary.stopped_early = n_steps > 0;
            return Ok(summary);
        }
        for s in 1..=n_steps {
            self.step(state)?;
            summary.steps += 1;
            if s % cadence == 0 {
                summary.observations += 1;
                if observe(state)? == Control::Stop {
                    summary.stopped_early = s < n_steps;
                    break;
                }
            }
        }
        Ok(summary)
    }
}

/// Classical RK4 for an autonomous vector field; returns the stalled-stage
/// count alongside the new point.
fn rk4(x0: &[f64], dt: f64, mut f: impl FnMut(&[f64]) -> (Vec<f64>, bool)) -> (Vec<f64>, u64) {
    let mut stalled = 0;
    let mut eval = |x: &[f64]| {
        let (v, s) = f(x);
        stalled += s as u64;
        v
    };
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { x0.iter().zip(k).map(|(x, v)| x + a * v).collect() };
    let k1 = eval(x0);
    let k2 = eval(&axpy(0.5 * dt, &k1));
    let k3 = eval(&axpy(0.5 * dt, &k2));
    let k4 = eval(&axpy(dt, &k3));
    let x = (0..x0.len())
        .map(|i| x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    (x, stalled)
}

/// Moves many Bohmian configurations through one wavefunction. Only valid
/// when the wavefunction dynamics does not depend on the positions (no
/// active gravitational source).
pub struct SharedWaveRun<'a> {
    propagator: &'a Propagator,
    pub psi: WaveFunction,
    pub configurations: Vec<BohmianConfiguration>,
    pub t: f64,
    pub step_count: u64,
    pub stalled_count: u64,
}

impl<'a> SharedWaveRun<'a> {
    pub fn new(propagator: &'a Propagator, psi: WaveFunction, configurations: Vec<BohmianConfiguration>) -> Result<Self> {
        if !propagator.builder.is_position_independent() {
            return Err(Error::Spec(
                "a shared wavefunction requires position-independent dynamics (no active gravitational source)".into(),
            ));
        }
        for q in &configurations {
            q.check_layout(&psi)?;
        }
        Ok(SharedWaveRun {
            propagator,
            psi,
            configurations,
            t: 0.0,
            step_count: 0,
            stalled_count: 0,
        })
    }

    pub fn step(&mut self) -> Result<()> {
        let p = self.propagator;
        let dummy = &self.configurations.first().cloned().unwrap_or_else(|| {
            BohmianConfiguration::new(vec![Vec::new(); self.psi.n_particles()])
        });
        p.step_wavefunction(&mut self.psi, dummy, self.t, p.mode)?;
        self.step_count += 1;
        self.t = self.step_count as f64 * p.dt;
        if !self.psi.is_finite() {
            return Err(Error::Integration(Box::new(NanDiagnostic {
                step: self.step_count,
                time: self.t,
                dt: p.dt,
                norm_squared: self.psi.norm_squared(),
                non_finite_points: self.psi.amplitudes().iter().filter(|a| !a.re.is_finite() || !a.im.is_finite()).count(),
                max_abs_hermitian_potential: f64::NAN,
                max_localization_potential: f64::NAN,
                positions: Vec::new(),
            })));
        }
        let field = VelocityField::compute(&self.psi, &p.spectral, p.builder.kinetic().hbar, &p.masses, p.limits)?;
        let map = self.psi.axis_particle().to_vec();
        let grid = self.psi.grid().clone();
        let mut stalled_total = 0;
        for q in &mut self.configurations {
            let x0 = q.to_config_point(&map);
            let (x1, stalled) = rk4(&x0, p.dt, |x| field.at_point(x));
            *q = BohmianConfiguration::from_config_point(&x1, &map);
            q.wrap(&grid, &map);
            stalled_total += stalled;
        }
        self.stalled_count += stalled_total;
        Ok(())
    }
}

/// Settings of the imaginary-time relaxation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationOptions {
    pub dtau: f64,
    /// Relative energy change allowed between checks.
    pub energy_tolerance: f64,
    /// L2 change of the state allowed between checks.
    pub state_tolerance: f64,
    pub max_iterations: usize,
    pub check_every: usize,
}

impl RelaxationOptions {
    pub fn new(dtau: f64, energy_tolerance: f64, max_iterations: usize) -> Self {
        RelaxationOptions {
            dtau,
            energy_tolerance,
            state_tolerance: f64::INFINITY,
            max_iterations,
            check_every: 50,
        }
    }

    pub fn with_state_tolerance(mut self, tol: f64) -> Self {
        self.state_tolerance = tol;
        self
    }
}

/// Ground state of `T + V_herm` (positions fixed at `q`) by imaginary-time
/// split-step relaxation. Stops when the energy changes by less than
/// `tolerance` (relative) over 50 iterations.
pub fn imaginary_time_ground_state(
    propagator: &Propagator,
    guess: WaveFunction,
    q: &BohmianConfiguration,
    dtau: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(WaveFunction, f64)> {
    relax_ground_state(propagator, guess, q, &RelaxationOptions::new(dtau, tolerance, max_iterations))
}

/// Imaginary-time relaxation with explicit energy and state tolerances,
/// both checked every `check_every` iterations.
pub fn relax_ground_state(
    propagator: &Propagator,
    guess: WaveFunction,
    q: &BohmianConfiguration,
    opts: &RelaxationOptions,
) -> Result<(WaveFunction, f64)> {
    let kin = propagator.builder.kinetic();
    let hbar = kin.hbar;
    let (vh, _) = propagator.potentials(q, 0.0)?;
    let v = vh.to_dense();
    let symbol = kinetic_symbol(&guess, &propagator.spectral, hbar, &kin.axis_mass);
    let dtau = opts.dtau;
    let half: Vec<f64> = v.iter().map(|&x| (-x * 0.5 * dtau / hbar).exp()).collect();
    let kin_factor: Vec<f64> = symbol.iter().map(|&e| (-e * dtau / hbar).exp()).collect();
    let mut psi = guess;
    psi.normalize()?;
    let energy = |psi: &WaveFunction| -> f64 {
        let mut e_kin = 0.0;
        let mut e_pot = 0.0;
        let n = psi.grid().total_points() as f64;
        for c in 0..psi.components() {
            let mut work = psi.component(c).to_vec();
            e_pot += work.iter().zip(&v).map(|(a, vv)| a.norm_sqr() * vv).sum::<f64>();
            propagator.spectral.forward(&mut work);
            e_kin += work.iter().zip(&symbol).map(|(a, s)| a.norm_sqr() * s).sum::<f64>() / n;
        }
        (e_kin + e_pot) * psi.grid().cell_volume()
    };
    let check_every = opts.check_every.max(1);
    let mut last = energy(&psi);
    let mut last_state = psi.clone();
    for it in 1..=opts.max_iterations {
        for c in 0..psi.components() {
            let block = psi.component_mut(c);
            block.iter_mut().zip(&half).for_each(|(a, f)| *a *= f);
            propagator.spectral.forward(block);
            block.iter_mut().zip(&kin_factor).for_each(|(a, f)| *a *= f);
            propagator.spectral.inverse(block);
            block.iter_mut().zip(&half).for_each(|(a, f)| *a *= f);
        }
        psi.normalize()?;
        if it % check_every == 0 {
            let e = energy(&psi);
            let energy_ok = (e - last).abs() <= opts.energy_tolerance * e.abs().max(1e-300);
            let state_ok = opts.state_tolerance.is_infinite() || psi.l2_distance(&last_state) <= opts.state_tolerance;
            if energy_ok && state_ok {
                psi.log_norm = 0.0;
                return Ok((psi, e));
            }
            last = e;
            if opts.state_tolerance.is_finite() {
                last_state = psi.clone();
            }
        }
    }
    Err(Error::Insufficient(format!(
        "imaginary-time relaxation did not converge in {} iterations",
        opts.max_iterations
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::hamiltonian::InternalPotential;
    use crate::wavefunction::gaussian_amplitude;

    fn free_params(dt: f64) -> ModelParams {
        let mut p = ModelParams::single(1.0, 0.1, dt);
        p.epsilon = 0.0;
        p
    }

    fn gaussian(n: usize, l: f64, x0: f64, sigma: f64, k: f64) -> WaveFunction {
        let g = GridSpec::uniform_1d(n, l).unwrap();
        WaveFunction::from_fn(g, vec![0], 1, |_, x| gaussian_amplitude(x[0], x0, sigma, k)).unwrap()
    }

    #[test]
    fn plane_wave_moves_q_by_velocity() {
        let g = GridSpec::uniform_1d(64, 2.0 * std::f64::consts::PI).unwrap();
        let k = 3.0;
        let psi = WaveFunction::from_fn(g, vec![0], 1, |_, x| C64::from_polar(1.0 / (2.0 * std::f64::consts::PI).sqrt(), k * x[0])).unwrap();
        let params = free_params(0.01);
        let prop = Propagator::new(&psi, &params).unwrap();
        let mut state = PropagatorState::new(psi, BohmianConfiguration::new(vec![vec![0.2]])).unwrap();
        prop.step(&mut state).unwrap();
        assert!((state.q.positions[0][0] - (0.2 + k * 0.01)).abs() < 1e-12);
        assert_eq!(state.step_count, 1);
        assert!((state.t - 0.01).abs() < 1e-15);
    }

    #[test]
    fn imaginary_time_finds_harmonic_ground_state() {
        let mut params = free_params(0.01);
        params.internal = vec![InternalPotential::Harmonic { omega: 1.0 }];
        let psi = gaussian(128, 20.0, 1.0, 1.0, 0.0);
        let prop = Propagator::new(&psi, &params).unwrap();
        let q = BohmianConfiguration::new(vec![vec![0.0]]);
        let (ground, e0) = imaginary_time_ground_state(&prop, psi, &q, 0.01, 1e-14, 200_000).unwrap();
        // splitting bias of the relaxed state is O(dτ²)
        assert!((e0 - 0.5).abs() < 1e-4);
        let exact = gaussian(128, 20.0, 0.0, 0.5f64.sqrt(), 0.0);
        assert!(ground.fidelity(&exact) > 1.0 - 1e-8);
    }

    /// Largest amplitude-modulus change and the phase advance per step of
    /// the analytic harmonic ground state after `steps` steps.
    fn stationarity(dt: f64, steps: usize) -> (f64, f64, f64) {
        let mut params = free_params(dt);
        params.internal = vec![InternalPotential::Harmonic { omega: 1.0 }];
        let ground = gaussian(128, 20.0, 0.0, 0.5f64.sqrt(), 0.0);
        let prop = Propagator::new(&ground, &params).unwrap().with_mode(FlowMode::Unnormalized);
        let mut state = PropagatorState::new(ground.clone(), BohmianConfiguration::new(vec![vec![0.7]])).unwrap();
        for _ in 0..steps {
            prop.step(&mut state).unwrap();
        }
        let dev = ground
            .amplitudes()
            .iter()
            .zip(state.psi.amplitudes())
            .map(|(a, b)| (a.norm() - b.norm()).abs())
            .fold(0.0, f64::max);
        let phase = -(state.psi.amplitudes()[64] / ground.amplitudes()[64]).arg() / steps as f64;
        (dev, phase, (state.q.positions[0][0] - 0.7).abs())
    }

    #[test]
    fn harmonic_ground_state_is_stationary() {
        let (dev, phase, dq) = stationarity(2e-5, 100);
        assert!(dev < 1e-10, "{dev}");
        assert!(dq < 1e-10);
        assert!((phase - 0.5 * 2e-5).abs() < 1e-12);
        // the residual motion is the O(dt²) splitting error
        let (d1, _, _) = stationarity(0.02, 10);
        let (d2, _, _) = stationarity(0.01, 20);
        assert!((d1 / d2 - 4.0).abs() < 0.2, "{d1} {d2}");
    }

    #[test]
    fn constant_localization_changes_norm_not_state() {
        let psi = gaussian(64, 20.0, 0.0, 1.0, 0.5);
        let params = free_params(0.01);
        let prop = Propagator::new(&psi, &params).unwrap();
        let c = 0.3;
        let mut unnorm = psi.clone();
        let v = vec![0.0; 64];
        let l = vec![c; 64];
        prop.potential_step(&mut unnorm, &v, &l, 0.0, 0.005);
        prop.kinetic_step(&mut unnorm);
        prop.potential_step(&mut unnorm, &v, &l, 0.0, 0.005);
        let expected = (2.0 * c * 0.01f64).exp();
        assert!((unnorm.norm_squared() - expected).abs() < 1e-12);

        let mut free = psi.clone();
        prop.kinetic_step(&mut free);
        unnorm.normalize().unwrap();
        assert!(unnorm.l2_distance(&free) < 1e-12);
    }

    #[test]
    fn run_cadence_and_zero_steps() {
        let psi = gaussian(64, 20.0, 0.0, 1.0, 0.0);
        let prop = Propagator::new(&psi, &free_params(0.01)).unwrap();
        let q = BohmianConfiguration::new(vec![vec![0.5]]);
        let mut state = PropagatorState::new(psi.clone(), q.clone()).unwrap();
        let mut count = 0;
        let s = prop
            .run(&mut state, 100, 10, |_| {
                count += 1;
                Ok(Control::Continue)
            })
            .unwrap();
        assert_eq!(count, 11);
        assert_eq!(s.observations, 11);
        let mut state0 = PropagatorState::new(psi.clone(), q).unwrap();
        prop.run(&mut state0, 0, 1, |_| Ok(Control::Continue)).unwrap();
        assert_eq!(state0.psi, psi);
        assert!(prop.run(&mut state0, 100, 7, |_| Ok(Control::Continue)).is_err());
    }

    #[test]
    fn time_reversal() {
        let mut params = free_params(0.01);
        params.internal = vec![InternalPotential::Harmonic { omega: 0.7 }];
        let psi = gaussian(128, 20.0, 1.0, 0.8, 0.4);
        let mut prop = Propagator::new(&psi, &params).unwrap();
        let q = BohmianConfiguration::new(vec![vec![0.0]]);
        let mut x = psi.clone();
        prop.step_wavefunction(&mut x, &q, 0.0, FlowMode::Normalized).unwrap();
        prop.set_dt(-0.01, &psi);
        prop.step_wavefunction(&mut x, &q, 0.0, FlowMode::Normalized).unwrap();
        assert!(x.fidelity(&psi) > 1.0 - 1e-10);
    }

    #[test]
    fn overflow_is_reported_as_integration_failure() {
        let mut params = ModelParams::single(1.0, 0.01, 1e3);
        params.epsilon = 1.0;
        params.grav_strength = 100.0;
        let psi = gaussian(64, 20.0, 0.0, 1.0, 0.0);
        let prop = Propagator::new(&psi, &params).unwrap().with_mode(FlowMode::Unnormalized);
        let mut state = PropagatorState::new(psi, BohmianConfiguration::new(vec![vec![0.0]])).unwrap();
        match prop.step(&mut state) {
            Err(Error::Integration(d)) => assert!(d.max_localization_potential > 0.0),
            other => panic!("expected integration failure, got {other:?}"),
        }
    }
}
