//! Monte Carlo over initial Bohmian positions.
//!
//! Every run owns a ChaCha8 stream derived from `(base_seed, run index)`, so
//! results do not depend on scheduling; runs are executed with rayon and
//! collected in index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;
use crate::observables::{reduced_density_matrix, trace_distance, BranchProbe, BranchRegionSpec, ReducedDensityMatrix};
use crate::params::ModelParams;
use crate::propagator::{BohmianMode, FlowMode, Propagator, PropagatorState, SharedWaveRun};
use crate::stats::{self, BootstrapInterval, HistogramCdf, KsResult};
use crate::wavefunction::{BohmianConfiguration, WaveFunction};
use crate::{Error, Result, C64};

/// Default collapse threshold η.
pub const DEFAULT_COLLAPSE_THRESHOLD: f64 = 1e-3;

/// Largest tolerated fraction of failed runs.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_threshold")]
    pub collapse_threshold: f64,
    pub t_max: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_COLLAPSE_THRESHOLD
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::Spec("n_runs must be at least 1".into()));
        }
        if !(self.collapse_threshold > 0.0 && self.collapse_threshold < 0.5) {
            return Err(Error::Spec(format!(
                "collapse_threshold must lie in (0, 0.5), got {}",
                self.collapse_threshold
            )));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(Error::Spec(format!("t_max must be >= 0, got {}", self.t_max)));
        }
        Ok(())
    }
}

/// Random stream of run `index`.
pub fn run_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Inverse-CDF sampler of `|ψ|²` over the configuration grid with uniform
/// jitter inside the cell around each node.
#[derive(Debug, Clone)]
pub struct PositionSampler {
    grid: GridSpec,
    axis_particle: Vec<usize>,
    cumulative: Vec<f64>,
}

impl PositionSampler {
    pub fn new(psi: &WaveFunction) -> Result<Self> {
        psi.require_normalized()?;
        let rho = psi.density();
        let mut cumulative = Vec::with_capacity(rho.len());
        let mut acc = 0.0;
        for r in &rho {
            acc += r;
            cumulative.push(acc);
        }
        cumulative.iter_mut().for_each(|c| *c /= acc);
        Ok(PositionSampler {
            grid: psi.grid().clone(),
            axis_particle: psi.axis_particle().to_vec(),
            cumulative,
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> BohmianConfiguration {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
        let mut multi = vec![0; self.grid.dims()];
        self.grid.unravel(idx, &mut multi);
        let point: Vec<f64> = self
            .grid
            .axes
            .iter()
            .enumerate()
            .map(|(a, ax)| ax.coord(multi[a]) + (rng.random::<f64>() - 0.5) * ax.dx())
            .collect();
        let mut q = BohmianConfiguration::from_config_point(&point, &self.axis_particle);
        q.wrap(&self.grid, &self.axis_particle);
        q
    }
}

/// `n_runs` samples from `|ψ₀|²`; sample `i` uses the stream of run `i`,
/// so it equals the initial position of run `i` of an ensemble with the
/// same base seed.
pub fn sample_initial_positions(psi0: &WaveFunction, n_runs: usize, seed: u64) -> Result<Vec<BohmianConfiguration>> {
    let sampler = PositionSampler::new(psi0)?;
    Ok((0..n_runs).map(|i| sampler.sample(&mut run_rng(seed, i as u64))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPositions {
    /// Sampled from `|ψ₀|²`.
    Born,
    Fixed(BohmianConfiguration),
}

/// One collapse experiment: initial state, model and branch regions.
#[derive(Debug, Clone)]
pub struct CollapseProblem {
    pub psi0: WaveFunction,
    pub params: ModelParams,
    pub regions: BranchRegionSpec,
    pub mode: FlowMode,
    pub bohmian: BohmianMode,
    pub initial: InitialPositions,
    /// Extra thresholds whose crossing times are recorded as well.
    pub extra_thresholds: Vec<f64>,
    /// Record `(t, weights)` every this many steps (0 = never).
    pub trace_every: u64,
}

impl CollapseProblem {
    pub fn new(psi0: WaveFunction, params: ModelParams, regions: BranchRegionSpec) -> Self {
        CollapseProblem {
            psi0,
            params,
            regions,
            mode: FlowMode::default(),
            bohmian: BohmianMode::default(),
            initial: InitialPositions::Born,
            extra_thresholds: Vec::new(),
            trace_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCrossing {
    pub threshold: f64,
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub q0: Vec<Vec<f64>>,
    pub outcome: Option<String>,
    pub collapse_time: Option<f64>,
    pub final_time: f64,
    pub final_weights: Vec<f64>,
    pub final_q: Vec<Vec<f64>>,
    pub steps: u64,
    pub stalled: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub crossings: Vec<ThresholdCrossing>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip)]
    pub trace: Vec<(f64, Vec<f64>)>,
}

fn logit(w: f64) -> f64 {
    let w = w.clamp(1e-300, 1.0 - 1e-16);
    (w / (1.0 - w)).ln()
}

/// Time at which `w` crossed `level`, interpolated linearly in logit space
/// between two consecutive samples.
fn crossing_time(t0: f64, w0: f64, t1: f64, w1: f64, level: f64) -> f64 {
    let (l0, l1, l) = (logit(w0), logit(w1), logit(level));
    if l1 <= l0 {
        return t1;
    }
    t0 + (t1 - t0) * ((l - l0) / (l1 - l0)).clamp(0.0, 1.0)
}

/// Propagates one run until the dominant branch weight exceeds `1 - η` for
/// every requested threshold, or until `t_max`.
pub fn run_collapse(
    problem: &CollapseProblem,
    propagator: &Propagator,
    index: usize,
    q0: BohmianConfiguration,
    threshold: f64,
    t_max: f64,
) -> Result<RunRecord> {
    run_collapse_with_state(problem, propagator, index, q0, threshold, t_max).map(|(r, _)| r)
}

/// As [`run_collapse`], also returning the final state.
pub fn run_collapse_with_state(
    problem: &CollapseProblem,
    propagator: &Propagator,
    index: usize,
    q0: BohmianConfiguration,
    threshold: f64,
    t_max: f64,
) -> Result<(RunRecord, PropagatorState)> {
    let probe = BranchProbe::new(problem.psi0.grid(), &problem.regions)?;
    let mut thresholds: Vec<f64> = problem.extra_thresholds.clone();
    thresholds.push(threshold);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut crossings: Vec<ThresholdCrossing> = thresholds
        .iter()
        .map(|&t| ThresholdCrossing { threshold: t, time: None })
        .collect();
    let mut state = PropagatorState::new(problem.psi0.clone(), q0.clone())?;
    let n_steps = if t_max > 0.0 { (t_max / propagator.dt() - 1e-9).ceil() as u64 } else { 0 };
    let mut weights = probe.weights(&state.psi);
    let mut trace = Vec::new();
    if problem.trace_every > 0 {
        trace.push((0.0, weights.weights.clone()));
    }
    let mut outcome = None;
    let mut collapse_time = None;
    let mut prev_dom = weights.dominant();
    let mut prev_t = 0.0;
    let check = |w: f64, crossings: &mut Vec<ThresholdCrossing>, t0: f64, w0: f64, t1: f64| {
        for c in crossings.iter_mut() {
            if c.time.is_none() && w >= 1.0 - c.threshold {
                c.time = Some(if t1 == 0.0 { 0.0 } else { crossing_time(t0, w0, t1, w, 1.0 - c.threshold) });
            }
        }
    };
    check(prev_dom.1, &mut crossings, 0.0, prev_dom.1, 0.0);
    for _ in 0..n_steps {
        if crossings.iter().all(|c| c.time.is_some()) {
            break;
        }
        propagator.step(&mut state)?;
        weights = probe.weights(&state.psi);
        let dom = weights.dominant();
        // interpolate against the previous weight of the same branch
        let w_prev_same = if dom.0 == prev_dom.0 { prev_dom.1 } else { 0.5 };
        check(dom.1, &mut crossings, prev_t, w_prev_same, state.t);
        prev_dom = dom;
        prev_t = state.t;
        if problem.trace_every > 0 && state.step_count % problem.trace_every == 0 {
            trace.push((state.t, weights.weights.clone()));
        }
    }
    let main = crossings.iter().find(|c| c.threshold == threshold).and_then(|c| c.time);
    if let Some(t) = main {
        collapse_time = Some(t);
        outcome = Some(weights.labels[prev_dom.0].clone());
    }
    let record = RunRecord {
        index,
        q0: q0.positions,
        outcome,
        collapse_time,
        final_time: state.t,
        final_weights: weights.weights,
        final_q: state.q.positions.clone(),
        steps: state.step_count,
        stalled: state.stalled_count,
        crossings: if problem.extra_thresholds.is_empty() { Vec::new() } else { crossings },
        error: None,
        trace,
    };
    Ok((record, state))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStat {
    pub label: String,
    pub count: usize,
    pub frequency: f64,
    /// Wilson interval at 3σ.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub n_runs: usize,
    pub base_seed: u64,
    pub collapse_threshold: f64,
    pub labels: Vec<String>,
    pub outcomes: Vec<OutcomeStat>,
    pub unresolved: usize,
    pub failures: usize,
    pub median_collapse_time: Option<f64>,
    /// KS test of the initial positions (first axis) against `|ψ₀|²`.
    pub initial_ks: Option<KsResult>,
    pub stalled_total: u64,
    pub runs: Vec<RunRecord>,
}

impl EnsembleResult {
    pub fn frequency(&self, label: &str) -> Option<f64> {
        self.outcomes.iter().find(|o| o.label == label).map(|o| o.frequency)
    }
}

/// Marginal of `|ψ|²` along configuration axis `axis`.
pub fn axis_marginal(psi: &WaveFunction, axis: usize) -> Vec<f64> {
    let grid = psi.grid();
    let rho = psi.density();
    let n = grid.axes[axis].points;
    let stride = grid.strides()[axis];
    let mut m = vec![0.0; n];
    for (i, r) in rho.iter().enumerate() {
        m[(i / stride) % n] += r;
    }
    m
}

/// KS test of samples of configuration coordinate `axis` against the
/// marginal of `|ψ|²`.
pub fn ks_against_marginal(psi: &WaveFunction, axis: usize, samples: &[f64]) -> Result<KsResult> {
    let ax = psi.grid().axes[axis];
    let cdf = HistogramCdf::new(ax.coord(0), ax.dx(), &axis_marginal(psi, axis))?;
    stats::ks_one_sample(samples, |x| cdf.cdf(x))
}

fn check_failures(failures: usize, n_runs: usize) -> Result<()> {
    if failures as f64 > MAX_FAILURE_FRACTION * n_runs as f64 {
        return Err(Error::Insufficient(format!(
            "{failures} of {n_runs} runs failed (more than {:.0}%)",
            MAX_FAILURE_FRACTION * 100.0
        )));
    }
    Ok(())
}

pub fn run_ensemble(problem: &CollapseProblem, spec: &EnsembleSpec) -> Result<EnsembleResult> {
    spec.validate()?;
    let propagator = Propagator::new(&problem.psi0, &problem.params)?
        .with_mode(problem.mode)
        .with_bohmian(problem.bohmian);
    let sampler = PositionSampler::new(&problem.psi0)?;
    let runs: Vec<RunRecord> = (0..spec.n_runs)
        .into_par_iter()
        .map(|i| {
            let q0 = match &problem.initial {
                InitialPositions::Born => sampler.sample(&mut run_rng(spec.base_seed, i as u64)),
                InitialPositions::Fixed(q) => q.clone(),
            };
            run_collapse(problem, &propagator, i, q0.clone(), spec.collapse_threshold, spec.t_max).unwrap_or_else(|e| RunRecord {
                index: i,
                q0: q0.positions.clone(),
                outcome: None,
                collapse_time: None,
                final_time: 0.0,
                final_weights: Vec::new(),
                final_q: q0.positions,
                steps: 0,
                stalled: 0,
                crossings: Vec::new(),
                error: Some(e.to_string()),
                trace: Vec::new(),
            })
        })
        .collect();
    let probe = BranchProbe::new(problem.psi0.grid(), &problem.regions)?;
    let labels = probe.labels().to_vec();
    let failures = runs.iter().filter(|r| r.error.is_some()).count();
    check_failures(failures, spec.n_runs)?;
    let n = spec.n_runs;
    let outcomes = labels[..labels.len() - 1]
        .iter()
        .map(|l| {
            let count = runs.iter().filter(|r| r.outcome.as_deref() == Some(l.as_str())).count();
            let (ci_low, ci_high) = stats::wilson_interval(count, n, 3.0);
            OutcomeStat {
                label: l.clone(),
                count,
                frequency: count as f64 / n as f64,
                ci_low,
                ci_high,
            }
        })
        .collect();
    let times: Vec<f64> = runs.iter().filter_map(|r| r.collapse_time).collect();
    let first_axis: Vec<f64> = runs.iter().map(|r| r.q0[problem.psi0.axis_particle()[0]][0]).collect();
    let initial_ks = match problem.initial {
        InitialPositions::Born => Some(ks_against_marginal(&problem.psi0, 0, &first_axis)?),
        InitialPositions::Fixed(_) => None,
    };
    Ok(EnsembleResult {
        n_runs: n,
        base_seed: spec.base_seed,
        collapse_threshold: spec.collapse_threshold,
        unresolved: runs.iter().filter(|r| r.outcome.is_none() && r.error.is_none()).count(),
        failures,
        median_collapse_time: stats::median(&times),
        initial_ks,
        stalled_total: runs.iter().map(|r| r.stalled).sum(),
        labels,
        outcomes,
        runs,
    })
}

/// KS statistics of many trajectories moved through one shared
/// wavefunction (no gravitational source), probed against the marginals
/// of `|ψ_t|²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumProbe {
    pub t: f64,
    /// One KS result per configuration axis.
    pub ks: Vec<KsResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub n_trajectories: usize,
    pub alpha: f64,
    pub critical_value: f64,
    pub probes: Vec<EquilibriumProbe>,
    pub stalled_total: u64,
    pub all_pass: bool,
}

pub fn quantum_equilibrium_check(
    psi0: &WaveFunction,
    params: &ModelParams,
    n_trajectories: usize,
    seed: u64,
    n_steps: u64,
    probe_every: u64,
    alpha: f64,
) -> Result<EquilibriumReport> {
    if probe_every == 0 || n_steps % probe_every != 0 {
        return Err(Error::Spec("probe cadence must divide the step count".into()));
    }
    let propagator = Propagator::new(psi0, params)?;
    let qs = sample_initial_positions(psi0, n_trajectories, seed)?;
    let mut run = SharedWaveRun::new(&propagator, psi0.clone(), qs)?;
    let probe = |run: &SharedWaveRun| -> Result<EquilibriumProbe> {
        let map = run.psi.axis_particle().to_vec();
        let ks = (0..run.psi.grid().dims())
            .map(|a| {
                let samples: Vec<f64> = run.configurations.iter().map(|q| q.to_config_point(&map)[a]).collect();
                ks_against_marginal(&run.psi, a, &samples)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EquilibriumProbe { t: run.t, ks })
    };
    let mut probes = vec![probe(&run)?];
    for s in 1..=n_steps {
        run.step()?;
        if s % probe_every == 0 {
            probes.push(probe(&run)?);
        }
    }
    let all_pass = probes.iter().all(|p| p.ks.iter().all(|k| k.passes(alpha)));
    Ok(EquilibriumReport {
        n_trajectories,
        alpha,
        critical_value: stats::ks_critical_value(n_trajectories, alpha),
        probes,
        stalled_total: run.stalled_count,
        all_pass,
    })
}

/// Setting of the remote side in the no-signaling experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingB {
    /// B does not gravitate.
    CouplingOff,
    /// B gravitates with its configured (boosted) source.
    CouplingOn,
    /// B gravitates and its state is translated locally at t = 0.
    RegionShifted,
}

impl SettingB {
    pub const ALL: [SettingB; 3] = [SettingB::CouplingOff, SettingB::CouplingOn, SettingB::RegionShifted];

    pub fn name(self) -> &'static str {
        match self {
            SettingB::CouplingOff => "coupling_off",
            SettingB::CouplingOn => "coupling_on",
            SettingB::RegionShifted => "region_shifted",
        }
    }
}

/// Two particles on a two-axis grid, A on one axis and B on the other.
#[derive(Debug, Clone)]
pub struct BipartiteProblem {
    pub psi0: WaveFunction,
    pub params: ModelParams,
    pub b_particle: usize,
    pub bins: usize,
    /// Cells by which B is translated in the region-shifted setting.
    pub shift_cells: usize,
    pub mode: FlowMode,
    pub t_final: f64,
}

impl BipartiteProblem {
    fn axes(&self) -> Result<(usize, usize)> {
        if self.psi0.grid().dims() != 2 || self.psi0.n_particles() != 2 || self.b_particle > 1 {
            return Err(Error::Unsupported("the bipartite experiment needs two particles on a 2-axis grid".into()));
        }
        let b_axis = self.psi0.particle_axes(self.b_particle)[0];
        Ok((1 - b_axis, b_axis))
    }

    /// Initial state and parameters for `setting`.
    pub fn setup(&self, setting: SettingB) -> Result<(WaveFunction, ModelParams)> {
        let (_, b_axis) = self.axes()?;
        let mut params = self.params.clone();
        let mut psi = self.psi0.clone();
        match setting {
            SettingB::CouplingOff => params.particles[self.b_particle].source_scale = 0.0,
            SettingB::CouplingOn => {}
            SettingB::RegionShifted => psi = roll_axis(&psi, b_axis, self.shift_cells)?,
        }
        Ok((psi, params))
    }
}

/// Cyclic translation of every component by `cells` along `axis`.
pub fn roll_axis(psi: &WaveFunction, axis: usize, cells: usize) -> Result<WaveFunction> {
    let grid = psi.grid();
    let n = grid.axes[axis].points;
    let stride = grid.strides()[axis];
    let total = grid.total_points();
    let mut out = vec![C64::new(0.0, 0.0); psi.amplitudes().len()];
    for c in 0..psi.components() {
        let src = psi.component(c);
        for i in 0..total {
            let j = (i / stride) % n;
            let dest = i - j * stride + ((j + cells) % n) * stride;
            out[c * total + dest] = src[i];
        }
    }
    psi.with_amplitudes(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct NoSignalingResult {
    pub setting: SettingB,
    pub n_runs: usize,
    pub failures: usize,
    pub averaged: ReducedDensityMatrix,
    pub purities: Vec<f64>,
    /// Weight of the branch B ends up in, per run.
    #[serde(skip)]
    pub per_run: Vec<ReducedDensityMatrix>,
}

pub fn no_signaling_experiment(setting: SettingB, problem: &BipartiteProblem, spec: &EnsembleSpec) -> Result<NoSignalingResult> {
    spec.validate()?;
    let (a_axis, _) = problem.axes()?;
    let (psi0, params) = problem.setup(setting)?;
    let propagator = Propagator::new(&psi0, &params)?.with_mode(problem.mode);
    let n_steps = if problem.t_final > 0.0 { (problem.t_final / params.dt - 1e-9).ceil() as u64 } else { 0 };
    let evolve = |q0: BohmianConfiguration| -> Result<ReducedDensityMatrix> {
        let mut state = PropagatorState::new(psi0.clone(), q0)?;
        for _ in 0..n_steps {
            propagator.step(&mut state)?;
        }
        reduced_density_matrix(&state.psi, a_axis, problem.bins)
    };
    let sampler = PositionSampler::new(&psi0)?;
    let results: Vec<Result<ReducedDensityMatrix>> = if propagator.builder().is_position_independent() {
        let q0 = sampler.sample(&mut run_rng(spec.base_seed, 0));
        let rho = evolve(q0)?;
        (0..spec.n_runs).map(|_| Ok(rho.clone())).collect()
    } else {
        (0..spec.n_runs)
            .into_par_iter()
            .map(|i| evolve(sampler.sample(&mut run_rng(spec.base_seed, i as u64))))
            .collect()
    };
    let failures = results.iter().filter(|r| r.is_err()).count();
    check_failures(failures, spec.n_runs)?;
    let per_run: Vec<ReducedDensityMatrix> = results.into_iter().filter_map(|r| r.ok()).collect();
    let averaged = ReducedDensityMatrix::average(&per_run)?;
    Ok(NoSignalingResult {
        setting,
        n_runs: spec.n_runs,
        failures,
        purities: per_run.iter().map(|r| r.purity()).collect(),
        averaged,
        per_run,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SettingComparison {
    pub a: SettingB,
    pub b: SettingB,
    pub trace_distance: f64,
    pub bootstrap: BootstrapInterval,
    pub permutation_p_value: f64,
    pub ci_contains_zero: bool,
}

/// Trace distance between the two setting averages with a basic bootstrap
/// interval and a permutation p-value.
pub fn compare_settings(
    a: &NoSignalingResult,
    b: &NoSignalingResult,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<SettingComparison> {
    let mean = |items: &[&ReducedDensityMatrix]| {
        let k = items[0].bins;
        let mut m = nalgebra::DMatrix::<C64>::zeros(k, k);
        for r in items {
            m += &r.matrix;
        }
        m / C64::new(items.len() as f64, 0.0)
    };
    let stat = |x: &[&ReducedDensityMatrix], y: &[&ReducedDensityMatrix]| trace_distance(&mean(x), &mean(y));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bootstrap = stats::bootstrap_two_sample(&a.per_run, &b.per_run, stat, resamples, level, &mut rng)?;
    let permutation_p_value = stats::permutation_p_value(&a.per_run, &b.per_run, stat, resamples, &mut rng);
    Ok(SettingComparison {
        a: a.setting,
        b: b.setting,
        trace_distance: bootstrap.estimate,
        ci_contains_zero: bootstrap.contains(0.0),
        bootstrap,
        permutation_p_value,
    })
}
