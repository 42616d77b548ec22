//! Pointer superpositions: collapse of a spatial cat, the collapse-rate
//! sweep, and the non-collapse of mass-identical branches.

use serde::{Deserialize, Serialize};

use super::oracle::oracle_crossing_time;
use super::{positive, threshold, Numerics, ScenarioOutput, Series, StateSnapshot};
use crate::ensemble::{
    run_collapse_with_state, run_ensemble, CollapseProblem, EnsembleSpec, InitialPositions, OutcomeStat, RunRecord,
    ThresholdCrossing,
};
use crate::observables::{component_weights, BranchRegionSpec};
use crate::params::{ModelParams, ParticleSpec};
use crate::propagator::{Propagator, PropagatorState};
use crate::stats::{self, KsResult};
use crate::wavefunction::{gaussian_amplitude, BohmianConfiguration, WaveFunction};
use crate::{Error, Result, C64};

/// Where the pointer's Bohmian position starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerStart {
    /// At the centre of the left branch.
    #[default]
    Left,
    /// At the centre of the right branch.
    Right,
    /// Drawn from `|ψ₀|²`.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointerCatSpec {
    /// Mass of the collective coordinate.
    pub mass: f64,
    /// Self-source strength `γ M²`.
    pub source_strength: f64,
    /// Distance between the two branch centres.
    pub separation: f64,
    pub sigma: f64,
    pub weight_left: f64,
    pub start: PointerStart,
    pub collapse_threshold: f64,
    /// Further thresholds whose crossing times are reported.
    pub extra_thresholds: Vec<f64>,
    /// Time-series cadence in steps.
    pub trace_every: u64,
}

impl Default for PointerCatSpec {
    fn default() -> Self {
        PointerCatSpec {
            mass: 1e10,
            source_strength: 10.0,
            separation: 10.0,
            sigma: 1.0,
            weight_left: 0.5,
            start: PointerStart::Left,
            collapse_threshold: 1e-3,
            extra_thresholds: Vec::new(),
            trace_every: 10,
        }
    }
}

impl PointerCatSpec {
    pub fn validate(&self) -> Result<()> {
        positive("mass", self.mass)?;
        if !(self.source_strength.is_finite() && self.source_strength >= 0.0) {
            return Err(Error::Spec("source_strength must be >= 0".into()));
        }
        positive("separation", self.separation)?;
        positive("sigma", self.sigma)?;
        if !(self.weight_left > 0.0 && self.weight_left < 1.0) {
            return Err(Error::Spec(format!("weight_left must lie in (0, 1), got {}", self.weight_left)));
        }
        threshold("collapse_threshold", self.collapse_threshold)?;
        for &t in &self.extra_thresholds {
            threshold("extra_thresholds", t)?;
        }
        Ok(())
    }
}

/// Initial cat, its isolated branches and the model.
#[derive(Debug, Clone)]
pub struct PointerSetup {
    pub psi0: WaveFunction,
    /// Normalized isolated branches, left then right.
    pub branches: [WaveFunction; 2],
    pub centers: [f64; 2],
    pub weights: [f64; 2],
    /// Model with the resolved time step.
    pub params: ModelParams,
    pub regions: BranchRegionSpec,
}

fn gaussian_state(numerics: &Numerics, center: f64, sigma: f64) -> Result<WaveFunction> {
    let grid = numerics.grid(1)?;
    let mut psi = WaveFunction::from_fn(grid, vec![0], 1, |_, x| gaussian_amplitude(x[0], center, sigma, 0.0))?;
    psi.normalize()?;
    Ok(psi)
}

fn point(x: f64) -> BohmianConfiguration {
    BohmianConfiguration::new(vec![vec![x]])
}

impl PointerSetup {
    pub fn new(spec: &PointerCatSpec, numerics: &Numerics) -> Result<Self> {
        spec.validate()?;
        let centers = [-0.5 * spec.separation, 0.5 * spec.separation];
        let branches = [
            gaussian_state(numerics, centers[0], spec.sigma)?,
            gaussian_state(numerics, centers[1], spec.sigma)?,
        ];
        let weights = [spec.weight_left, 1.0 - spec.weight_left];
        let amps: Vec<C64> = branches[0]
            .amplitudes()
            .iter()
            .zip(branches[1].amplitudes())
            .map(|(l, r)| l * weights[0].sqrt() + r * weights[1].sqrt())
            .collect();
        let mut psi0 = branches[0].with_amplitudes(amps)?;
        psi0.normalize()?;
        psi0.log_norm = 0.0;
        let gamma = spec.source_strength / (spec.mass * spec.mass);
        let mut params = numerics.params(vec![ParticleSpec::new(spec.mass).collective(true)], gamma, Vec::new());
        params.dt = numerics.resolve_dt(&psi0, &point(centers[0]), &params)?;
        let regions = BranchRegionSpec::left_right(psi0.grid(), 0, 0.0);
        let mut setup = PointerSetup {
            psi0,
            branches,
            centers,
            weights,
            params,
            regions,
        };
        if numerics.dt.is_none() && numerics.epsilon > 0.0 && spec.source_strength > 0.0 {
            // resolve the fastest expected collapse with at least 200 steps
            let fastest = (0..2)
                .map(|b| setup.oracle(setup.centers[b], spec.collapse_threshold).map(|o| o.time))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            if fastest.is_finite() && fastest > 0.0 {
                setup.params.dt = setup.params.dt.min(fastest / 200.0);
            }
        }
        Ok(setup)
    }

    pub fn branch_of(&self, x: f64) -> usize {
        usize::from(x >= 0.0)
    }

    pub fn propagator(&self) -> Result<Propagator> {
        Propagator::new(&self.psi0, &self.params)
    }

    /// Branch-averaged localization rates `⟨L⟩_b/ħ` for a pointer at `x`.
    pub fn branch_rates(&self, x: f64) -> Result<[f64; 2]> {
        let prop = self.propagator()?;
        let (_, l) = prop.potentials(&point(x), 0.0)?;
        let hbar = self.params.hbar;
        Ok([l.expectation(&self.branches[0]) / hbar, l.expectation(&self.branches[1]) / hbar])
    }

    pub fn oracle(&self, x: f64, eta: f64) -> Result<OracleTiming> {
        let rates = self.branch_rates(x)?;
        let full = self.branch_of(x);
        let delta_lambda = rates[full] - rates[1 - full];
        Ok(OracleTiming {
            full_branch: full,
            branch_rates: rates,
            delta_lambda,
            time: oracle_crossing_time(self.weights[full], delta_lambda, eta),
        })
    }

    pub fn start_position(&self, start: PointerStart, seed: u64) -> Result<f64> {
        Ok(match start {
            PointerStart::Left => self.centers[0],
            PointerStart::Right => self.centers[1],
            PointerStart::Sampled => crate::ensemble::sample_initial_positions(&self.psi0, 1, seed)?[0].positions[0][0],
        })
    }

    fn problem(&self, spec: &PointerCatSpec, numerics: &Numerics) -> CollapseProblem {
        let mut problem = CollapseProblem::new(self.psi0.clone(), self.params.clone(), self.regions.clone());
        problem.mode = numerics.flow_mode;
        problem.extra_thresholds = spec.extra_thresholds.clone();
        problem.trace_every = spec.trace_every;
        problem
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleTiming {
    pub full_branch: usize,
    pub branch_rates: [f64; 2],
    pub delta_lambda: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointerRun {
    pub q0: f64,
    pub oracle: OracleTiming,
    pub outcome: Option<String>,
    pub collapse_time: Option<f64>,
    /// Measured over oracle collapse time.
    pub time_ratio: Option<f64>,
    pub crossings: Vec<ThresholdCrossing>,
    /// Fidelity between the collapsed state and the surviving branch
    /// evolved alone with the same initial position.
    pub survivor_fidelity: Option<f64>,
    /// Fidelity between the collapsed state and the surviving branch at t = 0.
    pub survivor_initial_overlap: Option<f64>,
    pub final_weights: Vec<f64>,
    pub final_time: f64,
    pub final_q: f64,
    pub steps: u64,
    pub stalled: u64,
    pub unresolved: bool,
    #[serde(skip)]
    pub trace: Vec<(f64, Vec<f64>)>,
    #[serde(skip)]
    pub final_state: StateSnapshot,
}

/// One deterministic run of the cat from pointer position `q0`.
pub fn run_pointer(setup: &PointerSetup, spec: &PointerCatSpec, numerics: &Numerics, q0: f64, t_max: f64) -> Result<PointerRun> {
    let problem = setup.problem(spec, numerics);
    let prop = setup.propagator()?.with_mode(numerics.flow_mode);
    let oracle = setup.oracle(q0, spec.collapse_threshold)?;
    let (record, state) = run_collapse_with_state(&problem, &prop, 0, point(q0), spec.collapse_threshold, t_max)?;
    let mut survivor_fidelity = None;
    let mut survivor_initial_overlap = None;
    if let Some(label) = &record.outcome {
        let b = if label == "Left" { 0 } else { 1 };
        let mut alone = PropagatorState::new(setup.branches[b].clone(), point(q0))?;
        for _ in 0..state.step_count {
            prop.step(&mut alone)?;
        }
        survivor_fidelity = Some(state.psi.fidelity(&alone.psi));
        survivor_initial_overlap = Some(state.psi.fidelity(&setup.branches[b]));
    }
    Ok(PointerRun {
        q0,
        time_ratio: record.collapse_time.map(|t| t / oracle.time),
        oracle,
        unresolved: record.outcome.is_none(),
        outcome: record.outcome,
        collapse_time: record.collapse_time,
        crossings: record.crossings,
        survivor_fidelity,
        survivor_initial_overlap,
        final_weights: record.final_weights,
        final_time: record.final_time,
        final_q: state.q.positions[0][0],
        steps: record.steps,
        stalled: record.stalled,
        trace: record.trace,
        final_state: StateSnapshot {
            name: "final".into(),
            time: state.t,
            step: state.step_count,
            psi: state.psi,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointerEnsembleReport {
    pub n_runs: usize,
    pub expected: [f64; 2],
    pub outcomes: Vec<OutcomeStat>,
    /// Binomial standard deviation of each frequency at the expected weight.
    pub sigma: [f64; 2],
    pub within_3_sigma: bool,
    pub unresolved: usize,
    pub failures: usize,
    pub median_collapse_time: Option<f64>,
    /// Median over resolved runs of measured over oracle collapse time.
    pub median_time_ratio: Option<f64>,
    pub initial_ks: Option<KsResult>,
    pub stalled_total: u64,
}

#[derive(Debug, Clone, Serialize)]
struct PointerCatReport {
    spec: PointerCatSpec,
    dt: f64,
    t_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    run: Option<PointerRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble: Option<PointerEnsembleReport>,
}

/// Ensemble of cat runs with Born-distributed initial positions.
pub fn pointer_ensemble(
    setup: &PointerSetup,
    spec: &PointerCatSpec,
    numerics: &Numerics,
    ens: &EnsembleSpec,
) -> Result<(PointerEnsembleReport, Vec<RunRecord>)> {
    let mut problem = setup.problem(spec, numerics);
    problem.initial = InitialPositions::Born;
    problem.trace_every = 0;
    let mut ens = ens.clone();
    ens.collapse_threshold = spec.collapse_threshold;
    let result = run_ensemble(&problem, &ens)?;
    let n = result.n_runs;
    let sigma = [
        stats::binomial_sigma(setup.weights[0], n),
        stats::binomial_sigma(setup.weights[1], n),
    ];
    let within_3_sigma = (0..2).all(|b| {
        let f = result.outcomes[b].frequency;
        (f - setup.weights[b]).abs() <= 3.0 * sigma[b]
    });
    let mut ratios = Vec::new();
    for r in &result.runs {
        if let Some(t) = r.collapse_time {
            ratios.push(t / setup.oracle(r.q0[0][0], spec.collapse_threshold)?.time);
        }
    }
    Ok((
        PointerEnsembleReport {
            n_runs: n,
            expected: setup.weights,
            outcomes: result.outcomes,
            sigma,
            within_3_sigma,
            unresolved: result.unresolved,
            failures: result.failures,
            median_collapse_time: result.median_collapse_time,
            median_time_ratio: stats::median(&ratios),
            initial_ks: result.initial_ks,
            stalled_total: result.stalled_total,
        },
        result.runs,
    ))
}

pub fn pointer_cat(spec: &PointerCatSpec, numerics: &Numerics, ensemble: Option<&EnsembleSpec>) -> Result<ScenarioOutput> {
    let setup = PointerSetup::new(spec, numerics)?;
    let mut series = Vec::new();
    let mut states = Vec::new();
    let mut report = PointerCatReport {
        spec: spec.clone(),
        dt: setup.params.dt,
        t_max: numerics.t_max,
        run: None,
        ensemble: None,
    };
    match (spec.start, ensemble) {
        (PointerStart::Sampled, Some(ens)) => {
            report.t_max = ens.t_max;
            let (summary, runs) = pointer_ensemble(&setup, spec, numerics, ens)?;
            let mut s = Series::new("runs", &["run", "q0", "outcome", "collapse_time", "w_left", "w_right"]);
            for r in &runs {
                let outcome = match r.outcome.as_deref() {
                    Some("Left") => 0.0,
                    Some(_) => 1.0,
                    None => -1.0,
                };
                let w = |i: usize| r.final_weights.get(i).copied().unwrap_or(f64::NAN);
                s.push(vec![r.index as f64, r.q0[0][0], outcome, r.collapse_time.unwrap_or(f64::NAN), w(0), w(1)]);
            }
            series.push(s);
            report.ensemble = Some(summary);
        }
        _ => {
            let q0 = setup.start_position(spec.start, numerics.seed)?;
            let run = run_pointer(&setup, spec, numerics, q0, numerics.t_max)?;
            let mut s = Series::new("weights", &["t", "w_left", "w_right", "w_other"]);
            for (t, w) in &run.trace {
                s.push(vec![*t, w[0], w[1], w[2]]);
            }
            series.push(s);
            states.push(run.final_state.clone());
            report.run = Some(run);
        }
    }
    Ok(ScenarioOutput::new("pointer_cat", &report, series)?.with_states(states))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSweepSpec {
    pub base: PointerCatSpec,
    pub epsilons: Vec<f64>,
    pub source_strengths: Vec<f64>,
    /// Collapse thresholds recorded in every run.
    pub thresholds: Vec<f64>,
    /// Each run lasts this multiple of its oracle collapse time.
    pub horizon_factor: f64,
}

impl Default for ScalingSweepSpec {
    fn default() -> Self {
        ScalingSweepSpec {
            base: PointerCatSpec {
                trace_every: 0,
                ..PointerCatSpec::default()
            },
            epsilons: vec![1e-3, 1e-2, 1e-1],
            source_strengths: vec![1.0, 10.0, 100.0],
            thresholds: vec![5e-4, 1e-3, 2e-3],
            horizon_factor: 3.0,
        }
    }
}

impl ScalingSweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.epsilons.is_empty() || self.source_strengths.is_empty() {
            return Err(Error::Spec("the sweep needs at least one epsilon and one source strength".into()));
        }
        for &e in &self.epsilons {
            positive("epsilons", e)?;
        }
        for &s in &self.source_strengths {
            positive("source_strengths", s)?;
        }
        for &t in &self.thresholds {
            threshold("thresholds", t)?;
        }
        if !(self.horizon_factor > 1.0) {
            return Err(Error::Spec("horizon_factor must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub source_strength: f64,
    /// `Δλ ħ / (ε S)`: geometric factor of the branch-averaged kernel.
    pub k_branch: f64,
    /// `ε S K_branch`.
    pub coupling: f64,
    pub dt: f64,
    pub oracle_time: f64,
    pub collapse_time: f64,
    pub crossings: Vec<ThresholdCrossing>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFit {
    pub threshold: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSweepReport {
    pub points: Vec<SweepPoint>,
    /// `log τ` against `log(ε S K_branch)` at the main threshold.
    pub slope: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    /// `log τ` against `log(ε S)`.
    pub slope_vs_epsilon_source: f64,
    pub decades: f64,
    pub fits_by_threshold: Vec<SweepFit>,
    /// Largest `|τ(η)/τ(η_main) - 1|` over points and thresholds.
    pub threshold_sensitivity: f64,
    /// Largest `|τ/τ_oracle - 1|`.
    pub max_oracle_deviation: f64,
}

pub fn scaling_sweep_report(spec: &ScalingSweepSpec, numerics: &Numerics) -> Result<ScalingSweepReport> {
    spec.validate()?;
    let main = spec.base.collapse_threshold;
    let mut thresholds = spec.thresholds.clone();
    if !thresholds.contains(&main) {
        thresholds.push(main);
    }
    let mut points = Vec::new();
    for &epsilon in &spec.epsilons {
        for &source in &spec.source_strengths {
            let num = Numerics { epsilon, ..numerics.clone() };
            let cat = PointerCatSpec {
                source_strength: source,
                start: PointerStart::Left,
                extra_thresholds: thresholds.clone(),
                trace_every: 0,
                ..spec.base.clone()
            };
            let setup = PointerSetup::new(&cat, &num)?;
            let q0 = setup.centers[0];
            let oracle = setup.oracle(q0, main)?;
            let worst = thresholds.iter().fold(main, |a, &b| a.min(b));
            let horizon = spec.horizon_factor * setup.oracle(q0, worst)?.time;
            let run = run_pointer(&setup, &cat, &num, q0, horizon)?;
            let collapse_time = run.collapse_time.ok_or_else(|| {
                Error::Insufficient(format!("sweep point epsilon={epsilon}, source={source} did not collapse"))
            })?;
            let k_branch = oracle.delta_lambda * num.hbar / (epsilon * source);
            points.push(SweepPoint {
                epsilon,
                source_strength: source,
                k_branch,
                coupling: epsilon * source * k_branch,
                dt: setup.params.dt,
                oracle_time: oracle.time,
                collapse_time,
                crossings: run.crossings,
            });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.coupling.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.collapse_time.ln()).collect();
    let xs_plain: Vec<f64> = points.iter().map(|p| (p.epsilon * p.source_strength).ln()).collect();
    let (slope, slope_stderr, r_squared, slope_plain) = if points.len() >= 2 && xs.iter().any(|&x| x != xs[0]) {
        let fit = stats::linear_fit(&xs, &ys)?;
        let plain = stats::linear_fit(&xs_plain, &ys)?;
        (fit.slope, fit.slope_stderr, fit.r_squared, plain.slope)
    } else {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    };
    let time_at = |p: &SweepPoint, eta: f64| p.crossings.iter().find(|c| c.threshold == eta).and_then(|c| c.time);
    let mut fits_by_threshold = Vec::new();
    let mut threshold_sensitivity: f64 = 0.0;
    for &eta in &thresholds {
        let ys: Option<Vec<f64>> = points.iter().map(|p| time_at(p, eta).map(f64::ln)).collect();
        let ys = ys.ok_or_else(|| Error::Insufficient(format!("threshold {eta} not reached in every run")))?;
        if !slope.is_nan() {
            let fit = stats::linear_fit(&xs, &ys)?;
            fits_by_threshold.push(SweepFit {
                threshold: eta,
                slope: fit.slope,
                slope_stderr: fit.slope_stderr,
                r_squared: fit.r_squared,
            });
        }
        for p in &points {
            let t = time_at(p, eta).unwrap_or(f64::NAN);
            threshold_sensitivity = threshold_sensitivity.max((t / p.collapse_time - 1.0).abs());
        }
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingSweepReport {
        max_oracle_deviation: points
            .iter()
            .map(|p| (p.collapse_time / p.oracle_time - 1.0).abs())
            .fold(0.0, f64::max),
        points,
        slope,
        slope_stderr,
        r_squared,
        slope_vs_epsilon_source: slope_plain,
        decades: (hi - lo) / std::f64::consts::LN_10,
        fits_by_threshold,
        threshold_sensitivity,
    })
}

pub fn scaling_sweep(spec: &ScalingSweepSpec, numerics: &Numerics) -> Result<ScenarioOutput> {
    let report = scaling_sweep_report(spec, numerics)?;
    let mut s = Series::new("sweep", &["epsilon", "source_strength", "coupling", "collapse_time", "oracle_time"]);
    for p in &report.points {
        s.push(vec![p.epsilon, p.source_strength, p.coupling, p.collapse_time, p.oracle_time]);
    }
    ScenarioOutput::new("scaling_sweep", &report, vec![s])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MassIdenticalSpec {
    pub mass: f64,
    pub source_strength: f64,
    pub sigma: f64,
    /// Separation of the reference spatial cat.
    pub separation: f64,
    /// Displacements of the second profile, in grid cells.
    pub displacements: Vec<usize>,
    /// Steps over which differential rates are measured.
    pub rate_steps: u64,
    /// The identical-profile run lasts this multiple of the reference
    /// cat's collapse time.
    pub horizon_factor: f64,
    pub trace_every: u64,
}

impl Default for MassIdenticalSpec {
    fn default() -> Self {
        MassIdenticalSpec {
            mass: 1e10,
            source_strength: 10.0,
            sigma: 1.0,
            separation: 10.0,
            displacements: vec![0, 1, 2, 4, 8, 16, 32, 64],
            rate_steps: 20,
            horizon_factor: 2.0,
            trace_every: 10,
        }
    }
}

impl MassIdenticalSpec {
    pub fn validate(&self) -> Result<()> {
        positive("mass", self.mass)?;
        positive("source_strength", self.source_strength)?;
        positive("sigma", self.sigma)?;
        positive("separation", self.separation)?;
        positive("rate_steps", self.rate_steps as f64)?;
        if !(self.horizon_factor >= 1.0) {
            return Err(Error::Spec("horizon_factor must be >= 1".into()));
        }
        Ok(())
    }

    fn reference_cat(&self) -> PointerCatSpec {
        PointerCatSpec {
            mass: self.mass,
            source_strength: self.source_strength,
            separation: self.separation,
            sigma: self.sigma,
            weight_left: 0.5,
            start: PointerStart::Left,
            trace_every: 0,
            ..PointerCatSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisplacementRate {
    pub cells: usize,
    pub displacement: f64,
    /// `½ d ln(w₀/w₁)/dt`.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassIdenticalReport {
    pub dt: f64,
    pub reference_collapse_time: f64,
    /// Amplitude-rate difference of the reference cat, `ln((1-η)/η)/(2τ)`.
    pub reference_rate: f64,
    pub horizon: f64,
    /// Largest `|w₀(t) - w₀(0)|` of the identical-profile run.
    pub weight_drift: f64,
    /// Largest `|ln(w₀/w₁)(t) - ln(w₀/w₁)(0)|`.
    pub log_ratio_drift: f64,
    /// Differential rate of the identical-profile run over the horizon.
    pub identical_rate: f64,
    /// Reference rate over the identical-profile rate.
    pub speedup: f64,
    pub displacement_rates: Vec<DisplacementRate>,
    pub rates_monotone: bool,
    /// Rate at a displacement equal to the cat separation.
    pub cat_equivalent_rate: f64,
    /// `cat_equivalent_rate / reference_rate`.
    pub cat_rate_ratio: f64,
}

fn two_component(numerics: &Numerics, sigma: f64, c0: f64, c1: f64) -> Result<WaveFunction> {
    let grid = numerics.grid(1)?;
    let mut psi = WaveFunction::from_fn(grid, vec![0], 2, |c, x| {
        let center = if c == 0 { c0 } else { c1 };
        gaussian_amplitude(x[0], center, sigma, 0.0)
    })?;
    // equal weights regardless of discretization
    let w = component_weights(&psi);
    for c in 0..2 {
        let s = (0.5 / w[c]).sqrt();
        psi.component_mut(c).iter_mut().for_each(|a| *a *= s);
    }
    psi.normalize()?;
    psi.log_norm = 0.0;
    Ok(psi)
}

fn log_ratio(psi: &WaveFunction) -> f64 {
    let w = component_weights(psi);
    (w[0] / w[1]).ln()
}

pub fn mass_identical_report(spec: &MassIdenticalSpec, numerics: &Numerics) -> Result<(MassIdenticalReport, Series)> {
    spec.validate()?;
    let cat_spec = spec.reference_cat();
    let setup = PointerSetup::new(&cat_spec, numerics)?;
    let eta = cat_spec.collapse_threshold;
    let horizon_guess = 5.0 * setup.oracle(setup.centers[0], eta)?.time;
    let cat = run_pointer(&setup, &cat_spec, numerics, setup.centers[0], horizon_guess)?;
    let reference_collapse_time = cat
        .collapse_time
        .ok_or_else(|| Error::Insufficient("the reference cat did not collapse".into()))?;
    let reference_rate = ((1.0 - eta) / eta).ln() / (2.0 * reference_collapse_time);
    let dt = setup.params.dt;
    let q = BohmianConfiguration::new(vec![vec![setup.centers[0]]]);
    let c0 = setup.centers[0];
    let dx = numerics.box_length / numerics.grid_points as f64;

    // identical profiles over the horizon
    let horizon = spec.horizon_factor * reference_collapse_time;
    let psi = two_component(numerics, spec.sigma, c0, c0)?;
    let prop = Propagator::new(&psi, &setup.params)?.with_mode(numerics.flow_mode);
    let w0 = component_weights(&psi)[0];
    let r0 = log_ratio(&psi);
    let mut state = PropagatorState::new(psi, q.clone())?;
    let n_steps = (horizon / dt).ceil() as u64;
    let mut weight_drift: f64 = 0.0;
    let mut log_ratio_drift: f64 = 0.0;
    let mut series = Series::new("identical", &["t", "w0", "w1", "q"]);
    series.push(vec![0.0, w0, 1.0 - w0, state.q.positions[0][0]]);
    for _ in 0..n_steps {
        prop.step(&mut state)?;
        let w = component_weights(&state.psi);
        weight_drift = weight_drift.max((w[0] - w0).abs());
        log_ratio_drift = log_ratio_drift.max((log_ratio(&state.psi) - r0).abs());
        if spec.trace_every > 0 && state.step_count % spec.trace_every == 0 {
            series.push(vec![state.t, w[0], w[1], state.q.positions[0][0]]);
        }
    }
    let identical_rate = (log_ratio(&state.psi) - r0).abs() / (2.0 * state.t.max(f64::MIN_POSITIVE));

    // displacement sweep
    let cat_cells = (spec.separation / dx).round() as usize;
    let mut cells: Vec<usize> = spec.displacements.clone();
    if !cells.contains(&cat_cells) {
        cells.push(cat_cells);
    }
    cells.sort_unstable();
    cells.dedup();
    let mut displacement_rates = Vec::new();
    for &k in &cells {
        let d = k as f64 * dx;
        let psi = two_component(numerics, spec.sigma, c0, c0 + d)?;
        let r0 = log_ratio(&psi);
        let mut st = PropagatorState::new(psi, q.clone())?;
        for _ in 0..spec.rate_steps {
            prop.step(&mut st)?;
        }
        displacement_rates.push(DisplacementRate {
            cells: k,
            displacement: d,
            rate: (log_ratio(&st.psi) - r0) / (2.0 * st.t),
        });
    }
    let rates_monotone = displacement_rates.windows(2).all(|w| w[1].rate > w[0].rate);
    let cat_equivalent_rate = displacement_rates
        .iter()
        .find(|r| r.cells == cat_cells)
        .map(|r| r.rate)
        .unwrap_or(f64::NAN);
    let report = MassIdenticalReport {
        dt,
        reference_collapse_time,
        reference_rate,
        horizon: state.t,
        weight_drift,
        log_ratio_drift,
        identical_rate,
        speedup: if identical_rate > 0.0 { reference_rate / identical_rate } else { f64::INFINITY },
        displacement_rates,
        rates_monotone,
        cat_equivalent_rate,
        cat_rate_ratio: cat_equivalent_rate / reference_rate,
    };
    Ok((report, series))
}

pub fn mass_identical_superposition(spec: &MassIdenticalSpec, numerics: &Numerics) -> Result<ScenarioOutput> {
    let (report, trace) = mass_identical_report(spec, numerics)?;
    let mut rates = Series::new("displacement_rates", &["cells", "displacement", "rate"]);
    for r in &report.displacement_rates {
        rates.push(vec![r.cells as f64, r.displacement, r.rate]);
    }
    ScenarioOutput::new("mass_identical_superposition", &report, vec![trace, rates])
}
