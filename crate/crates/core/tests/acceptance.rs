//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use gravcollapse::ensemble::{quantum_equilibrium_check, EnsembleSpec, SettingB, DEFAULT_COLLAPSE_THRESHOLD};
use gravcollapse::estimators::{collapse_time_estimate, coulomb_gravity_ratio, fifth_power_scaling_check};
use gravcollapse::hamiltonian::{assemble_hamiltonian, suggest_dt, InternalPotential};
use gravcollapse::observables::{localization_derivative, BranchRegion, ObservableSpec};
use gravcollapse::propagator::{BohmianMode, FlowMode, Propagator, PropagatorState};
use gravcollapse::scenarios::bipartite::{bipartite_report, BipartiteSpec};
use gravcollapse::scenarios::drift::{eigenstate_drift_report, EigenstateDriftSpec};
use gravcollapse::scenarios::pointer::{
    mass_identical_report, pointer_ensemble, run_pointer, scaling_sweep_report, MassIdenticalSpec, PointerCatSpec,
    PointerSetup, PointerStart, ScalingSweepSpec,
};
use gravcollapse::scenarios::{Numerics, ScenarioSpec};
use gravcollapse::wavefunction::gaussian_amplitude;
use gravcollapse::{BohmianConfiguration, GridSpec, ModelParams, ParticleSpec, Result, UnitSystem, WaveFunction, C64};
use nalgebra::{DMatrix, DVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn within_order(value: f64, target: f64) -> bool {
    (value / target).log10().abs() <= 1.0
}

fn point(x: f64) -> BohmianConfiguration {
    BohmianConfiguration::new(vec![vec![x]])
}

fn numerics(spec: &ScenarioSpec) -> Numerics {
    spec.default_numerics()
}

fn estimator_reproduction() -> Result<Outcome> {
    let si = UnitSystem::si();
    let (eps, mass, size) = (1e-3, 1e-9, 1e-4);
    let tau = collapse_time_estimate(eps, mass, size, &si)?;
    let density = mass / size.powi(3);
    let small: f64 = 1e-6;
    let tau_small = collapse_time_estimate(eps, density * small.powi(3), small, &si)?;
    outcome(
        within_order(tau, 1e-6) && within_order(tau_small, 1e4),
        format!("tau(0.1 mm, 1e-6 g) = {tau:.3e} s, tau(1 um, same density) = {tau_small:.3e} s"),
    )
}

fn coulomb_gravity() -> Result<Outcome> {
    let x = coulomb_gravity_ratio(&UnitSystem::si())?;
    outcome((1e39..1e40).contains(&x), format!("X = {x:.4e}"))
}

fn unitarity_floor() -> Result<Outcome> {
    let spec = EigenstateDriftSpec {
        grav_strength: 0.0,
        ..Default::default()
    };
    let mut num = numerics(&ScenarioSpec::EigenstateDrift(spec.clone()));
    num.grid_points = 1024;
    num.box_length = 20.0;
    num.epsilon = 0.0;
    num.t_max = 0.0;
    let (probe, _) = eigenstate_drift_report(&spec, &num)?;
    num.dt = Some(probe.dt);
    num.t_max = 1e4 * probe.dt;
    let (r, _) = eigenstate_drift_report(&spec, &num)?;
    outcome(
        r.steps == 10_000 && r.norm_drift < 1e-9 && r.relative_energy_drift < 1e-8,
        format!(
            "steps = {}, dt = {:.3e}, norm drift = {:.2e}, relative energy drift = {:.2e}",
            r.steps, r.dt, r.norm_drift, r.relative_energy_drift
        ),
    )
}

/// Dense `T + V` on a one-dimensional periodic grid, kinetic part built from
/// the discrete Fourier basis.
fn dense_hamiltonian(grid: &GridSpec, mass: f64, hbar: f64, v: &[f64]) -> DMatrix<C64> {
    let ax = grid.axes[0];
    let n = ax.points;
    let dx = ax.dx();
    let ks: Vec<f64> = (0..n)
        .map(|m| {
            let m = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
            2.0 * std::f64::consts::PI * m / ax.length
        })
        .collect();
    DMatrix::from_fn(n, n, |j, l| {
        let d = (j as f64 - l as f64) * dx;
        let t: C64 = ks
            .iter()
            .map(|&k| C64::from_polar(hbar * hbar * k * k / (2.0 * mass), k * d))
            .sum::<C64>()
            / n as f64;
        if j == l {
            t + v[j]
        } else {
            t
        }
    })
}

fn localization_invariance() -> Result<Outcome> {
    let grid = GridSpec::uniform_1d(64, 16.0)?;
    let dv = grid.cell_volume();
    let mut params = ModelParams::single(1.0, 1.0, 0.01);
    params.particles = vec![ParticleSpec::new(1.0).collective(true)];
    params.grav_strength = 1.0;
    params.epsilon = 1.0;
    params.internal = vec![InternalPotential::Harmonic { omega: 1.0 }];
    let q = point(1.3);
    let probe = WaveFunction::from_fn(grid.clone(), vec![0], 1, |_, x| gaussian_amplitude(x[0], 0.0, 1.0, 0.0))?;
    let h = assemble_hamiltonian(&probe, &q, &params)?;
    let v = h.hermitian.to_dense();
    let l = h.localization.to_dense();
    let h_dense = dense_hamiltonian(&grid, 1.0, 1.0, &v);
    let eig = h_dense.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..64).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let to_state = |vec: &DVector<C64>| -> Result<WaveFunction> {
        let amps = vec.iter().map(|a| a / dv.sqrt()).collect();
        WaveFunction::new(grid.clone(), vec![0], 1, amps)
    };
    // (2/ħ) Re ψ†(L - ⟨L⟩)Aψ with unit-norm vectors
    let oracle_rate = |psi: &DVector<C64>, a: &DMatrix<C64>| -> f64 {
        let mean: f64 = psi.iter().zip(&l).map(|(p, li)| p.norm_sqr() * li).sum();
        let ap = a * psi;
        let s: C64 = psi.iter().zip(ap.iter()).zip(&l).map(|((p, x), li)| p.conj() * x * (li - mean)).sum();
        2.0 * s.re
    };

    let mut worst_quadrature: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for &k in &order[..6] {
        let vec = eig.eigenvectors.column(k).into_owned();
        let psi = to_state(&vec)?;
        let dense = localization_derivative(&psi, &q, &params, &ObservableSpec::Dense(h_dense.clone()))?;
        let spectral = localization_derivative(&psi, &q, &params, &ObservableSpec::Hamiltonian)?;
        worst_quadrature = worst_quadrature.max(dense.abs()).max(spectral.abs());
        worst_oracle = worst_oracle.max(oracle_rate(&vec, &h_dense).abs());
    }

    // projector and position eigenstates on a finer grid
    let fine = GridSpec::uniform_1d(512, 40.0)?;
    let region = BranchRegion {
        label: "Left".into(),
        bounds: vec![(-20.0, -2.0)],
    };
    let masked = WaveFunction::from_fn(fine.clone(), vec![0], 1, |_, x| {
        if region.contains(x) {
            gaussian_amplitude(x[0], -8.0, 1.5, 0.4)
        } else {
            C64::new(0.0, 0.0)
        }
    })?;
    let mut masked = masked;
    masked.normalize()?;
    masked.log_norm = 0.0;
    let fine_q = point(-7.0);
    let projector = localization_derivative(&masked, &fine_q, &params, &ObservableSpec::Projector(region))?;
    let j = 200;
    let mut delta = vec![C64::new(0.0, 0.0); 512];
    delta[j] = C64::new(1.0 / fine.cell_volume().sqrt(), 0.0);
    let delta = WaveFunction::new(fine.clone(), vec![0], 1, delta)?;
    let position = localization_derivative(&delta, &fine_q, &params, &ObservableSpec::Position { axis: 0 })?;
    worst_quadrature = worst_quadrature.max(projector.abs()).max(position.abs());

    // a superposition of eigenstates is not invariant, and both evaluations agree on it
    let mix: DVector<C64> =
        (eig.eigenvectors.column(order[0]) + eig.eigenvectors.column(order[1])).map(|z| z / 2f64.sqrt());
    let mixed_quad = localization_derivative(&to_state(&mix)?, &q, &params, &ObservableSpec::Dense(h_dense.clone()))?;
    let mixed_oracle = oracle_rate(&mix, &h_dense);
    let agree = (mixed_quad - mixed_oracle).abs() <= 1e-10 * mixed_oracle.abs().max(1.0);

    outcome(
        worst_quadrature < 1e-10 && worst_oracle < 1e-10 && mixed_oracle.abs() > 1e-6 && agree,
        format!(
            "max |rate| quadrature = {worst_quadrature:.2e}, dense oracle = {worst_oracle:.2e}; \
             non-eigenstate rate {mixed_quad:.6e} vs oracle {mixed_oracle:.6e}"
        ),
    )
}

fn collapse_rate_law() -> Result<Outcome> {
    let spec = ScalingSweepSpec::default();
    let num = numerics(&ScenarioSpec::ScalingSweep(spec.clone()));
    let r = scaling_sweep_report(&spec, &num)?;
    let fifth = fifth_power_scaling_check(1e3, &[1e-6, 1e-5, 1e-4], 1e-3, &UnitSystem::si())?;
    let pass = (r.slope_vs_epsilon_source + 1.0).abs() <= 0.05
        && r.decades >= 2.0
        && r.points.iter().all(|p| p.collapse_time.is_finite())
        && (fifth.log_log_slope + 5.0).abs() < 1e-12;
    outcome(
        pass,
        format!(
            "slope vs log(eps S) = {:.4} over {:.2} decades (vs log(eps S K) {:.4} +- {:.4}), \
             threshold sensitivity {:.3}, fifth-power slope {:.12}",
            r.slope_vs_epsilon_source, r.decades, r.slope, r.slope_stderr, r.threshold_sensitivity, fifth.log_log_slope
        ),
    )
}

fn born_rule() -> Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, w) in [0.5, 0.36].into_iter().enumerate() {
        let spec = PointerCatSpec {
            weight_left: w,
            start: PointerStart::Sampled,
            ..Default::default()
        };
        let num = numerics(&ScenarioSpec::PointerCat(spec.clone()));
        let setup = PointerSetup::new(&spec, &num)?;
        let ens = EnsembleSpec {
            n_runs: 400,
            base_seed: 600 + k as u64,
            collapse_threshold: DEFAULT_COLLAPSE_THRESHOLD,
            t_max: num.t_max,
        };
        let (r, _) = pointer_ensemble(&setup, &spec, &num, &ens)?;
        let left = r.outcomes.iter().find(|o| o.label == "Left").map_or(0.0, |o| o.frequency);
        let sigma = (w * (1.0 - w) / 400.0).sqrt();
        let ok = (left - w).abs() <= 3.0 * sigma && r.unresolved == 0 && r.failures == 0;
        pass &= ok;
        detail.push(format!(
            "w = {w}: f_left = {left:.4} (3 sigma = {:.4}), unresolved {}, failures {}",
            3.0 * sigma,
            r.unresolved,
            r.failures
        ));
    }
    outcome(pass, detail.join("; "))
}

fn quantum_equilibrium() -> Result<Outcome> {
    let grid = GridSpec::uniform_1d(512, 40.0)?;
    let mut psi0 = WaveFunction::from_fn(grid, vec![0], 1, |_, x| {
        gaussian_amplitude(x[0], -4.0, 1.0, 2.0) + gaussian_amplitude(x[0], 4.0, 1.0, -2.0)
    })?;
    psi0.normalize()?;
    psi0.log_norm = 0.0;
    let mut params = ModelParams::single(1.0, 1.0, 2e-3);
    params.epsilon = 0.0;
    let r = quantum_equilibrium_check(&psi0, &params, 1000, 7, 2000, 400, 0.01)?;
    let worst = r.probes.iter().flat_map(|p| p.ks.iter().map(|k| k.statistic)).fold(0.0, f64::max);
    outcome(
        r.all_pass,
        format!(
            "{} probes up to t = {:.1}, max KS D = {worst:.4} (critical {:.4}), stalled stages {}",
            r.probes.len(),
            r.probes.last().map_or(0.0, |p| p.t),
            r.critical_value,
            r.stalled_total
        ),
    )
}

fn no_signaling() -> Result<Outcome> {
    let spec = BipartiteSpec::default();
    let num = numerics(&ScenarioSpec::BipartiteNoSignal(spec.clone()));
    let ens = EnsembleSpec {
        n_runs: 1000,
        base_seed: 800,
        collapse_threshold: DEFAULT_COLLAPSE_THRESHOLD,
        t_max: num.t_max,
    };
    let (r, _) = bipartite_report(&spec, &num, &ens)?;
    let collapsed_pure = r
        .settings
        .iter()
        .filter(|s| s.setting != SettingB::CouplingOff)
        .all(|s| s.min_purity > spec.purity_threshold && s.failures == 0);
    let comparisons: Vec<String> = r
        .comparisons
        .iter()
        .map(|c| {
            format!(
                "{}/{}: D = {:.4}, CI [{:.4}, {:.4}]",
                c.comparison.a.name(),
                c.comparison.b.name(),
                c.comparison.trace_distance,
                c.comparison.bootstrap.lower,
                c.comparison.bootstrap.upper
            )
        })
        .collect();
    let purities: Vec<String> = r
        .settings
        .iter()
        .map(|s| format!("{} min purity {:.4}", s.setting.name(), s.min_purity))
        .collect();
    outcome(
        r.all_ci_contain_zero && collapsed_pure,
        format!("{}; {}", comparisons.join(", "), purities.join(", ")),
    )
}

fn mass_identical() -> Result<Outcome> {
    let spec = MassIdenticalSpec::default();
    let num = numerics(&ScenarioSpec::MassIdenticalSuperposition(spec.clone()));
    let (r, _) = mass_identical_report(&spec, &num)?;
    outcome(
        r.weight_drift < 1e-6 && r.reference_collapse_time <= r.horizon,
        format!(
            "weight drift {:.2e} over horizon {:.3} (reference cat collapses at {:.3}); speedup {:.3e}",
            r.weight_drift, r.horizon, r.reference_collapse_time, r.speedup
        ),
    )
}

fn evolve(psi0: &WaveFunction, params: &ModelParams, q: &BohmianConfiguration, mode: FlowMode, steps: u64) -> Result<WaveFunction> {
    let prop = Propagator::new(psi0, params)?.with_mode(mode).with_bohmian(BohmianMode::Pinned);
    let mut state = PropagatorState::new(psi0.clone(), q.clone())?;
    for _ in 0..steps {
        prop.step(&mut state)?;
    }
    Ok(state.psi)
}

fn integrator_equivalence() -> Result<Outcome> {
    // default pointer scenario up to collapse
    let spec = PointerCatSpec::default();
    let num = numerics(&ScenarioSpec::PointerCat(spec.clone()));
    let setup = PointerSetup::new(&spec, &num)?;
    let q0 = setup.centers[0];
    let t_end = 2.0 * setup.oracle(q0, spec.collapse_threshold)?.time;
    let run = |mode| {
        let n = Numerics { flow_mode: mode, ..num.clone() };
        run_pointer(&setup, &spec, &n, q0, t_end)
    };
    let a = run(FlowMode::Normalized)?;
    let b = run(FlowMode::Unnormalized)?;
    let pointer_fidelity = a.final_state.psi.fidelity(&b.final_state.psi);

    // light cat where splitting errors are visible
    let grid = GridSpec::uniform_1d(256, 40.0)?;
    let mut psi0 = WaveFunction::from_fn(grid.clone(), vec![0], 1, |_, x| {
        gaussian_amplitude(x[0], -5.0, 1.0, 0.5) + gaussian_amplitude(x[0], 5.0, 1.0, 0.0)
    })?;
    psi0.normalize()?;
    psi0.log_norm = 0.0;
    let mut params = ModelParams::single(1.0, 1.0, 1.0);
    params.particles = vec![ParticleSpec::new(1.0).collective(true)];
    params.grav_strength = 1.0;
    params.epsilon = 0.1;
    let q = point(-5.0);
    let dt0 = suggest_dt(&assemble_hamiltonian(&psi0, &q, &params)?, &grid);
    let base_steps = (1.0 / dt0).ceil() as u64;
    let at = |mode, refine: u64| -> Result<WaveFunction> {
        let mut p = params.clone();
        p.dt = 1.0 / (base_steps * refine) as f64;
        evolve(&psi0, &p, &q, mode, base_steps * refine)
    };
    let mut orders = Vec::new();
    let mut light_fidelity: f64 = 1.0;
    for mode in [FlowMode::Normalized, FlowMode::Unnormalized] {
        let reference = at(mode, 16)?;
        let errs: Vec<f64> = [1, 2, 4]
            .iter()
            .map(|&r| at(mode, r).map(|s| s.l2_distance(&reference)))
            .collect::<Result<_>>()?;
        orders.push((errs[0] / errs[1]).log2());
        orders.push((errs[1] / errs[2]).log2());
    }
    light_fidelity = light_fidelity.min(at(FlowMode::Normalized, 1)?.fidelity(&at(FlowMode::Unnormalized, 1)?));
    let second_order = orders.iter().all(|o| (1.8..=2.2).contains(o));
    outcome(
        pointer_fidelity >= 1.0 - 1e-6 && light_fidelity >= 1.0 - 1e-6 && second_order,
        format!(
            "fidelity pointer {:.3e} / light cat {:.3e} below 1; halving orders {:?}",
            1.0 - pointer_fidelity,
            1.0 - light_fidelity,
            orders.iter().map(|o| (o * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    )
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

const CRITERIA: [Criterion; 10] = [
    ("Estimator reproduction", estimator_reproduction),
    ("Coulomb/gravity ratio", coulomb_gravity),
    ("Unitarity floor", unitarity_floor),
    ("Eigenstate localization invariance", localization_invariance),
    ("Collapse-rate law", collapse_rate_law),
    ("Born rule", born_rule),
    ("Quantum equilibrium", quantum_equilibrium),
    ("No-signaling", no_signaling),
    ("Non-collapse of mass-identical superpositions", mass_identical),
    ("Integrator equivalence", integrator_equivalence),
];

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in CRITERIA.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.to_lowercase().contains(&f.to_lowercase())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(Ok(o)) => (o.pass, o.detail),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        if !pass {
            failed += 1;
        }
        println!("{} [{id}] {name} ({secs:.1} s): {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
