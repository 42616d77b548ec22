//! Entangled pair with a heavy, strongly gravitating remote partner.

use serde::{Deserialize, Serialize};

use super::{positive, Numerics, ScenarioOutput, Series};
use crate::ensemble::{compare_settings, no_signaling_experiment, BipartiteProblem, EnsembleSpec, NoSignalingResult, SettingB, SettingComparison};
use crate::observables::ReducedDensityMatrix;
use crate::params::ParticleSpec;
use crate::stats;
use crate::wavefunction::{gaussian_amplitude, BohmianConfiguration, WaveFunction};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BipartiteSpec {
    pub mass_a: f64,
    pub mass_b: f64,
    /// Self-source strength of B, `γ m_B²`.
    pub source_strength_b: f64,
    /// Separation of the two branches on each axis.
    pub separation: f64,
    pub sigma: f64,
    /// Offset of B's box from A's.
    pub b_origin: f64,
    /// Coarse-graining bins of A's reduced density matrix.
    pub bins: usize,
    /// Cells B is translated by in the region-shifted setting.
    pub shift_cells: usize,
    pub settings: Vec<SettingB>,
    pub bootstrap_resamples: usize,
    pub confidence_level: f64,
    pub purity_threshold: f64,
}

impl Default for BipartiteSpec {
    fn default() -> Self {
        BipartiteSpec {
            mass_a: 50.0,
            mass_b: 1e10,
            source_strength_b: 2.0,
            separation: 8.0,
            sigma: 1.0,
            b_origin: 1000.0,
            bins: 8,
            shift_cells: 3,
            settings: SettingB::ALL.to_vec(),
            bootstrap_resamples: 1000,
            confidence_level: 0.99,
            purity_threshold: 0.9,
        }
    }
}

impl BipartiteSpec {
    pub fn validate(&self) -> Result<()> {
        positive("mass_a", self.mass_a)?;
        positive("mass_b", self.mass_b)?;
        if !(self.source_strength_b.is_finite() && self.source_strength_b >= 0.0) {
            return Err(Error::Spec("source_strength_b must be >= 0".into()));
        }
        positive("separation", self.separation)?;
        positive("sigma", self.sigma)?;
        positive("bins", self.bins as f64)?;
        if self.settings.is_empty() {
            return Err(Error::Spec("at least one setting is required".into()));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(Error::Spec("confidence_level must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// `(|L⟩|L⟩ + |R⟩|R⟩)/√2` with A on axis 0 and B on axis 1.
    pub fn problem(&self, numerics: &Numerics) -> Result<BipartiteProblem> {
        self.validate()?;
        let grid = numerics.grid(2)?;
        if self.bins > numerics.grid_points {
            return Err(Error::Spec("bins must not exceed grid_points".into()));
        }
        let h = 0.5 * self.separation;
        let s = self.sigma;
        let mut psi0 = WaveFunction::from_fn(grid, vec![0, 1], 1, |_, x| {
            gaussian_amplitude(x[0], -h, s, 0.0) * gaussian_amplitude(x[1], -h, s, 0.0)
                + gaussian_amplitude(x[0], h, s, 0.0) * gaussian_amplitude(x[1], h, s, 0.0)
        })?;
        psi0.normalize()?;
        psi0.log_norm = 0.0;
        let gamma = self.source_strength_b / (self.mass_b * self.mass_b);
        let particles = vec![
            ParticleSpec::new(self.mass_a).with_source_scale(0.0),
            ParticleSpec::new(self.mass_b).collective(true).with_origin(vec![self.b_origin]),
        ];
        let mut params = numerics.params(particles, gamma, Vec::new());
        let q = BohmianConfiguration::new(vec![vec![-h], vec![-h]]);
        params.dt = numerics.resolve_dt(&psi0, &q, &params)?;
        Ok(BipartiteProblem {
            psi0,
            params,
            b_particle: 1,
            bins: self.bins,
            shift_cells: self.shift_cells,
            mode: numerics.flow_mode,
            t_final: numerics.t_max,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SettingSummary {
    pub setting: SettingB,
    pub n_runs: usize,
    pub failures: usize,
    pub mean_purity: f64,
    pub min_purity: f64,
    /// Fraction of runs whose purity exceeds the threshold.
    pub pure_fraction: f64,
    pub averaged_purity: f64,
    pub averaged: ReducedDensityMatrix,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    #[serde(flatten)]
    pub comparison: SettingComparison,
    /// `trace_distance < 3 · bootstrap standard error`.
    pub within_3_se: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BipartiteReport {
    pub spec: BipartiteSpec,
    pub dt: f64,
    pub t_final: f64,
    pub settings: Vec<SettingSummary>,
    pub comparisons: Vec<ComparisonRow>,
    pub all_ci_contain_zero: bool,
}

fn seed_for(base: u64, setting: SettingB) -> u64 {
    let k = SettingB::ALL.iter().position(|s| *s == setting).unwrap_or(0) as u64;
    base.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn bipartite_report(
    spec: &BipartiteSpec,
    numerics: &Numerics,
    ensemble: &EnsembleSpec,
) -> Result<(BipartiteReport, Vec<NoSignalingResult>)> {
    let mut problem = spec.problem(numerics)?;
    problem.t_final = ensemble.t_max;
    let mut results = Vec::new();
    for &setting in &spec.settings {
        let ens = EnsembleSpec {
            base_seed: seed_for(ensemble.base_seed, setting),
            ..ensemble.clone()
        };
        results.push(no_signaling_experiment(setting, &problem, &ens)?);
    }
    let settings = results
        .iter()
        .map(|r| SettingSummary {
            setting: r.setting,
            n_runs: r.n_runs,
            failures: r.failures,
            mean_purity: stats::mean(&r.purities),
            min_purity: r.purities.iter().copied().fold(f64::INFINITY, f64::min),
            pure_fraction: r.purities.iter().filter(|&&p| p > spec.purity_threshold).count() as f64 / r.purities.len() as f64,
            averaged_purity: r.averaged.purity(),
            averaged: r.averaged.clone(),
        })
        .collect();
    let mut comparisons = Vec::new();
    for i in 0..results.len() {
        for j in (i + 1)..results.len() {
            let c = compare_settings(
                &results[i],
                &results[j],
                spec.bootstrap_resamples,
                spec.confidence_level,
                ensemble.base_seed ^ ((i * 31 + j) as u64),
            )?;
            comparisons.push(ComparisonRow {
                within_3_se: c.trace_distance < 3.0 * c.bootstrap.standard_error,
                comparison: c,
            });
        }
    }
    let report = BipartiteReport {
        spec: spec.clone(),
        dt: problem.params.dt,
        t_final: problem.t_final,
        all_ci_contain_zero: comparisons.iter().all(|c| c.comparison.ci_contains_zero),
        settings,
        comparisons,
    };
    Ok((report, results))
}

pub fn bipartite_no_signal(spec: &BipartiteSpec, numerics: &Numerics, ensemble: Option<&EnsembleSpec>) -> Result<ScenarioOutput> {
    let default_ens;
    let ensemble = match ensemble {
        Some(e) => e,
        None => {
            default_ens = EnsembleSpec {
                n_runs: 100,
                base_seed: numerics.seed,
                collapse_threshold: crate::ensemble::DEFAULT_COLLAPSE_THRESHOLD,
                t_max: numerics.t_max,
            };
            &default_ens
        }
    };
    let (report, results) = bipartite_report(spec, numerics, ensemble)?;
    let mut s = Series::new("purities", &["setting", "run", "purity"]);
    for (k, r) in results.iter().enumerate() {
        for (i, p) in r.purities.iter().enumerate() {
            s.push(vec![k as f64, i as f64, *p]);
        }
    }
    ScenarioOutput::new("bipartite_no_signal", &report, vec![s])
}
