//! Hamiltonian assembly.
//!
//! `H = H_int + H_G⁰ + iL`. The gravitational part is sourced by the Bohmian
//! positions: particle `n` at `r` feels
//! `V_G(r) = -γ mₙ Σ_{n'} s_{n'} m_{n'} K(|r - q_{n'}|)` with the softened
//! kernel `K(s) = 1/(s + a)`, and the localization potential is
//! `L(r) = ε γ mₙ Σ_{n'} s_{n'} m_{n'} K(|r - q_{n'}|) ≥ 0`.
//!
//! Both are sums of one-particle fields, so they are stored per particle on
//! that particle's sub-grid and only expanded to configuration space on
//! demand.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::{GridSpec, Spectral};
use crate::kinematics::OneParticleField;
use crate::params::ModelParams;
use crate::wavefunction::{BohmianConfiguration, WaveFunction};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InternalPotential {
    Free,
    /// `½ m ω² x²` along every axis.
    Harmonic { omega: f64 },
    /// `h ((x/a)² - 1)²` along every axis, `a = separation/2`.
    DoubleWell { barrier: f64, separation: f64 },
    /// Attraction of every particle to the origin, `-C/√(r² + s²)`.
    SoftCoulomb { strength: f64, softening: f64 },
    /// Mutual attraction of every particle pair, `-C/√(|rᵢ - rⱼ|² + s²)`.
    PairwiseSoftCoulomb { strength: f64, softening: f64 },
}

impl InternalPotential {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Spec(format!("internal potential: {name} must be > 0, got {v}")))
            }
        };
        match *self {
            InternalPotential::Free => Ok(()),
            InternalPotential::Harmonic { omega } => positive("omega", omega),
            InternalPotential::DoubleWell { barrier, separation } => {
                positive("barrier", barrier)?;
                positive("separation", separation)
            }
            InternalPotential::SoftCoulomb { strength, softening }
            | InternalPotential::PairwiseSoftCoulomb { strength, softening } => {
                positive("strength", strength)?;
                positive("softening", softening)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravKernelSpec {
    pub softening: f64,
    pub smear_length: f64,
}

impl GravKernelSpec {
    pub fn eval(&self, s: f64) -> f64 {
        1.0 / (s + self.softening)
    }
}

/// How a configuration-space grid splits into particles.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub grid: GridSpec,
    pub axis_particle: Vec<usize>,
    pub particle_axes: Vec<Vec<usize>>,
    pub subgrids: Vec<GridSpec>,
    /// `sub_index[n][i]`: index on particle `n`'s sub-grid of configuration
    /// point `i`.
    pub sub_index: Vec<Vec<u32>>,
}

impl Layout {
    pub fn of(psi: &WaveFunction) -> Self {
        let grid = psi.grid().clone();
        let n_particles = psi.n_particles();
        let particle_axes: Vec<Vec<usize>> = (0..n_particles).map(|n| psi.particle_axes(n)).collect();
        let subgrids: Vec<GridSpec> = particle_axes.iter().map(|ax| grid.subgrid(ax)).collect();
        let total = grid.total_points();
        let mut sub_index = vec![Vec::with_capacity(total); n_particles];
        let mut multi = vec![0; grid.dims()];
        for i in 0..total {
            grid.unravel(i, &mut multi);
            for n in 0..n_particles {
                let idx = particle_axes[n]
                    .iter()
                    .zip(&subgrids[n].axes)
                    .fold(0usize, |acc, (&a, ax)| acc * ax.points + multi[a]);
                sub_index[n].push(idx as u32);
            }
        }
        Layout {
            grid,
            axis_particle: psi.axis_particle().to_vec(),
            particle_axes,
            subgrids,
            sub_index,
        }
    }

    pub fn n_particles(&self) -> usize {
        self.particle_axes.len()
    }
}

/// A real potential on configuration space: an optional static
/// configuration-space part plus one field per particle on its sub-grid.
#[derive(Debug, Clone)]
pub struct PotentialField {
    layout: Arc<Layout>,
    static_part: Option<Arc<Vec<f64>>>,
    particle_terms: Vec<Vec<f64>>,
}

impl PotentialField {
    pub fn value(&self, i: usize) -> f64 {
        let mut v = self.static_part.as_ref().map_or(0.0, |s| s[i]);
        for (n, term) in self.particle_terms.iter().enumerate() {
            v += term[self.layout.sub_index[n][i] as usize];
        }
        v
    }

    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.layout.grid.total_points()).map(|i| self.value(i)).collect()
    }

    pub fn particle_term(&self, n: usize) -> &[f64] {
        &self.particle_terms[n]
    }

    pub fn static_part(&self) -> Option<&[f64]> {
        self.static_part.as_ref().map(|s| s.as_slice())
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Upper bound on `|V|` from the per-part maxima.
    pub fn max_abs_bound(&self) -> f64 {
        let s = self
            .static_part
            .as_ref()
            .map_or(0.0, |s| s.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        s + self
            .particle_terms
            .iter()
            .map(|t| t.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .sum::<f64>()
    }

    /// `∫ V |ψ|²` for a normalized state.
    pub fn expectation(&self, psi: &WaveFunction) -> f64 {
        let rho = psi.density();
        let mut acc = 0.0;
        if let Some(s) = &self.static_part {
            acc += s.iter().zip(&rho).map(|(v, r)| v * r).sum::<f64>();
        }
        for (n, term) in self.particle_terms.iter().enumerate() {
            let idx = &self.layout.sub_index[n];
            acc += rho.iter().zip(idx).map(|(r, &j)| r * term[j as usize]).sum::<f64>();
        }
        acc * psi.grid().cell_volume()
    }

    /// Whether every per-particle term is spatially constant and there is no
    /// static part.
    pub fn is_uniform(&self) -> bool {
        self.static_part.is_none()
            && self
                .particle_terms
                .iter()
                .all(|t| t.iter().all(|&v| v == t[0]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticSpec {
    pub hbar: f64,
    pub axis_mass: Vec<f64>,
}

impl KineticSpec {
    /// Largest kinetic energy representable on the grid.
    pub fn max_energy(&self, grid: &GridSpec) -> f64 {
        grid.axes
            .iter()
            .zip(&self.axis_mass)
            .map(|(ax, m)| {
                let k = std::f64::consts::PI / ax.dx();
                self.hbar * self.hbar * k * k / (2.0 * m)
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct Hamiltonian {
    /// `V_int + V_G`.
    pub hermitian: PotentialField,
    /// Non-negative localization potential `L`.
    pub localization: PotentialField,
    pub kinetic: KineticSpec,
}

/// Bohmian mass density.
#[derive(Debug, Clone, PartialEq)]
pub enum MassDensity {
    /// Point sources `(position, mass)`; the delta sum is only used through
    /// the closed-form kernel.
    Points(Vec<(Vec<f64>, f64)>),
    Smeared(OneParticleField),
}

/// Point sources, or Gaussians `m/(π^{d/2} a^d) exp(-|r - q|²/a²)` sampled
/// on `grid` (normalized on the grid so the total mass is exact).
pub fn bohmian_mass_density(
    q: &BohmianConfiguration,
    masses: &[f64],
    kernel: &GravKernelSpec,
    grid: &GridSpec,
) -> Result<MassDensity> {
    if q.n_particles() != masses.len() {
        return Err(Error::Spec("one mass per Bohmian position is required".into()));
    }
    if kernel.smear_length == 0.0 {
        return Ok(MassDensity::Points(
            q.positions.iter().cloned().zip(masses.iter().copied()).collect(),
        ));
    }
    let mut values = vec![0.0; grid.total_points()];
    for (pos, &m) in q.positions.iter().zip(masses) {
        let g = sampled_gaussian(grid, pos, kernel.smear_length)?;
        values.iter_mut().zip(g).for_each(|(v, x)| *v += m * x);
    }
    Ok(MassDensity::Smeared(OneParticleField {
        grid: grid.clone(),
        values,
    }))
}

/// Unit-mass Gaussian `exp(-|r - c|²/a²)` with minimum-image distances,
/// normalized so that `Σ g · dV = 1`.
fn sampled_gaussian(grid: &GridSpec, center: &[f64], width: f64) -> Result<Vec<f64>> {
    if center.len() != grid.dims() {
        return Err(Error::Spec(format!(
            "source has {} coordinates, grid has {} axes",
            center.len(),
            grid.dims()
        )));
    }
    let mut multi = vec![0; grid.dims()];
    let mut g: Vec<f64> = (0..grid.total_points())
        .map(|i| {
            grid.unravel(i, &mut multi);
            let r2: f64 = grid
                .axes
                .iter()
                .enumerate()
                .map(|(a, ax)| ax.min_image(ax.coord(multi[a]) - center[a]).powi(2))
                .sum();
            (-r2 / (width * width)).exp()
        })
        .collect();
    let total: f64 = g.iter().sum::<f64>() * grid.cell_volume();
    if !(total > 0.0) {
        return Err(Error::Domain("smearing Gaussian vanishes on the grid".into()));
    }
    g.iter_mut().for_each(|v| *v /= total);
    Ok(g)
}

/// Kernel values `K(|r_j|)` at minimum-image offsets from the origin, in
/// index-offset order (for circular convolution).
fn kernel_offsets(grid: &GridSpec, kernel: &GravKernelSpec) -> Vec<f64> {
    let mut multi = vec![0; grid.dims()];
    (0..grid.total_points())
        .map(|i| {
            grid.unravel(i, &mut multi);
            let r2: f64 = grid
                .axes
                .iter()
                .enumerate()
                .map(|(a, ax)| ax.min_image(multi[a] as f64 * ax.dx()).powi(2))
                .sum();
            kernel.eval(r2.sqrt())
        })
        .collect()
}

/// Evaluates `Σ_s w_s K̃(r, q_s)` on a one-particle grid.
struct SourceSummer {
    grid: GridSpec,
    origin: Vec<f64>,
    kernel: GravKernelSpec,
    coords: Vec<Vec<f64>>,
    smear: Option<(Spectral, Vec<C64>)>,
}

struct Source<'a> {
    position: &'a [f64],
    origin: Vec<f64>,
    weight: f64,
}

impl SourceSummer {
    fn new(grid: GridSpec, origin: Vec<f64>, kernel: GravKernelSpec) -> Self {
        let mut multi = vec![0; grid.dims()];
        let coords = (0..grid.total_points())
            .map(|i| {
                grid.unravel(i, &mut multi);
                grid.axes.iter().enumerate().map(|(a, ax)| ax.coord(multi[a])).collect()
            })
            .collect();
        let smear = (kernel.smear_length > 0.0).then(|| {
            let sp = Spectral::new(&grid);
            let mut k: Vec<C64> = kernel_offsets(&grid, &kernel).into_iter().map(|v| C64::new(v, 0.0)).collect();
            sp.forward(&mut k);
            (sp, k)
        });
        SourceSummer {
            grid,
            origin,
            kernel,
            coords,
            smear,
        }
    }

    fn same_box(&self, other_origin: &[f64]) -> bool {
        (0..self.grid.dims()).all(|k| {
            self.origin.get(k).copied().unwrap_or(0.0) == other_origin.get(k).copied().unwrap_or(0.0)
        })
    }

    fn add(&self, out: &mut [f64], source: &Source<'_>) -> Result<()> {
        let d = self.grid.dims();
        if source.position.len() != d {
            return Err(Error::Spec(format!(
                "gravitational source has {} coordinates, target particle has {d}",
                source.position.len()
            )));
        }
        if source.weight == 0.0 {
            return Ok(());
        }
        let same = self.same_box(&source.origin);
        if same {
            if let Some((sp, kfft)) = &self.smear {
                let g = sampled_gaussian(&self.grid, source.position, self.kernel.smear_length)?;
                let mut work: Vec<C64> = g.into_iter().map(|v| C64::new(v, 0.0)).collect();
                sp.forward(&mut work);
                work.iter_mut().zip(kfft).for_each(|(w, k)| *w *= k);
                sp.inverse(&mut work);
                let dv = self.grid.cell_volume();
                for (o, w) in out.iter_mut().zip(&work) {
                    *o += source.weight * w.re * dv;
                }
                return Ok(());
            }
        }
        for (o, r) in out.iter_mut().zip(&self.coords) {
            let s2: f64 = (0..d)
                .map(|k| {
                    let diff = r[k] - source.position[k];
                    if same {
                        self.grid.axes[k].min_image(diff)
                    } else {
                        diff + self.origin.get(k).copied().unwrap_or(0.0)
                            - source.origin.get(k).copied().unwrap_or(0.0)
                    }
                    .powi(2)
                })
                .sum();
            *o += source.weight * self.kernel.eval(s2.sqrt());
        }
        Ok(())
    }
}

/// Gravitational potential felt by a test particle of mass `test_mass` on
/// `grid` from every Bohmian position in `q` (all in the same box):
/// `V_G(r) = -γ m Σₙ mₙ K(|r - qₙ|)`.
pub fn grav_potential_per_particle(
    q: &BohmianConfiguration,
    masses: &[f64],
    test_mass: f64,
    grav_strength: f64,
    kernel: &GravKernelSpec,
    grid: &GridSpec,
) -> Result<OneParticleField> {
    if q.n_particles() != masses.len() {
        return Err(Error::Spec("one mass per Bohmian position is required".into()));
    }
    let summer = SourceSummer::new(grid.clone(), Vec::new(), *kernel);
    let mut values = vec![0.0; grid.total_points()];
    for (pos, &m) in q.positions.iter().zip(masses) {
        summer.add(
            &mut values,
            &Source {
                position: pos,
                origin: Vec::new(),
                weight: -grav_strength * test_mass * m,
            },
        )?;
    }
    Ok(OneParticleField {
        grid: grid.clone(),
        values,
    })
}

/// Internal potential on the full configuration grid.
pub fn internal_potential(layout: &Layout, params: &ModelParams) -> Result<Option<Vec<f64>>> {
    let terms: Vec<&InternalPotential> = params
        .internal
        .iter()
        .filter(|t| !matches!(t, InternalPotential::Free))
        .collect();
    if terms.is_empty() {
        return Ok(None);
    }
    let grid = &layout.grid;
    let n_particles = layout.n_particles();
    let mut multi = vec![0; grid.dims()];
    let mut v = vec![0.0; grid.total_points()];
    for (i, vi) in v.iter_mut().enumerate() {
        grid.unravel(i, &mut multi);
        let x: Vec<f64> = grid.axes.iter().enumerate().map(|(a, ax)| ax.coord(multi[a])).collect();
        for term in &terms {
            *vi += match **term {
                InternalPotential::Free => 0.0,
                InternalPotential::Harmonic { omega } => (0..grid.dims())
                    .map(|a| 0.5 * params.particles[layout.axis_particle[a]].mass * omega * omega * x[a] * x[a])
                    .sum(),
                InternalPotential::DoubleWell { barrier, separation } => {
                    let h = 0.5 * separation;
                    x.iter().map(|&xa| barrier * ((xa / h).powi(2) - 1.0).powi(2)).sum()
                }
                InternalPotential::SoftCoulomb { strength, softening } => (0..n_particles)
                    .map(|n| {
                        let r2: f64 = layout.particle_axes[n].iter().map(|&a| x[a] * x[a]).sum();
                        -strength / (r2 + softening * softening).sqrt()
                    })
                    .sum(),
                InternalPotential::PairwiseSoftCoulomb { strength, softening } => {
                    let mut acc = 0.0;
                    for n in 0..n_particles {
                        for m in (n + 1)..n_particles {
                            let an = &layout.particle_axes[n];
                            let am = &layout.particle_axes[m];
                            if an.len() != am.len() {
                                return Err(Error::Spec(
                                    "pairwise interaction needs particles of equal dimension".into(),
                                ));
                            }
                            let same = params.particles[n].origin == params.particles[m].origin;
                            let r2: f64 = an
                                .iter()
                                .zip(am)
                                .enumerate()
                                .map(|(k, (&a, &b))| {
                                    let d = x[a] - x[b];
                                    if same && grid.axes[a] == grid.axes[b] {
                                        grid.axes[a].min_image(d)
                                    } else {
                                        d + params.particles[n].origin_coord(k) - params.particles[m].origin_coord(k)
                                    }
                                    .powi(2)
                                })
                                .sum();
                            acc -= strength / (r2 + softening * softening).sqrt();
                        }
                    }
                    acc
                }
            };
        }
    }
    Ok(Some(v))
}

/// Positions used as gravitational sources at time `t`. The instantaneous
/// implementation returns the current positions; a retarded variant would
/// look up past positions here.
pub trait SourceTime: Send + Sync {
    fn sources(&self, current: &BohmianConfiguration, t: f64) -> BohmianConfiguration;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Instantaneous;

impl SourceTime for Instantaneous {
    fn sources(&self, current: &BohmianConfiguration, _t: f64) -> BohmianConfiguration {
        current.clone()
    }
}

/// Per-particle gravitational fields on sub-grids.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleFields {
    pub hermitian: Vec<Vec<f64>>,
    pub localization: Vec<Vec<f64>>,
}

/// Caches everything about `H` that does not depend on the Bohmian
/// positions.
#[derive(Clone)]
pub struct HamiltonianBuilder {
    params: ModelParams,
    layout: Arc<Layout>,
    internal: Option<Arc<Vec<f64>>>,
    summers: Arc<Vec<SourceSummer>>,
    kinetic: KineticSpec,
}

impl std::fmt::Debug for HamiltonianBuilder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianBuilder").field("params", &self.params).finish()
    }
}

impl HamiltonianBuilder {
    pub fn new(psi: &WaveFunction, params: &ModelParams) -> Result<Self> {
        params.validate()?;
        if params.particles.len() != psi.n_particles() {
            return Err(Error::Spec(format!(
                "{} particles configured, wavefunction has {}",
                params.particles.len(),
                psi.n_particles()
            )));
        }
        let layout = Arc::new(Layout::of(psi));
        let internal = internal_potential(&layout, params)?.map(Arc::new);
        let kernel = GravKernelSpec {
            softening: params.softening,
            smear_length: params.smear_length,
        };
        let summers = layout
            .subgrids
            .iter()
            .zip(&params.particles)
            .map(|(g, p)| SourceSummer::new(g.clone(), p.origin.clone(), kernel))
            .collect();
        let kinetic = KineticSpec {
            hbar: params.hbar,
            axis_mass: layout.axis_particle.iter().map(|&p| params.particles[p].mass).collect(),
        };
        Ok(HamiltonianBuilder {
            params: params.clone(),
            layout,
            internal,
            summers: Arc::new(summers),
            kinetic,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn kinetic(&self) -> &KineticSpec {
        &self.kinetic
    }

    pub fn internal(&self) -> Option<&[f64]> {
        self.internal.as_ref().map(|v| v.as_slice())
    }

    /// True when no gravitational source is active, so the dynamics of the
    /// wavefunction does not depend on the Bohmian positions.
    pub fn is_position_independent(&self) -> bool {
        self.params.grav_strength == 0.0 || self.params.particles.iter().all(|p| p.source_scale == 0.0)
    }

    fn hermitian_sources(&self, n: usize, m: usize) -> bool {
        n != m || self.params.is_collective(n)
    }

    fn localization_sources(&self, n: usize, m: usize) -> bool {
        n != m || self.params.is_collective(n) || self.params.localization_self_terms
    }

    pub fn particle_fields(&self, q: &BohmianConfiguration) -> Result<ParticleFields> {
        if q.n_particles() != self.layout.n_particles() {
            return Err(Error::Spec("Bohmian configuration does not match the particle count".into()));
        }
        let p = &self.params;
        let n_particles = self.layout.n_particles();
        let mut hermitian = Vec::with_capacity(n_particles);
        let mut localization = Vec::with_capacity(n_particles);
        for n in 0..n_particles {
            let size = self.layout.subgrids[n].total_points();
            let mut h = vec![0.0; size];
            let mut l = vec![0.0; size];
            if p.grav_strength != 0.0 {
                let summer = &self.summers[n];
                for m in 0..n_particles {
                    let coupling = p.grav_strength * p.particles[n].mass * p.particles[m].source_scale * p.particles[m].mass;
                    if coupling == 0.0 {
                        continue;
                    }
                    let in_h = self.hermitian_sources(n, m);
                    let in_l = self.localization_sources(n, m) && p.epsilon > 0.0;
                    if !in_h && !in_l {
                        continue;
                    }
                    let mut k = vec![0.0; size];
                    summer.add(
                        &mut k,
                        &Source {
                            position: &q.positions[m],
                            origin: p.particles[m].origin.clone(),
                            weight: 1.0,
                        },
                    )?;
                    if in_h {
                        h.iter_mut().zip(&k).for_each(|(v, kv)| *v -= coupling * kv);
                    }
                    if in_l {
                        l.iter_mut().zip(&k).for_each(|(v, kv)| *v += p.epsilon * coupling * kv);
                    }
                }
            }
            hermitian.push(h);
            localization.push(l);
        }
        Ok(ParticleFields { hermitian, localization })
    }

    pub fn assemble(&self, q: &BohmianConfiguration) -> Result<Hamiltonian> {
        let fields = self.particle_fields(q)?;
        Ok(Hamiltonian {
            hermitian: PotentialField {
                layout: self.layout.clone(),
                static_part: self.internal.clone(),
                particle_terms: fields.hermitian,
            },
            localization: PotentialField {
                layout: self.layout.clone(),
                static_part: None,
                particle_terms: fields.localization,
            },
            kinetic: self.kinetic.clone(),
        })
    }

    /// Builds a potential field from explicit per-particle terms (used by
    /// tests and the localization-derivative machinery).
    pub fn field_from_terms(&self, static_part: Option<Vec<f64>>, particle_terms: Vec<Vec<f64>>) -> PotentialField {
        PotentialField {
            layout: self.layout.clone(),
            static_part: static_part.map(Arc::new),
            particle_terms,
        }
    }
}

/// One-shot assembly of `(V_int + V_G, L, kinetic)` for state `psi` with
/// Bohmian configuration `q`.
pub fn assemble_hamiltonian(psi: &WaveFunction, q: &BohmianConfiguration, params: &ModelParams) -> Result<Hamiltonian> {
    q.check_layout(psi)?;
    HamiltonianBuilder::new(psi, params)?.assemble(q)
}

/// Time step from the split-step phase-error rule
/// `dt ≤ 0.05 ħ / max(|V|, E_kin,max)`.
pub fn suggest_dt(h: &Hamiltonian, grid: &GridSpec) -> f64 {
    let v = h.hermitian.max_abs_bound() + h.localization.max_abs_bound();
    let e = v.max(h.kinetic.max_energy(grid));
    0.05 * h.kinetic.hbar / e
}

/// Largest step for which the half-step amplification `exp(L dt / 2ħ)`
/// stays finite in double precision. Infinite when `L` vanishes.
pub fn overflow_dt(h: &Hamiltonian) -> f64 {
    let l = h.localization.max_abs_bound();
    if l > 0.0 {
        2.0 * h.kinetic.hbar * f64::MAX.ln() / l
    } else {
        f64::INFINITY
    }
}
