//! Densities, probability currents and Bohmian velocities.
//!
//! Velocities are evaluated in configuration space as `J/ρ` on grid nodes,
//! with spectral derivatives, and interpolated multilinearly to the Bohmian
//! point. Near nodes of the wavefunction `J/ρ` diverges; velocities are then
//! clamped and the evaluation is flagged as stalled.

use std::collections::HashMap;

use serde::Serialize;

use crate::grid::{GridSpec, Spectral};
use crate::wavefunction::{BohmianConfiguration, WaveFunction};
use crate::{Error, Result, C64};

/// Density below `floor_fraction · peak` counts as a node.
pub const DEFAULT_FLOOR_FRACTION: f64 = 1e-12;

/// Scalar field on the one-particle space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneParticleField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl OneParticleField {
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// Vector field on the one-particle space, one grid field per dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneParticleVectorField {
    pub grid: GridSpec,
    pub components: Vec<Vec<f64>>,
}

/// Clamping policy for Bohmian velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityLimits {
    pub floor_fraction: f64,
    pub v_max: f64,
}

impl VelocityLimits {
    /// `v_max = L_max / (10 dt)`.
    pub fn for_step(grid: &GridSpec, dt: f64) -> Self {
        let l = grid.axes.iter().map(|a| a.length).fold(0.0, f64::max);
        VelocityLimits {
            floor_fraction: DEFAULT_FLOOR_FRACTION,
            v_max: l / (10.0 * dt),
        }
    }

    pub fn unlimited() -> Self {
        VelocityLimits {
            floor_fraction: DEFAULT_FLOOR_FRACTION,
            v_max: f64::INFINITY,
        }
    }
}

/// One particle's one-particle grid; all particles must share it for the
/// summed density to be defined.
fn common_particle_grid(psi: &WaveFunction) -> Result<GridSpec> {
    let first = psi.grid().subgrid(&psi.particle_axes(0));
    for n in 1..psi.n_particles() {
        let g = psi.grid().subgrid(&psi.particle_axes(n));
        if g != first {
            return Err(Error::Unsupported(format!(
                "particle {n} lives on a different one-particle grid than particle 0"
            )));
        }
    }
    Ok(first)
}

/// Sums a configuration-space field over every axis not owned by particle
/// `n`, weighting by the traced cell widths.
pub fn marginalize(psi_grid: &GridSpec, axis_particle: &[usize], n: usize, field: &[f64]) -> Vec<f64> {
    let own: Vec<usize> = (0..psi_grid.dims()).filter(|&a| axis_particle[a] == n).collect();
    let sub = psi_grid.subgrid(&own);
    let traced_volume: f64 = (0..psi_grid.dims())
        .filter(|a| !own.contains(a))
        .map(|a| psi_grid.axes[a].dx())
        .product();
    let mut out = vec![0.0; sub.total_points()];
    let mut multi = vec![0; psi_grid.dims()];
    let mut sub_multi = vec![0; own.len()];
    for (i, &v) in field.iter().enumerate() {
        psi_grid.unravel(i, &mut multi);
        for (k, &a) in own.iter().enumerate() {
            sub_multi[k] = multi[a];
        }
        out[sub.ravel(&sub_multi)] += v;
    }
    out.iter_mut().for_each(|v| *v *= traced_volume);
    out
}

/// `D_Φ(r)`: sum over particles of their marginal position densities.
pub fn quantum_density(psi: &WaveFunction) -> Result<OneParticleField> {
    psi.require_normalized()?;
    let grid = common_particle_grid(psi)?;
    let rho = psi.density();
    let mut values = vec![0.0; grid.total_points()];
    for n in 0..psi.n_particles() {
        let m = marginalize(psi.grid(), psi.axis_particle(), n, &rho);
        values.iter_mut().zip(m).for_each(|(v, x)| *v += x);
    }
    Ok(OneParticleField { grid, values })
}

/// Per-axis configuration-space current `(ħ/m) Im Σ_c ψ_c* ∂_a ψ_c`.
pub fn configuration_current(psi: &WaveFunction, spectral: &Spectral, hbar: f64, axis_mass: &[f64]) -> Vec<Vec<f64>> {
    let n = psi.grid().total_points();
    (0..psi.grid().dims())
        .map(|a| {
            let mut j = vec![0.0; n];
            for c in 0..psi.components() {
                let comp = psi.component(c);
                let d = spectral.derivative(comp, a);
                for ((ji, p), dp) in j.iter_mut().zip(comp).zip(&d) {
                    *ji += (p.conj() * dp).im;
                }
            }
            let f = hbar / axis_mass[a];
            j.iter_mut().for_each(|v| *v *= f);
            j
        })
        .collect()
}

/// One-particle probability current, summed over particles like
/// [`quantum_density`].
pub fn probability_current(
    psi: &WaveFunction,
    spectral: &Spectral,
    hbar: f64,
    masses: &[f64],
) -> Result<OneParticleVectorField> {
    psi.require_normalized()?;
    let grid = common_particle_grid(psi)?;
    let axis_mass = axis_masses(psi, masses)?;
    let j = configuration_current(psi, spectral, hbar, &axis_mass);
    let d = grid.dims();
    let mut components = vec![vec![0.0; grid.total_points()]; d];
    for n in 0..psi.n_particles() {
        for (k, &a) in psi.particle_axes(n).iter().enumerate() {
            let m = marginalize(psi.grid(), psi.axis_particle(), n, &j[a]);
            components[k].iter_mut().zip(m).for_each(|(v, x)| *v += x);
        }
    }
    Ok(OneParticleVectorField { grid, components })
}

pub fn axis_masses(psi: &WaveFunction, masses: &[f64]) -> Result<Vec<f64>> {
    if masses.len() != psi.n_particles() {
        return Err(Error::Spec(format!(
            "{} masses given for {} particles",
            masses.len(),
            psi.n_particles()
        )));
    }
    Ok(psi.axis_particle().iter().map(|&p| masses[p]).collect())
}

fn clamp(v: f64, v_max: f64) -> f64 {
    v.clamp(-v_max, v_max)
}

/// Multilinear interpolation stencil: corner indices and weights.
fn stencil(grid: &GridSpec, point: &[f64]) -> Vec<(usize, f64)> {
    let d = grid.dims();
    let mut lo = vec![0usize; d];
    let mut hi = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for (a, ax) in grid.axes.iter().enumerate() {
        let u = (ax.wrap(point[a]) + 0.5 * ax.length) / ax.dx();
        let f = u.floor();
        lo[a] = (f as isize).rem_euclid(ax.points as isize) as usize;
        hi[a] = (lo[a] + 1) % ax.points;
        frac[a] = u - f;
    }
    let mut out = Vec::with_capacity(1 << d);
    let mut multi = vec![0; d];
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        for a in 0..d {
            if corner >> a & 1 == 1 {
                multi[a] = hi[a];
                w *= frac[a];
            } else {
                multi[a] = lo[a];
                w *= 1.0 - frac[a];
            }
        }
        out.push((grid.ravel(&multi), w));
    }
    out
}

/// Result of evaluating the guidance equation at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BohmianVelocity {
    pub velocities: Vec<Vec<f64>>,
    pub stalled: bool,
}

/// Full-grid velocity field, suitable for moving many configurations through
/// one wavefunction.
#[derive(Debug, Clone)]
pub struct VelocityField {
    grid: GridSpec,
    axis_particle: Vec<usize>,
    velocity: Vec<Vec<f64>>,
    density: Vec<f64>,
    floor: f64,
}

impl VelocityField {
    pub fn compute(
        psi: &WaveFunction,
        spectral: &Spectral,
        hbar: f64,
        masses: &[f64],
        limits: VelocityLimits,
    ) -> Result<Self> {
        let axis_mass = axis_masses(psi, masses)?;
        let density = psi.density();
        let peak = density.iter().cloned().fold(0.0, f64::max);
        let j = configuration_current(psi, spectral, hbar, &axis_mass);
        let velocity = j
            .into_iter()
            .map(|ja| {
                ja.iter()
                    .zip(&density)
                    .map(|(&jv, &r)| if r > 0.0 { clamp(jv / r, limits.v_max) } else { 0.0 })
                    .collect()
            })
            .collect();
        Ok(VelocityField {
            grid: psi.grid().clone(),
            axis_particle: psi.axis_particle().to_vec(),
            velocity,
            density,
            floor: limits.floor_fraction * peak,
        })
    }

    /// Nodal velocity along `axis`.
    pub fn nodal(&self, axis: usize) -> &[f64] {
        &self.velocity[axis]
    }

    pub fn at_point(&self, point: &[f64]) -> (Vec<f64>, bool) {
        let st = stencil(&self.grid, point);
        let rho: f64 = st.iter().map(|&(i, w)| w * self.density[i]).sum();
        let v = (0..self.grid.dims())
            .map(|a| st.iter().map(|&(i, w)| w * self.velocity[a][i]).sum())
            .collect();
        (v, rho < self.floor)
    }

    pub fn at(&self, q: &BohmianConfiguration) -> BohmianVelocity {
        let point = q.to_config_point(&self.axis_particle);
        let (v, stalled) = self.at_point(&point);
        BohmianVelocity {
            velocities: BohmianConfiguration::from_config_point(&v, &self.axis_particle).positions,
            stalled,
        }
    }
}

/// Velocity evaluator that only differentiates the grid lines through the
/// interpolation stencil. Cheap when a single configuration is moved through
/// a large grid; lines are cached for the lifetime of the evaluator.
pub struct PointVelocity<'a> {
    psi: &'a WaveFunction,
    spectral: &'a Spectral,
    hbar: f64,
    axis_mass: Vec<f64>,
    limits: VelocityLimits,
    floor: f64,
    strides: Vec<usize>,
    lines: HashMap<(usize, usize), Vec<C64>>,
}

impl<'a> PointVelocity<'a> {
    pub fn new(
        psi: &'a WaveFunction,
        spectral: &'a Spectral,
        hbar: f64,
        masses: &[f64],
        limits: VelocityLimits,
    ) -> Result<Self> {
        let axis_mass = axis_masses(psi, masses)?;
        let n = psi.grid().total_points();
        let mut peak = 0.0f64;
        for i in 0..n {
            let r: f64 = (0..psi.components()).map(|c| psi.component(c)[i].norm_sqr()).sum();
            peak = peak.max(r);
        }
        Ok(PointVelocity {
            psi,
            spectral,
            hbar,
            axis_mass,
            limits,
            floor: limits.floor_fraction * peak,
            strides: psi.grid().strides(),
            lines: HashMap::new(),
        })
    }

    /// Derivative along `axis` of every component on the line through
    /// `idx`, laid out component-major.
    fn line_derivative(&mut self, axis: usize, idx: usize) -> (&[C64], usize) {
        let grid = self.psi.grid();
        let n = grid.axes[axis].points;
        let stride = self.strides[axis];
        let j = (idx / stride) % n;
        let base = idx - j * stride;
        let psi = self.psi;
        let spectral = self.spectral;
        let line = self.lines.entry((axis, base)).or_insert_with(|| {
            let mut out = Vec::with_capacity(n * psi.components());
            for c in 0..psi.components() {
                let comp = psi.component(c);
                let mut l: Vec<C64> = (0..n).map(|k| comp[base + k * stride]).collect();
                spectral.derivative_line(&mut l, axis);
                out.extend(l);
            }
            out
        });
        (line.as_slice(), j)
    }

    fn nodal_velocity(&mut self, axis: usize, idx: usize) -> f64 {
        let n = self.psi.grid().axes[axis].points;
        let comps = self.psi.components();
        let psi = self.psi;
        let (line, j) = self.line_derivative(axis, idx);
        let mut num = 0.0;
        let mut rho = 0.0;
        for c in 0..comps {
            let p = psi.component(c)[idx];
            num += (p.conj() * line[c * n + j]).im;
            rho += p.norm_sqr();
        }
        if rho > 0.0 {
            clamp(self.hbar / self.axis_mass[axis] * num / rho, self.limits.v_max)
        } else {
            0.0
        }
    }

    pub fn at_point(&mut self, point: &[f64]) -> (Vec<f64>, bool) {
        let st = stencil(self.psi.grid(), point);
        let psi = self.psi;
        let rho: f64 = st
            .iter()
            .map(|&(i, w)| w * (0..psi.components()).map(|c| psi.component(c)[i].norm_sqr()).sum::<f64>())
            .sum();
        let d = psi.grid().dims();
        let mut v = vec![0.0; d];
        for (a, va) in v.iter_mut().enumerate() {
            for &(i, w) in &st {
                if w != 0.0 {
                    *va += w * self.nodal_velocity(a, i);
                }
            }
        }
        (v, rho < self.floor)
    }

    pub fn at(&mut self, q: &BohmianConfiguration) -> BohmianVelocity {
        let map = self.psi.axis_particle().to_vec();
        let point = q.to_config_point(&map);
        let (v, stalled) = self.at_point(&point);
        BohmianVelocity {
            velocities: BohmianConfiguration::from_config_point(&v, &map).positions,
            stalled,
        }
    }
}

/// Guidance-equation velocity of every particle at configuration `q`.
pub fn bohmian_velocity(
    psi: &WaveFunction,
    q: &BohmianConfiguration,
    spectral: &Spectral,
    hbar: f64,
    masses: &[f64],
    limits: VelocityLimits,
) -> Result<BohmianVelocity> {
    q.check_layout(psi)?;
    let mut eval = PointVelocity::new(psi, spectral, hbar, masses, limits)?;
    Ok(eval.at(q))
}
