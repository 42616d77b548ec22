//! Configuration-space wavefunctions and Bohmian configurations.

use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;
use crate::{Error, Result, C64};

/// Tolerance used when a normalized state is required.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Complex amplitudes on a configuration-space grid.
///
/// Each grid axis belongs to one particle (`axis_particle[a]`); a particle
/// owning several axes moves in several spatial dimensions, taken in axis
/// order. An optional internal degree of freedom is stored as
/// `components` consecutive grid-sized blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: GridSpec,
    axis_particle: Vec<usize>,
    components: usize,
    amplitudes: Vec<C64>,
    /// Accumulated `ln ‖Φ‖` removed by renormalization.
    pub log_norm: f64,
}

impl WaveFunction {
    pub fn new(grid: GridSpec, axis_particle: Vec<usize>, components: usize, amplitudes: Vec<C64>) -> Result<Self> {
        grid.validate()?;
        if axis_particle.len() != grid.dims() {
            return Err(Error::Spec(format!(
                "axis map has {} entries for a {}-axis grid",
                axis_particle.len(),
                grid.dims()
            )));
        }
        let n_particles = axis_particle.iter().max().map_or(0, |m| m + 1);
        for p in 0..n_particles {
            if !axis_particle.contains(&p) {
                return Err(Error::Spec(format!("particle {p} owns no grid axis")));
            }
        }
        if components == 0 {
            return Err(Error::Spec("a wavefunction needs at least one component".into()));
        }
        if amplitudes.len() != components * grid.total_points() {
            return Err(Error::Spec(format!(
                "expected {} amplitudes, got {}",
                components * grid.total_points(),
                amplitudes.len()
            )));
        }
        Ok(WaveFunction {
            grid,
            axis_particle,
            components,
            amplitudes,
            log_norm: 0.0,
        })
    }

    /// One particle per axis, single component.
    pub fn one_particle_per_axis(grid: GridSpec, amplitudes: Vec<C64>) -> Result<Self> {
        let map = (0..grid.dims()).collect();
        WaveFunction::new(grid, map, 1, amplitudes)
    }

    /// Samples `f` at every grid point for each component.
    pub fn from_fn(
        grid: GridSpec,
        axis_particle: Vec<usize>,
        components: usize,
        f: impl Fn(usize, &[f64]) -> C64,
    ) -> Result<Self> {
        grid.validate()?;
        let total = grid.total_points();
        let mut multi = vec![0; grid.dims()];
        let mut x = vec![0.0; grid.dims()];
        let mut amps = Vec::with_capacity(components * total);
        for c in 0..components {
            for i in 0..total {
                grid.unravel(i, &mut multi);
                for (a, ax) in grid.axes.iter().enumerate() {
                    x[a] = ax.coord(multi[a]);
                }
                amps.push(f(c, &x));
            }
        }
        WaveFunction::new(grid, axis_particle, components, amps)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn axis_particle(&self) -> &[usize] {
        &self.axis_particle
    }

    pub fn n_particles(&self) -> usize {
        self.axis_particle.iter().max().map_or(0, |m| m + 1)
    }

    /// Axes owned by particle `n`, in spatial-dimension order.
    pub fn particle_axes(&self, n: usize) -> Vec<usize> {
        (0..self.grid.dims()).filter(|&a| self.axis_particle[a] == n).collect()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn component(&self, c: usize) -> &[C64] {
        let n = self.grid.total_points();
        &self.amplitudes[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [C64] {
        let n = self.grid.total_points();
        &mut self.amplitudes[c * n..(c + 1) * n]
    }

    /// `Σ|ψ|² · cell volume`.
    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_squared() - 1.0).abs() <= tol
    }

    pub fn require_normalized(&self) -> Result<()> {
        let n2 = self.norm_squared();
        if (n2 - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Precondition(format!("wavefunction is not normalized (norm² = {n2})")));
        }
        Ok(())
    }

    /// Rescales to unit norm, accumulating the removed factor in `log_norm`.
    /// Returns the norm before rescaling.
    pub fn normalize(&mut self) -> Result<f64> {
        let n2 = self.norm_squared();
        if !(n2.is_finite() && n2 > 0.0) {
            return Err(Error::Precondition(format!("cannot normalize a state with norm² = {n2}")));
        }
        let norm = n2.sqrt();
        let inv = 1.0 / norm;
        self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        self.log_norm += norm.ln();
        Ok(norm)
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Configuration-space probability density summed over components.
    pub fn density(&self) -> Vec<f64> {
        let n = self.grid.total_points();
        let mut rho = vec![0.0; n];
        for c in 0..self.components {
            for (r, a) in rho.iter_mut().zip(self.component(c)) {
                *r += a.norm_sqr();
            }
        }
        rho
    }

    /// `⟨self|other⟩` with the grid measure.
    pub fn inner(&self, other: &WaveFunction) -> C64 {
        let s: C64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.grid.cell_volume()
    }

    /// `|⟨a|b⟩|² / (‖a‖² ‖b‖²)`.
    pub fn fidelity(&self, other: &WaveFunction) -> f64 {
        self.inner(other).norm_sqr() / (self.norm_squared() * other.norm_squared())
    }

    /// `‖self − other‖` with the grid measure.
    pub fn l2_distance(&self, other: &WaveFunction) -> f64 {
        (self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * self.grid.cell_volume())
        .sqrt()
    }

    /// Same layout, new amplitudes.
    pub fn with_amplitudes(&self, amplitudes: Vec<C64>) -> Result<Self> {
        let mut w = WaveFunction::new(self.grid.clone(), self.axis_particle.clone(), self.components, amplitudes)?;
        w.log_norm = self.log_norm;
        Ok(w)
    }
}

/// Normalized 1D Gaussian wavepacket amplitude
/// `(2πσ²)^{-1/4} exp(-(x-x0)²/(4σ²) + i k x)`; `|ψ|²` has standard
/// deviation `σ`.
pub fn gaussian_amplitude(x: f64, center: f64, sigma: f64, k: f64) -> C64 {
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
    let d = x - center;
    C64::from_polar(norm * (-d * d / (4.0 * sigma * sigma)).exp(), k * x)
}

/// Bohmian positions, one vector per particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BohmianConfiguration {
    pub positions: Vec<Vec<f64>>,
}

impl BohmianConfiguration {
    pub fn new(positions: Vec<Vec<f64>>) -> Self {
        BohmianConfiguration { positions }
    }

    pub fn n_particles(&self) -> usize {
        self.positions.len()
    }

    /// Point in configuration space, one coordinate per grid axis.
    pub fn to_config_point(&self, axis_particle: &[usize]) -> Vec<f64> {
        let mut next = vec![0usize; self.positions.len()];
        axis_particle
            .iter()
            .map(|&p| {
                let v = self.positions[p][next[p]];
                next[p] += 1;
                v
            })
            .collect()
    }

    pub fn from_config_point(point: &[f64], axis_particle: &[usize]) -> Self {
        let n = axis_particle.iter().max().map_or(0, |m| m + 1);
        let mut positions = vec![Vec::new(); n];
        for (&p, &x) in axis_particle.iter().zip(point) {
            positions[p].push(x);
        }
        BohmianConfiguration { positions }
    }

    /// Wraps every coordinate into its periodic box.
    pub fn wrap(&mut self, grid: &GridSpec, axis_particle: &[usize]) {
        let mut next = vec![0usize; self.positions.len()];
        for (a, &p) in axis_particle.iter().enumerate() {
            let x = &mut self.positions[p][next[p]];
            *x = grid.axes[a].wrap(*x);
            next[p] += 1;
        }
    }

    pub fn check_layout(&self, psi: &WaveFunction) -> Result<()> {
        if self.positions.len() != psi.n_particles() {
            return Err(Error::Spec(format!(
                "configuration has {} particles, wavefunction has {}",
                self.positions.len(),
                psi.n_particles()
            )));
        }
        for n in 0..psi.n_particles() {
            let d = psi.particle_axes(n).len();
            if self.positions[n].len() != d {
                return Err(Error::Spec(format!(
                    "particle {n} has {} coordinates, expected {d}",
                    self.positions[n].len()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    #[test]
    fn gaussian_is_normalized() {
        let g = GridSpec::uniform_1d(256, 40.0).unwrap();
        let psi = WaveFunction::from_fn(g, vec![0], 1, |_, x| gaussian_amplitude(x[0], 1.0, 1.5, 2.0)).unwrap();
        assert!((psi.norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_tracks_log_norm() {
        let g = GridSpec::uniform_1d(64, 20.0).unwrap();
        let mut psi = WaveFunction::from_fn(g, vec![0], 1, |_, x| 3.0 * gaussian_amplitude(x[0], 0.0, 1.0, 0.0)).unwrap();
        psi.normalize().unwrap();
        assert!((psi.norm_squared() - 1.0).abs() < 1e-12);
        assert!((psi.log_norm - 3f64.ln()).abs() < 1e-12);
        let zero = psi.with_amplitudes(vec![C64::new(0.0, 0.0); 64]).unwrap();
        assert!(zero.clone().normalize().is_err());
    }

    #[test]
    fn layout_validation() {
        let g = GridSpec::new(vec![Axis::new(16, 1.0), Axis::new(16, 1.0)]).unwrap();
        let amps = vec![C64::new(0.0, 0.0); 256];
        assert!(WaveFunction::new(g.clone(), vec![0], 1, amps.clone()).is_err());
        assert!(WaveFunction::new(g.clone(), vec![1, 1], 1, amps.clone()).is_err());
        assert!(WaveFunction::new(g.clone(), vec![0, 0], 2, amps.clone()).is_err());
        let psi = WaveFunction::new(g, vec![0, 1], 1, amps).unwrap();
        assert_eq!(psi.n_particles(), 2);
    }

    #[test]
    fn config_point_roundtrip() {
        let map = [1, 0, 1];
        let q = BohmianConfiguration::new(vec![vec![5.0], vec![1.0, 2.0]]);
        let point = q.to_config_point(&map);
        assert_eq!(point, vec![1.0, 5.0, 2.0]);
        assert_eq!(BohmianConfiguration::from_config_point(&point, &map), q);
    }
}
