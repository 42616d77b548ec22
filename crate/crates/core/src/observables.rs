//! Measurements on wavefunction snapshots.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::grid::{GridSpec, Spectral};
use crate::hamiltonian::{HamiltonianBuilder, KineticSpec, PotentialField};
use crate::kinematics::quantum_density;
use crate::params::ModelParams;
use crate::propagator::kinetic_symbol;
use crate::wavefunction::{BohmianConfiguration, WaveFunction};
use crate::{Error, Result, C64};

/// Axis-aligned box in configuration space; `bounds[a] = (lo, hi)` selects
/// grid points with `lo ≤ x_a < hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRegion {
    pub label: String,
    pub bounds: Vec<(f64, f64)>,
}

impl BranchRegion {
    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds.iter().zip(x).all(|(&(lo, hi), &v)| lo <= v && v < hi)
    }

    fn overlaps(&self, other: &BranchRegion) -> bool {
        self.bounds
            .iter()
            .zip(&other.bounds)
            .all(|(&(a0, a1), &(b0, b1))| a0 < b1 && b0 < a1)
    }
}

pub const OTHER_LABEL: &str = "other";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRegionSpec {
    pub regions: Vec<BranchRegion>,
}

impl BranchRegionSpec {
    /// `Left`: `x_axis < split`, `Right`: `x_axis ≥ split`, unbounded along
    /// the other axes.
    pub fn left_right(grid: &GridSpec, axis: usize, split: f64) -> Self {
        let full: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, f64::INFINITY); grid.dims()];
        let mut left = full.clone();
        left[axis] = (f64::NEG_INFINITY, split);
        let mut right = full;
        right[axis] = (split, f64::INFINITY);
        BranchRegionSpec {
            regions: vec![
                BranchRegion {
                    label: "Left".into(),
                    bounds: left,
                },
                BranchRegion {
                    label: "Right".into(),
                    bounds: right,
                },
            ],
        }
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        for (i, r) in self.regions.iter().enumerate() {
            if r.bounds.len() != dims {
                return Err(Error::Spec(format!(
                    "region '{}' has {} bounds for a {dims}-axis grid",
                    r.label,
                    r.bounds.len()
                )));
            }
            if r.label == OTHER_LABEL {
                return Err(Error::Spec(format!("region label '{OTHER_LABEL}' is reserved")));
            }
            for s in &self.regions[..i] {
                if s.label == r.label {
                    return Err(Error::Spec(format!("duplicate region label '{}'", r.label)));
                }
                if s.overlaps(r) {
                    return Err(Error::Spec(format!("regions '{}' and '{}' overlap", s.label, r.label)));
                }
            }
        }
        Ok(())
    }

    /// Region index of every grid point (`regions.len()` for "other").
    pub fn assignment(&self, grid: &GridSpec) -> Vec<usize> {
        let mut multi = vec![0; grid.dims()];
        let mut x = vec![0.0; grid.dims()];
        (0..grid.total_points())
            .map(|i| {
                grid.unravel(i, &mut multi);
                for (a, ax) in grid.axes.iter().enumerate() {
                    x[a] = ax.coord(multi[a]);
                }
                self.regions.iter().position(|r| r.contains(&x)).unwrap_or(self.regions.len())
            })
            .collect()
    }
}

/// Weights per region label, in region order, followed by "other".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchWeights {
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
}

impl BranchWeights {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.weights[i])
    }

    /// Index and weight of the heaviest labeled region.
    pub fn dominant(&self) -> (usize, f64) {
        self.weights[..self.weights.len() - 1]
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, w)| if w > acc.1 { (i, w) } else { acc })
    }
}

/// Precomputed region assignment for repeated weight evaluation.
#[derive(Debug, Clone)]
pub struct BranchProbe {
    labels: Vec<String>,
    assignment: Vec<usize>,
}

impl BranchProbe {
    pub fn new(grid: &GridSpec, spec: &BranchRegionSpec) -> Result<Self> {
        spec.validate(grid.dims())?;
        let mut labels: Vec<String> = spec.regions.iter().map(|r| r.label.clone()).collect();
        labels.push(OTHER_LABEL.to_string());
        Ok(BranchProbe {
            labels,
            assignment: spec.assignment(grid),
        })
    }

    pub fn weights(&self, psi: &WaveFunction) -> BranchWeights {
        let mut w = vec![0.0; self.labels.len()];
        for c in 0..psi.components() {
            for (a, &r) in psi.component(c).iter().zip(&self.assignment) {
                w[r] += a.norm_sqr();
            }
        }
        let dv = psi.grid().cell_volume();
        w.iter_mut().for_each(|v| *v *= dv);
        BranchWeights {
            labels: self.labels.clone(),
            weights: w,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Region index of configuration-space grid point `i`.
    pub fn region_of_index(&self, i: usize) -> usize {
        self.assignment[i]
    }
}

pub fn branch_weights(psi: &WaveFunction, regions: &BranchRegionSpec) -> Result<BranchWeights> {
    psi.require_normalized()?;
    Ok(BranchProbe::new(psi.grid(), regions)?.weights(psi))
}

/// `∫|ψ_c|²` for every internal component.
pub fn component_weights(psi: &WaveFunction) -> Vec<f64> {
    let dv = psi.grid().cell_volume();
    (0..psi.components())
        .map(|c| psi.component(c).iter().map(|a| a.norm_sqr()).sum::<f64>() * dv)
        .collect()
}

/// `⟨ψ|T|ψ⟩` by spectral quadrature.
pub fn kinetic_energy(psi: &WaveFunction, spectral: &Spectral, kinetic: &KineticSpec) -> f64 {
    let symbol = kinetic_symbol(psi, spectral, kinetic.hbar, &kinetic.axis_mass);
    let n = psi.grid().total_points() as f64;
    let mut e = 0.0;
    for c in 0..psi.components() {
        let mut work = psi.component(c).to_vec();
        spectral.forward(&mut work);
        e += work.iter().zip(&symbol).map(|(a, s)| a.norm_sqr() * s).sum::<f64>() / n;
    }
    e * psi.grid().cell_volume()
}

/// `Tψ` by spectral multiplication.
pub fn apply_kinetic(psi: &WaveFunction, spectral: &Spectral, kinetic: &KineticSpec) -> Vec<C64> {
    let symbol = kinetic_symbol(psi, spectral, kinetic.hbar, &kinetic.axis_mass);
    let mut out = psi.amplitudes().to_vec();
    let n = psi.grid().total_points();
    for block in out.chunks_mut(n) {
        spectral.forward(block);
        block.iter_mut().zip(&symbol).for_each(|(a, s)| *a *= s);
        spectral.inverse(block);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    pub kinetic: f64,
    pub internal_potential: f64,
    /// `⟨T + V_int⟩`.
    pub internal: f64,
    /// `⟨V_G⟩`, the Hermitian gravitational part.
    pub gravitational: f64,
}

impl Energies {
    pub fn total(&self) -> f64 {
        self.internal + self.gravitational
    }
}

/// `(⟨H_int⟩, ⟨H_G⁰⟩)` using a prebuilt Hamiltonian builder.
pub fn energies_with(psi: &WaveFunction, q: &BohmianConfiguration, builder: &HamiltonianBuilder, spectral: &Spectral) -> Result<Energies> {
    let h = builder.assemble(q)?;
    let kinetic = kinetic_energy(psi, spectral, &h.kinetic);
    let rho = psi.density();
    let dv = psi.grid().cell_volume();
    let internal_potential = builder
        .internal()
        .map_or(0.0, |v| v.iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>() * dv);
    let gravitational = h.hermitian.expectation(psi) - internal_potential;
    Ok(Energies {
        kinetic,
        internal_potential,
        internal: kinetic + internal_potential,
        gravitational,
    })
}

pub fn energy_expectation(psi: &WaveFunction, q: &BohmianConfiguration, params: &ModelParams) -> Result<Energies> {
    psi.require_normalized()?;
    q.check_layout(psi)?;
    let builder = HamiltonianBuilder::new(psi, params)?;
    energies_with(psi, q, &builder, &Spectral::new(psi.grid()))
}

/// Observable `A` for the localization derivative.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableSpec {
    Identity,
    /// Position coordinate along one configuration axis.
    Position { axis: usize },
    Projector(BranchRegion),
    /// Arbitrary real position-diagonal operator, one value per grid point.
    Diagonal(Vec<f64>),
    /// Dense matrix on a single-component grid (small grids only).
    Dense(DMatrix<C64>),
    /// `H_int + H_G⁰` at the given Bohmian positions.
    Hamiltonian,
}

/// Largest grid for which dense observables are accepted.
pub const MAX_DENSE_POINTS: usize = 4096;

fn apply_observable(
    psi: &WaveFunction,
    spec: &ObservableSpec,
    hermitian: &PotentialField,
    kinetic: &KineticSpec,
    spectral: &Spectral,
) -> Result<Vec<C64>> {
    let grid = psi.grid();
    let n = grid.total_points();
    let amps = psi.amplitudes();
    let diag = |f: &dyn Fn(usize) -> f64| -> Vec<C64> { amps.iter().enumerate().map(|(i, a)| a * f(i % n)).collect() };
    Ok(match spec {
        ObservableSpec::Identity => amps.to_vec(),
        ObservableSpec::Position { axis } => {
            if *axis >= grid.dims() {
                return Err(Error::Spec(format!("position axis {axis} out of range")));
            }
            let stride = grid.strides()[*axis];
            let ax = grid.axes[*axis];
            diag(&|i| ax.coord((i / stride) % ax.points))
        }
        ObservableSpec::Projector(region) => {
            let mut multi = vec![0; grid.dims()];
            let inside: Vec<bool> = (0..n)
                .map(|i| {
                    grid.unravel(i, &mut multi);
                    let x: Vec<f64> = grid.axes.iter().enumerate().map(|(a, ax)| ax.coord(multi[a])).collect();
                    region.contains(&x)
                })
                .collect();
            diag(&|i| if inside[i] { 1.0 } else { 0.0 })
        }
        ObservableSpec::Diagonal(values) => {
            if values.len() != n {
                return Err(Error::Spec("diagonal observable must have one value per grid point".into()));
            }
            diag(&|i| values[i])
        }
        ObservableSpec::Dense(m) => {
            if n > MAX_DENSE_POINTS || psi.components() != 1 || m.nrows() != n || m.ncols() != n {
                return Err(Error::Unsupported(format!(
                    "dense observables need a single-component grid of at most {MAX_DENSE_POINTS} points matching the matrix"
                )));
            }
            let v = nalgebra::DVector::from_column_slice(amps);
            (m * v).iter().copied().collect()
        }
        ObservableSpec::Hamiltonian => {
            let mut out = apply_kinetic(psi, spectral, kinetic);
            let v = hermitian.to_dense();
            for (i, o) in out.iter_mut().enumerate() {
                *o += amps[i] * v[i % n];
            }
            out
        }
    })
}

/// Rate of change of `⟨A⟩` due to the localization term alone:
/// `(2/ħ) Re⟨ψ|(L - ⟨L⟩) A|ψ⟩`.
pub fn localization_derivative(psi: &WaveFunction, q: &BohmianConfiguration, params: &ModelParams, spec: &ObservableSpec) -> Result<f64> {
    psi.require_normalized()?;
    q.check_layout(psi)?;
    let builder = HamiltonianBuilder::new(psi, params)?;
    let spectral = Spectral::new(psi.grid());
    let h = builder.assemble(q)?;
    let a_psi = apply_observable(psi, spec, &h.hermitian, &h.kinetic, &spectral)?;
    let l = h.localization.to_dense();
    let n = psi.grid().total_points();
    let dv = psi.grid().cell_volume();
    let amps = psi.amplitudes();
    let mean_l: f64 = amps.iter().enumerate().map(|(i, a)| a.norm_sqr() * l[i % n]).sum::<f64>() * dv;
    let s: C64 = amps
        .iter()
        .zip(&a_psi)
        .enumerate()
        .map(|(i, (p, ap))| p.conj() * ap * (l[i % n] - mean_l))
        .sum();
    Ok(2.0 / params.hbar * s.re * dv)
}

/// `‖D_Φ - n_G/m‖₂` on the one-particle grid, with the empirical density of
/// the Bohmian positions smeared by normalized Gaussians of standard
/// deviation `bandwidth` and averaged over the snapshot.
pub fn density_mismatch(psi: &WaveFunction, snapshot: &[BohmianConfiguration], bandwidth: f64) -> Result<f64> {
    if snapshot.is_empty() {
        return Err(Error::Spec("density mismatch needs at least one configuration".into()));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::Domain("mismatch bandwidth must be positive".into()));
    }
    let d = quantum_density(psi)?;
    let grid = &d.grid;
    let mut empirical = vec![0.0; grid.total_points()];
    let mut multi = vec![0; grid.dims()];
    let weight = 1.0 / snapshot.len() as f64;
    for q in snapshot {
        q.check_layout(psi)?;
        for pos in &q.positions {
            let mut g: Vec<f64> = (0..grid.total_points())
                .map(|i| {
                    grid.unravel(i, &mut multi);
                    let r2: f64 = grid
                        .axes
                        .iter()
                        .enumerate()
                        .map(|(a, ax)| ax.min_image(ax.coord(multi[a]) - pos[a]).powi(2))
                        .sum();
                    (-0.5 * r2 / (bandwidth * bandwidth)).exp()
                })
                .collect();
            let total: f64 = g.iter().sum::<f64>() * grid.cell_volume();
            g.iter_mut().for_each(|v| *v /= total);
            empirical.iter_mut().zip(&g).for_each(|(e, v)| *e += weight * v);
        }
    }
    let sq: f64 = d.values.iter().zip(&empirical).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sq * grid.cell_volume()).sqrt())
}

/// Reduced density matrix of the subsystem living on one axis of a
/// two-axis grid, in a basis of `K` normalized position bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensityMatrix {
    pub subsystem_axis: usize,
    pub bins: usize,
    pub matrix: DMatrix<C64>,
    /// Weight captured by the bin basis before renormalization.
    pub raw_trace: f64,
}

#[derive(Serialize)]
struct RhoRecord<'a> {
    subsystem_axis: usize,
    bins: usize,
    raw_trace: f64,
    purity: f64,
    eigenvalues: &'a [f64],
    real: Vec<Vec<f64>>,
    imag: Vec<Vec<f64>>,
}

impl Serialize for ReducedDensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let k = self.bins;
        let rows = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> { (0..k).map(|i| (0..k).map(|j| f(&self.matrix[(i, j)])).collect()).collect() };
        RhoRecord {
            subsystem_axis: self.subsystem_axis,
            bins: k,
            raw_trace: self.raw_trace,
            purity: self.purity(),
            eigenvalues: &self.eigenvalues(),
            real: rows(|c| c.re),
            imag: rows(|c| c.im),
        }
        .serialize(s)
    }
}

/// Bin of grid index `j` when `n` points are split into `k` contiguous bins.
pub fn bin_of(j: usize, n: usize, k: usize) -> usize {
    j * k / n
}

pub fn reduced_density_matrix(psi: &WaveFunction, subsystem_axis: usize, bins: usize) -> Result<ReducedDensityMatrix> {
    let grid = psi.grid();
    if grid.dims() != 2 {
        return Err(Error::Unsupported(format!(
            "reduced density matrices need a bipartite 2-axis grid, got {} axes",
            grid.dims()
        )));
    }
    if subsystem_axis > 1 {
        return Err(Error::Spec("subsystem axis must be 0 or 1".into()));
    }
    let na = grid.axes[subsystem_axis].points;
    if bins == 0 || bins > na {
        return Err(Error::Spec(format!("bin count must lie in 1..={na}")));
    }
    let b_axis = 1 - subsystem_axis;
    let nb = grid.axes[b_axis].points;
    let dxa = grid.axes[subsystem_axis].dx();
    let dxb = grid.axes[b_axis].dx();
    let mut counts = vec![0usize; bins];
    for j in 0..na {
        counts[bin_of(j, na, bins)] += 1;
    }
    let norm: Vec<f64> = counts.iter().map(|&c| dxa / (c as f64 * dxa).sqrt()).collect();
    let strides = grid.strides();
    let mut rho = DMatrix::<C64>::zeros(bins, bins);
    let mut coeff = vec![C64::new(0.0, 0.0); bins];
    for c in 0..psi.components() {
        let comp = psi.component(c);
        for jb in 0..nb {
            coeff.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for ja in 0..na {
                let idx = ja * strides[subsystem_axis] + jb * strides[b_axis];
                coeff[bin_of(ja, na, bins)] += comp[idx];
            }
            for (v, s) in coeff.iter_mut().zip(&norm) {
                *v *= *s;
            }
            for i in 0..bins {
                for k in 0..bins {
                    rho[(i, k)] += coeff[i] * coeff[k].conj() * dxb;
                }
            }
        }
    }
    let raw_trace: f64 = (0..bins).map(|i| rho[(i, i)].re).sum();
    if !(raw_trace > 0.0) {
        return Err(Error::Domain("state has no weight in the bin basis".into()));
    }
    rho /= C64::new(raw_trace, 0.0);
    Ok(ReducedDensityMatrix {
        subsystem_axis,
        bins,
        matrix: rho,
        raw_trace,
    })
}

impl ReducedDensityMatrix {
    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `½ ‖ρ - σ‖₁`.
    pub fn trace_distance(&self, other: &ReducedDensityMatrix) -> f64 {
        trace_distance(&self.matrix, &other.matrix)
    }

    /// Element-wise mean of several matrices of equal shape.
    pub fn average(items: &[ReducedDensityMatrix]) -> Result<ReducedDensityMatrix> {
        let first = items.first().ok_or_else(|| Error::Insufficient("nothing to average".into()))?;
        let mut m = DMatrix::<C64>::zeros(first.bins, first.bins);
        for r in items {
            m += &r.matrix;
        }
        m /= C64::new(items.len() as f64, 0.0);
        Ok(ReducedDensityMatrix {
            subsystem_axis: first.subsystem_axis,
            bins: first.bins,
            matrix: m,
            raw_trace: items.iter().map(|r| r.raw_trace).sum::<f64>() / items.len() as f64,
        })
    }
}

pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn trace_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b)).iter().map(|v| v.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use crate::hamiltonian::InternalPotential;
    use crate::wavefunction::gaussian_amplitude;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cat(n: usize, l: f64, a: f64, b: f64, sep: f64, sigma: f64) -> WaveFunction {
        let g = GridSpec::uniform_1d(n, l).unwrap();
        let mut psi = WaveFunction::from_fn(g, vec![0], 1, |_, x| {
            gaussian_amplitude(x[0], -sep, sigma, 0.0) * a + gaussian_amplitude(x[0], sep, sigma, 0.0) * b
        })
        .unwrap();
        psi.normalize().unwrap();
        psi.log_norm = 0.0;
        psi
    }

    #[test]
    fn cat_weights() {
        let psi = cat(256, 40.0, 0.6, 0.8, 7.0, 1.0);
        let spec = BranchRegionSpec::left_right(psi.grid(), 0, 0.0);
        let w = branch_weights(&psi, &spec).unwrap();
        assert!((w.get("Left").unwrap() - 0.36).abs() < 1e-9);
        assert!((w.get("Right").unwrap() - 0.64).abs() < 1e-9);
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let sym = cat(256, 40.0, 1.0, 1.0, 8.0, 1.0);
        let w = branch_weights(&sym, &spec).unwrap();
        assert!((w.get("Left").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn overlapping_regions_rejected() {
        let g = GridSpec::uniform_1d(64, 10.0).unwrap();
        let spec = BranchRegionSpec {
            regions: vec![
                BranchRegion {
                    label: "a".into(),
                    bounds: vec![(-1.0, 1.0)],
                },
                BranchRegion {
                    label: "b".into(),
                    bounds: vec![(0.5, 2.0)],
                },
            ],
        };
        assert!(matches!(BranchProbe::new(&g, &spec), Err(Error::Spec(_))));
    }

    #[test]
    fn harmonic_energy_and_plane_wave() {
        let mut params = ModelParams::single(1.0, 0.1, 0.01);
        params.internal = vec![InternalPotential::Harmonic { omega: 1.0 }];
        let g = GridSpec::uniform_1d(256, 30.0).unwrap();
        let psi = WaveFunction::from_fn(g.clone(), vec![0], 1, |_, x| gaussian_amplitude(x[0], 0.0, 0.5f64.sqrt(), 0.0)).unwrap();
        let q = BohmianConfiguration::new(vec![vec![0.0]]);
        let e = energy_expectation(&psi, &q, &params).unwrap();
        assert!((e.internal - 0.5).abs() < 1e-8);

        let free = ModelParams::single(2.0, 0.1, 0.01);
        let l = 2.0 * std::f64::consts::PI;
        let g = GridSpec::uniform_1d(64, l).unwrap();
        let k = 5.0;
        let pw = WaveFunction::from_fn(g, vec![0], 1, |_, x| C64::from_polar(1.0 / l.sqrt(), k * x[0])).unwrap();
        let e = energy_expectation(&pw, &q, &free).unwrap();
        assert!((e.kinetic - k * k / 4.0).abs() < 1e-10);
    }

    fn dense_kinetic(n: usize, l: f64, mass: f64) -> DMatrix<C64> {
        let g = GridSpec::uniform_1d(n, l).unwrap();
        let sp = Spectral::new(&g);
        let kin = KineticSpec {
            hbar: 1.0,
            axis_mass: vec![mass],
        };
        let mut m = DMatrix::<C64>::zeros(n, n);
        for j in 0..n {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            let psi = WaveFunction::new(g.clone(), vec![0], 1, e).unwrap();
            let col = apply_kinetic(&psi, &sp, &kin);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    #[test]
    fn energy_matches_dense_operator() {
        let n = 64;
        let l = 16.0;
        let mut params = ModelParams::single(1.3, 0.5, 0.01);
        params.grav_strength = 0.4;
        params.internal = vec![InternalPotential::DoubleWell {
            barrier: 0.3,
            separation: 4.0,
        }];
        let g = GridSpec::uniform_1d(n, l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let amps: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let mut psi = WaveFunction::new(g.clone(), vec![0], 1, amps).unwrap();
        psi.normalize().unwrap();
        let q = BohmianConfiguration::new(vec![vec![1.7]]);
        let e = energy_expectation(&psi, &q, &params).unwrap();

        let mut h = dense_kinetic(n, l, 1.3);
        let hb = HamiltonianBuilder::new(&psi, &params).unwrap().assemble(&q).unwrap();
        let v = hb.hermitian.to_dense();
        for i in 0..n {
            h[(i, i)] += v[i];
        }
        let x = nalgebra::DVector::from_column_slice(psi.amplitudes());
        let oracle = (x.adjoint() * &h * &x)[(0, 0)] * g.cell_volume();
        assert!(oracle.im.abs() < 1e-12);
        assert!((oracle.re - e.total()).abs() < 1e-10);
    }

    #[test]
    fn identity_rate_vanishes() {
        let psi = cat(128, 30.0, 0.6, 0.8, 5.0, 1.0);
        let mut params = ModelParams::single(2.0, 0.3, 0.01);
        params.grav_strength = 1.0;
        params.epsilon = 0.1;
        let q = BohmianConfiguration::new(vec![vec![-5.0]]);
        let r = localization_derivative(&psi, &q, &params, &ObservableSpec::Identity).unwrap();
        assert!(r.abs() < 1e-14);
    }

    #[test]
    fn position_pulled_towards_occupied_branch() {
        let psi = cat(64, 24.0, 1.0, 1.0, 4.0, 1.0);
        let mut params = ModelParams::single(2.0, 0.3, 0.01);
        params.grav_strength = 1.0;
        params.epsilon = 0.1;
        let q = BohmianConfiguration::new(vec![vec![-4.0]]);
        let rate = localization_derivative(&psi, &q, &params, &ObservableSpec::Position { axis: 0 }).unwrap();
        assert!(rate < 0.0, "rate {rate}");

        // dense evaluation of the same quantity
        let h = HamiltonianBuilder::new(&psi, &params).unwrap().assemble(&q).unwrap();
        let l = h.localization.to_dense();
        let g = psi.grid();
        let dv = g.cell_volume();
        let rho = psi.density();
        let mean_l: f64 = rho.iter().zip(&l).map(|(r, v)| r * v).sum::<f64>() * dv;
        let mean_x: f64 = rho.iter().enumerate().map(|(j, r)| r * g.axes[0].coord(j)).sum::<f64>() * dv;
        let mut lx = 0.0;
        for j in 0..64 {
            lx += rho[j] * l[j] * g.axes[0].coord(j);
        }
        lx *= dv;
        let oracle = 2.0 * (lx - mean_l * mean_x);
        assert!((rate - oracle).abs() < 1e-12);
    }

    #[test]
    fn projector_eigenstate_rate_vanishes() {
        let g = GridSpec::uniform_1d(128, 20.0).unwrap();
        let mut psi = WaveFunction::from_fn(g.clone(), vec![0], 1, |_, x| {
            if x[0] < -1.0 && x[0] > -9.0 {
                C64::new((std::f64::consts::PI * (x[0] + 9.0) / 8.0).sin(), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .unwrap();
        psi.normalize().unwrap();
        let mut params = ModelParams::single(1.0, 0.3, 0.01);
        params.grav_strength = 1.0;
        params.epsilon = 0.2;
        let q = BohmianConfiguration::new(vec![vec![-4.0]]);
        let region = BranchRegion {
            label: "Left".into(),
            bounds: vec![(f64::NEG_INFINITY, 0.0)],
        };
        let r = localization_derivative(&psi, &q, &params, &ObservableSpec::Projector(region)).unwrap();
        assert!(r.abs() < 1e-10);
    }

    #[test]
    fn mismatch_of_cat_matches_two_gaussian_value() {
        let sigma = 1.0;
        let psi = cat(512, 64.0, 1.0, 1.0, 8.0, sigma);
        let snap = [BohmianConfiguration::new(vec![vec![-8.0]])];
        let m = density_mismatch(&psi, &snap, sigma).unwrap();
        // ‖½g_R - ½g_L‖ for unit Gaussians with negligible overlap
        let g_norm = (1.0 / (2.0 * sigma * std::f64::consts::PI.sqrt())).sqrt();
        assert!((m - 0.5 * 2f64.sqrt() * g_norm).abs() < 1e-6);
        assert_eq!(m, density_mismatch(&psi, &snap, sigma).unwrap());

        let narrow = cat(512, 64.0, 1.0, 0.0, 0.0, sigma);
        let peak = [BohmianConfiguration::new(vec![vec![0.0]])];
        assert!(density_mismatch(&narrow, &peak, sigma).unwrap() < 1e-10);
    }

    fn random_bipartite(n: usize, rng: &mut ChaCha8Rng) -> WaveFunction {
        let g = GridSpec::new(vec![Axis::new(n, 10.0), Axis::new(n, 10.0)]).unwrap();
        let amps = (0..n * n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let mut psi = WaveFunction::new(g, vec![0, 1], 1, amps).unwrap();
        psi.normalize().unwrap();
        psi
    }

    #[test]
    fn rho_matches_dense_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 32;
        let psi = random_bipartite(n, &mut rng);
        let dx = psi.grid().axes[0].dx();
        for (axis, k) in [(0, 8), (1, 32), (0, 5)] {
            let rho = reduced_density_matrix(&psi, axis, k).unwrap();
            // Ψ as an n_A × n_B matrix, bin projector P (K × n_A)
            let psi_m = DMatrix::<C64>::from_fn(n, n, |a, b| {
                let (i0, i1) = if axis == 0 { (a, b) } else { (b, a) };
                psi.amplitudes()[i0 * n + i1]
            });
            let mut counts = vec![0.0; k];
            for j in 0..n {
                counts[j * k / n] += 1.0;
            }
            let p = DMatrix::<C64>::from_fn(k, n, |b, j| {
                if j * k / n == b {
                    C64::new(dx / (counts[b] * dx as f64).sqrt(), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            let c = &p * &psi_m;
            let mut oracle = &c * c.adjoint() * C64::new(dx, 0.0);
            let tr = oracle.trace();
            oracle /= tr;
            assert!((&oracle - &rho.matrix).iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-10);
            assert!(rho.hermiticity_error() < 1e-12);
            assert!((rho.trace().re - 1.0).abs() < 1e-10);
            assert!(rho.eigenvalues()[0] > -1e-10);
        }
    }

    #[test]
    fn product_and_entangled_states() {
        let g = GridSpec::new(vec![Axis::new(32, 20.0), Axis::new(32, 20.0)]).unwrap();
        let product = WaveFunction::from_fn(g.clone(), vec![0, 1], 1, |_, x| {
            gaussian_amplitude(x[0], 1.0, 1.5, 0.3) * gaussian_amplitude(x[1], -2.0, 1.0, 0.0)
        })
        .unwrap();
        let rho = reduced_density_matrix(&product, 0, 8).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-10);

        let mut ent = WaveFunction::from_fn(g.clone(), vec![0, 1], 1, |_, x| {
            gaussian_amplitude(x[0], -5.0, 0.6, 0.0) * gaussian_amplitude(x[1], -5.0, 0.6, 0.0)
                + gaussian_amplitude(x[0], 5.0, 0.6, 0.0) * gaussian_amplitude(x[1], 5.0, 0.6, 0.0)
        })
        .unwrap();
        ent.normalize().unwrap();
        let rho = reduced_density_matrix(&ent, 0, 2).unwrap();
        let ev = rho.eigenvalues();
        assert!((ev[0] - 0.5).abs() < 1e-6 && (ev[1] - 0.5).abs() < 1e-6);
        assert!(reduced_density_matrix(&WaveFunction::from_fn(GridSpec::uniform_1d(32, 1.0).unwrap(), vec![0], 1, |_, _| C64::new(1.0, 0.0)).unwrap(), 0, 2).is_err());
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_ignore_global_phase(seed in 0u64..1000, phase in 0.0f64..6.283) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = GridSpec::uniform_1d(32, 8.0).unwrap();
            let amps = (0..32).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let mut psi = WaveFunction::new(g.clone(), vec![0], 1, amps).unwrap();
            psi.normalize().unwrap();
            let spec = BranchRegionSpec {
                regions: vec![BranchRegion { label: "mid".into(), bounds: vec![(-1.0, 1.0)] }],
            };
            let w = branch_weights(&psi, &spec).unwrap();
            prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let rot = psi.with_amplitudes(psi.amplitudes().iter().map(|a| a * C64::from_polar(1.0, phase)).collect()).unwrap();
            let w2 = branch_weights(&rot, &spec).unwrap();
            prop_assert!((w.weights[0] - w2.weights[0]).abs() < 1e-12);
        }

        #[test]
        fn rho_is_a_density_matrix(seed in 0u64..1000, k in 1usize..16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi = random_bipartite(16, &mut rng);
            let rho = reduced_density_matrix(&psi, 1, k).unwrap();
            prop_assert!(rho.hermiticity_error() < 1e-12);
            prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
            prop_assert!(rho.eigenvalues()[0] > -1e-10);
        }
    }
}
