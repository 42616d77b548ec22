//! Rectangular periodic grids and the FFT machinery attached to them.
//!
//! Axis `a` samples `x_j = -L/2 + j·dx`, `j = 0..n`, with `dx = L/n`. Arrays
//! are stored row-major: the last axis is contiguous.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Smallest number of points allowed along an axis.
pub const MIN_POINTS: usize = 16;
/// Upper bound on the total number of grid points (2²²).
pub const MAX_TOTAL_POINTS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub points: usize,
    pub length: f64,
}

impl Axis {
    pub fn new(points: usize, length: f64) -> Self {
        Axis { points, length }
    }

    pub fn dx(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn coord(&self, j: usize) -> f64 {
        -0.5 * self.length + j as f64 * self.dx()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.coord(j)).collect()
    }

    /// Maps `x` into `[-L/2, L/2)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let half = 0.5 * self.length;
        let mut y = (x + half).rem_euclid(self.length) - half;
        if y >= half {
            y -= self.length;
        }
        y
    }

    /// Minimum-image separation.
    pub fn min_image(&self, d: f64) -> f64 {
        d - self.length * (d / self.length).round()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.points;
        let dk = 2.0 * PI / self.length;
        (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                m * dk
            })
            .collect()
    }

    /// Wavenumbers for first derivatives: the Nyquist mode is zeroed so that
    /// the derivative of a real field stays real.
    pub fn derivative_wavenumbers(&self) -> Vec<f64> {
        let mut k = self.wavenumbers();
        k[self.points / 2] = 0.0;
        k
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub boundary: Boundary,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        let g = GridSpec {
            axes,
            boundary: Boundary::Periodic,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn uniform_1d(points: usize, length: f64) -> Result<Self> {
        GridSpec::new(vec![Axis::new(points, length)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 3 {
            return Err(Error::Spec(format!(
                "grid needs between 1 and 3 axes, got {}",
                self.axes.len()
            )));
        }
        for (a, ax) in self.axes.iter().enumerate() {
            if ax.points < MIN_POINTS || !ax.points.is_power_of_two() {
                return Err(Error::Spec(format!(
                    "axis {a}: points must be a power of two >= {MIN_POINTS}, got {}",
                    ax.points
                )));
            }
            if !(ax.length.is_finite() && ax.length > 0.0) {
                return Err(Error::Spec(format!("axis {a}: box length must be positive, got {}", ax.length)));
            }
        }
        if self.total_points() > MAX_TOTAL_POINTS {
            return Err(Error::Spec(format!(
                "grid has {} points, above the limit of {MAX_TOTAL_POINTS}",
                self.total_points()
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn total_points(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::dx).product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims()];
        for a in (0..self.dims().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.axes[a + 1].points;
        }
        strides
    }

    pub fn unravel(&self, mut idx: usize, out: &mut [usize]) {
        for a in (0..self.dims()).rev() {
            let n = self.axes[a].points;
            out[a] = idx % n;
            idx /= n;
        }
    }

    pub fn ravel(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&j, ax)| acc * ax.points + j)
    }

    /// Grid restricted to a subset of axes, in the given order.
    pub fn subgrid(&self, axes: &[usize]) -> GridSpec {
        GridSpec {
            axes: axes.iter().map(|&a| self.axes[a]).collect(),
            boundary: self.boundary,
        }
    }

    /// Index of the cell containing `x` along axis `a` (cells centred on
    /// grid points).
    pub fn nearest_index(&self, a: usize, x: f64) -> usize {
        let ax = &self.axes[a];
        let u = (ax.wrap(x) + 0.5 * ax.length) / ax.dx();
        (u.round() as usize) % ax.points
    }
}

/// FFT plans for every axis of a grid.
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    wavenumbers: Vec<Vec<f64>>,
    derivative_k: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let forward = grid.axes.iter().map(|a| planner.plan_fft_forward(a.points)).collect();
        let inverse = grid.axes.iter().map(|a| planner.plan_fft_inverse(a.points)).collect();
        Spectral {
            grid: grid.clone(),
            forward,
            inverse,
            wavenumbers: grid.axes.iter().map(Axis::wavenumbers).collect(),
            derivative_k: grid.axes.iter().map(Axis::derivative_wavenumbers).collect(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn wavenumbers(&self, a: usize) -> &[f64] {
        &self.wavenumbers[a]
    }

    pub fn derivative_wavenumbers(&self, a: usize) -> &[f64] {
        &self.derivative_k[a]
    }

    fn transform_axis(&self, data: &mut [C64], a: usize, plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.axes[a].points;
        let stride = self.grid.strides()[a];
        if stride == 1 {
            plan.process(data);
            return;
        }
        let block = stride * n;
        let mut line = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for chunk in data.chunks_mut(block) {
            for inner in 0..stride {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = chunk[inner + j * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    chunk[inner + j * stride] = *v;
                }
            }
        }
    }

    /// Unnormalized forward transform over all axes of one grid-sized block.
    pub fn forward(&self, data: &mut [C64]) {
        debug_assert_eq!(data.len(), self.grid.total_points());
        for a in 0..self.grid.dims() {
            self.transform_axis(data, a, &self.forward[a]);
        }
    }

    /// Inverse transform including the `1/N` normalization.
    pub fn inverse(&self, data: &mut [C64]) {
        for a in 0..self.grid.dims() {
            self.transform_axis(data, a, &self.inverse[a]);
        }
        let scale = 1.0 / self.grid.total_points() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    pub fn forward_axis(&self, data: &mut [C64], a: usize) {
        self.transform_axis(data, a, &self.forward[a]);
    }

    pub fn inverse_axis(&self, data: &mut [C64], a: usize) {
        self.transform_axis(data, a, &self.inverse[a]);
        let scale = 1.0 / self.grid.axes[a].points as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    /// Spectral first derivative of a grid-sized block along axis `a`.
    pub fn derivative(&self, data: &[C64], a: usize) -> Vec<C64> {
        let mut out = data.to_vec();
        self.forward_axis(&mut out, a);
        let k = &self.derivative_k[a];
        let n = self.grid.axes[a].points;
        let stride = self.grid.strides()[a];
        for (idx, v) in out.iter_mut().enumerate() {
            let j = (idx / stride) % n;
            *v *= C64::new(0.0, k[j]);
        }
        self.inverse_axis(&mut out, a);
        out
    }

    /// Spectral derivative of a single line of samples along axis `a`.
    pub fn derivative_line(&self, line: &mut [C64], a: usize) {
        let n = line.len();
        self.forward[a].process(line);
        let k = &self.derivative_k[a];
        let scale = 1.0 / n as f64;
        for (v, &kj) in line.iter_mut().zip(k) {
            *v *= C64::new(0.0, kj * scale);
        }
        self.inverse[a].process(line);
    }
}
