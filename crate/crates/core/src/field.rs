use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::grid::GridSpec;
use crate::spectral;

/// Real function sampled on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

/// Fields on the base of a fibration are ordinary scalar fields on the base grid.
pub type BaseField = PeriodicScalarField;

impl PeriodicScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::InvalidInput(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    /// Used internally where finiteness is guaranteed by construction.
    pub(crate) fn from_vec(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self::from_vec(grid, vec![value; grid.len()])
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Sample `f` at the real coordinates of every grid point.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.point(i)))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn oscillation(&self) -> f64 {
        self.sup() - self.inf()
    }

    /// Grid mean, i.e. the integral against Lebesgue measure on the unit torus.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Self {
        Self::from_vec(self.grid, self.values.par_iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64 + Sync>(&self, other: &Self, f: F) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self::from_vec(
            self.grid,
            self.values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn offset(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Subtract the supremum so that `sup = 0` exactly.
    pub fn sup_normalized(&self) -> Self {
        let s = self.sup();
        self.offset(-s)
    }

    pub fn mean_removed(&self) -> Self {
        let m = self.mean();
        self.offset(-m)
    }

    /// Periodic shift by `steps` grid points along `axis`: the result at `p`
    /// is the input at `p - steps·e_axis`.
    pub fn shifted(&self, axis: usize, steps: isize) -> Self {
        let mut out = vec![0.0; self.len()];
        for (i, &v) in self.values.iter().enumerate() {
            out[self.grid.shifted(i, axis, steps)] = v;
        }
        Self::from_vec(self.grid, out)
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        spectral::plan(self.grid).forward_real(&self.values)
    }

    pub fn from_spectrum(grid: GridSpec, spectrum: Vec<Complex64>) -> Self {
        Self::from_vec(grid, spectral::plan(grid).inverse_real(spectrum))
    }

    /// Spectral derivative along one real axis.
    pub fn derivative(&self, axis: usize) -> Self {
        let plan = spectral::plan(self.grid);
        let spec = plan.forward_real(&self.values);
        let out = plan.apply(&spec, |idx| plan.d_axis(idx, axis));
        Self::from_vec(self.grid, out.into_iter().map(|c| c.re).collect())
    }

    /// Pointwise Euclidean length of the real gradient.
    pub fn gradient_norm(&self) -> Self {
        let plan = spectral::plan(self.grid);
        let spec = plan.forward_real(&self.values);
        let mut sq = vec![0.0; self.len()];
        for axis in 0..self.grid.axes() {
            let d = plan.apply(&spec, |idx| plan.d_axis(idx, axis));
            for (s, c) in sq.iter_mut().zip(&d) {
                *s += c.re * c.re;
            }
        }
        Self::from_vec(self.grid, sq.into_iter().map(f64::sqrt).collect())
    }

    /// Solve the flat Poisson problem `Δu = self` (Laplacian in the real
    /// coordinates) for mean-zero `u`; the mean of the input is ignored.
    pub fn inverse_laplacian(&self) -> Self {
        let plan = spectral::plan(self.grid);
        let spec = plan.forward_real(&self.values);
        let axes = self.grid.axes();
        let out = plan.apply(&spec, |idx| {
            let k2: f64 = (0..axes).map(|a| plan.wavenumber(idx, a).powi(2)).sum();
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-1.0 / (4.0 * std::f64::consts::PI.powi(2) * k2), 0.0)
            }
        });
        Self::from_vec(self.grid, out.into_iter().map(|c| c.re).collect())
    }
}
