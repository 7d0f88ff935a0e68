//! Real (1,1)-forms `ω = i Σ h_{jk̄} dz^j ∧ dz̄^k` stored by their Hermitian
//! coefficient matrices, and the pointwise multilinear algebra built on them.
//!
//! The flat unit form has `h = I/2`, so each coordinate 2-torus has area one
//! and `ω^n = n!·det(h)·2^n` times Lebesgue measure.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::field::PeriodicScalarField;
use crate::grid::GridSpec;
use crate::linalg;
use crate::spectral;

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianFormField {
    grid: GridSpec,
    dim: usize,
    coeffs: Vec<Complex64>,
    metric: bool,
}

/// Fiber forms are Hermitian form fields on a fiber grid.
pub type FiberForm = HermitianFormField;

impl HermitianFormField {
    /// Build from the upper triangle produced by `upper(index, j, k)` for
    /// `j <= k`; the lower triangle is filled by conjugation and diagonal
    /// entries are made real.
    pub fn from_upper<F>(grid: GridSpec, dim: usize, upper: F) -> Self
    where
        F: Fn(usize, usize, usize) -> Complex64 + Sync,
    {
        let d2 = dim * dim;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len() * d2];
        coeffs.par_chunks_mut(d2).enumerate().for_each(|(idx, m)| {
            for j in 0..dim {
                m[j * dim + j] = Complex64::new(upper(idx, j, j).re, 0.0);
                for k in j + 1..dim {
                    let v = upper(idx, j, k);
                    m[j * dim + k] = v;
                    m[k * dim + j] = v.conj();
                }
            }
        });
        Self {
            grid,
            dim,
            coeffs,
            metric: false,
        }
    }

    /// Constant coefficients; `matrix` is row-major and must be Hermitian.
    pub fn constant(grid: GridSpec, matrix: &[Complex64]) -> Result<Self> {
        let dim = (matrix.len() as f64).sqrt().round() as usize;
        if dim * dim != matrix.len() || dim == 0 {
            return Err(LabError::InvalidInput("coefficient matrix is not square".into()));
        }
        for j in 0..dim {
            for k in 0..dim {
                if matrix[j * dim + k] != matrix[k * dim + j].conj() {
                    return Err(LabError::InvalidInput("coefficient matrix is not Hermitian".into()));
                }
            }
        }
        Ok(Self::from_upper(grid, dim, |_, j, k| matrix[j * dim + k]))
    }

    pub fn diagonal(grid: GridSpec, diag: &[f64]) -> Self {
        Self::from_upper(grid, diag.len(), |_, j, k| {
            if j == k {
                Complex64::new(diag[j], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// The flat unit form `h = I/2` on a grid of matching dimension.
    pub fn flat(grid: GridSpec) -> Self {
        Self::diagonal(grid, &vec![0.5; grid.dim()])
            .into_metric()
            .expect("flat form is positive")
    }

    pub fn zeros(grid: GridSpec, dim: usize) -> Self {
        Self::diagonal(grid, &vec![0.0; dim])
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_metric(&self) -> bool {
        self.metric
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient matrix at grid index `idx`.
    pub fn at(&self, idx: usize) -> &[Complex64] {
        let d2 = self.dim * self.dim;
        &self.coeffs[idx * d2..(idx + 1) * d2]
    }

    pub fn entry(&self, idx: usize, j: usize, k: usize) -> Complex64 {
        self.at(idx)[j * self.dim + k]
    }

    /// Check positivity everywhere and mark the form as a metric.
    pub fn into_metric(mut self) -> Result<Self> {
        let d = self.dim;
        let bad = self
            .coeffs
            .par_chunks(d * d)
            .position_first(|m| !linalg::is_positive_definite(m, d));
        if let Some(index) = bad {
            let min_eigenvalue = linalg::min_eigenvalue(self.at(index), d);
            return Err(LabError::Positivity {
                min_eigenvalue,
                index,
                point: self.grid.point(index),
            });
        }
        self.metric = true;
        Ok(self)
    }

    /// Drop the metric flag (for forms used as plain (1,1)-forms).
    pub fn as_form(mut self) -> Self {
        self.metric = false;
        self
    }

    fn combine<F>(&self, other: &Self, f: F) -> Self
    where
        F: Fn(Complex64, Complex64) -> Complex64 + Sync,
    {
        assert_eq!(self.grid, other.grid, "forms live on different grids");
        assert_eq!(self.dim, other.dim, "forms have different dimensions");
        Self {
            grid: self.grid,
            dim: self.dim,
            coeffs: self
                .coeffs
                .par_iter()
                .zip(other.coeffs.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
            metric: false,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            dim: self.dim,
            coeffs: self.coeffs.par_iter().map(|&a| a * s).collect(),
            metric: self.metric && s > 0.0,
        }
    }

    /// Largest coefficient modulus over the grid.
    pub fn sup_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Sub-block on coordinates `start..start+len`, same grid.
    pub fn block(&self, start: usize, len: usize) -> Self {
        let d = self.dim;
        Self {
            grid: self.grid,
            dim: len,
            coeffs: self
                .coeffs
                .par_chunks(d * d)
                .flat_map_iter(|m| {
                    (0..len).flat_map(move |j| (0..len).map(move |k| m[(start + j) * d + start + k]))
                })
                .collect(),
            metric: self.metric,
        }
    }

    /// Pointwise determinant of the coefficient matrix.
    pub fn determinant(&self) -> PeriodicScalarField {
        let d = self.dim;
        PeriodicScalarField::from_vec(
            self.grid,
            self.coeffs.par_chunks(d * d).map(|m| linalg::det(m, d)).collect(),
        )
    }

    /// Coefficient of `ω^d` against Lebesgue measure: `d!·2^d·det(h)`.
    pub fn volume_density(&self) -> PeriodicScalarField {
        let factor = linalg::factorial(self.dim) * 2f64.powi(self.dim as i32);
        self.determinant().scale(factor)
    }

    /// Pointwise inverse matrices (the metric must be nonsingular).
    pub fn inverse_coeffs(&self) -> Vec<Complex64> {
        let d = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        out.par_chunks_mut(d * d)
            .zip(self.coeffs.par_chunks(d * d))
            .for_each(|(o, m)| linalg::inverse(m, d, o));
        out
    }

    /// Periodic shift of every coefficient field (see `PeriodicScalarField::shifted`).
    pub fn shifted(&self, axis: usize, steps: isize) -> Self {
        let d2 = self.dim * self.dim;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        for idx in 0..self.grid.len() {
            let to = self.grid.shifted(idx, axis, steps);
            coeffs[to * d2..(to + 1) * d2].copy_from_slice(self.at(idx));
        }
        Self {
            grid: self.grid,
            dim: self.dim,
            coeffs,
            metric: self.metric,
        }
    }
}

/// `i∂∂̄φ`, computed spectrally: `h_{jk̄} = ∂²φ/∂z^j∂z̄^k`.
pub fn ddbar(phi: &PeriodicScalarField) -> HermitianFormField {
    let grid = phi.grid();
    let plan = spectral::plan(grid);
    let spec = phi.spectrum();
    ddbar_from_spectrum(&plan, &spec)
}

pub(crate) fn ddbar_from_spectrum(
    plan: &spectral::SpectralPlan,
    spec: &[Complex64],
) -> HermitianFormField {
    let grid = plan.grid();
    let dim = grid.dim();
    let mut fields = vec![Vec::new(); dim * dim];
    for j in 0..dim {
        for k in j..dim {
            fields[j * dim + k] = plan.apply(spec, |idx| plan.dz(idx, j) * plan.dzbar(idx, k));
        }
    }
    HermitianFormField::from_upper(grid, dim, |idx, j, k| fields[j * dim + k][idx])
}

/// Pointwise ratio `ω^n / η^n = det(h_ω) / det(h_η)`.
pub fn top_ratio(omega: &HermitianFormField, eta: &HermitianFormField) -> Result<PeriodicScalarField> {
    if !eta.is_metric() {
        return Err(LabError::NotMetric);
    }
    Ok(omega.determinant().zip_map(&eta.determinant(), |a, b| a / b))
}

/// Pointwise trace `tr_g η = g^{jk̄} η_{jk̄}`.
pub fn trace_pair(g: &HermitianFormField, eta: &HermitianFormField) -> Result<PeriodicScalarField> {
    if !g.is_metric() {
        return Err(LabError::NotMetric);
    }
    let d = g.dim();
    let inv = g.inverse_coeffs();
    Ok(PeriodicScalarField::from_vec(
        g.grid(),
        inv.par_chunks(d * d)
            .zip(eta.coeffs.par_chunks(d * d))
            .map(|(gi, e)| linalg::trace_product(gi, e, d))
            .collect(),
    ))
}

/// `∫ φ · vol^n`, by uniform quadrature.
pub fn integrate(phi: &PeriodicScalarField, vol: &HermitianFormField) -> Result<f64> {
    if !vol.is_metric() {
        return Err(LabError::NotMetric);
    }
    Ok(phi.mul(&vol.volume_density()).mean())
}

/// Pointwise smallest eigenvalue of the coefficient matrix.
pub fn min_eigenvalue(omega: &HermitianFormField) -> PeriodicScalarField {
    let d = omega.dim();
    PeriodicScalarField::from_vec(
        omega.grid(),
        omega
            .coeffs
            .par_chunks(d * d)
            .map(|m| linalg::min_eigenvalue(m, d))
            .collect(),
    )
}

/// Pointwise extreme generalized eigenvalues of `a` relative to metric `b`.
pub fn generalized_eigen_range(a: &HermitianFormField, b: &HermitianFormField) -> (f64, f64) {
    let d = a.dim();
    a.coeffs
        .par_chunks(d * d)
        .zip(b.coeffs.par_chunks(d * d))
        .map(|(x, y)| {
            let ev = linalg::generalized_eigenvalues(x, y, d);
            (ev[0], ev[d - 1])
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a), hi.max(b))
        })
}

/// The Ricci form `-i∂∂̄ log det h` of a metric.
pub fn ricci_form(omega: &HermitianFormField) -> HermitianFormField {
    ddbar(&omega.determinant().map(f64::ln)).scale(-1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid2() -> GridSpec {
        GridSpec::new(2, 16).unwrap()
    }

    #[test]
    fn ddbar_of_constant_vanishes() {
        let phi = PeriodicScalarField::constant(grid2(), 3.5);
        assert_eq!(ddbar(&phi).sup_abs(), 0.0);
    }

    #[test]
    fn ddbar_of_cosine() {
        let g = grid2();
        let phi = PeriodicScalarField::from_fn(g, |p| (2.0 * PI * p[0]).cos()).unwrap();
        let h = ddbar(&phi);
        for idx in 0..g.len() {
            let x = g.point(idx)[0];
            let expected = -PI * PI * (2.0 * PI * x).cos();
            assert!((h.entry(idx, 0, 0).re - expected).abs() < 1e-11);
            assert!(h.entry(idx, 0, 1).norm() < 1e-11);
            assert!(h.entry(idx, 1, 1).norm() < 1e-11);
        }
    }

    #[test]
    fn ddbar_of_base_function_has_no_fiber_part() {
        let g = grid2();
        let phi = PeriodicScalarField::from_fn(g, |p| (2.0 * PI * p[2]).sin() * (2.0 * PI * p[3]).cos())
            .unwrap();
        let h = ddbar(&phi);
        for idx in 0..g.len() {
            assert!(h.entry(idx, 0, 0).norm() < 1e-12);
            assert!(h.entry(idx, 0, 1).norm() < 1e-12);
        }
        assert!(h.sup_abs() > 1.0);
    }

    #[test]
    fn ddbar_matches_finite_differences() {
        // Fourth-order central differences on a fine 1-D slice, using the
        // real-coordinate formula h = ¼(φ_xx + φ_yy) + i/4(φ_xy' - φ_yx').
        let g = grid2();
        let f = |x1: f64, y1: f64, x2: f64, y2: f64| {
            0.3 * (2.0 * PI * (x1 + x2)).cos() + 0.2 * (2.0 * PI * (y1 - 2.0 * x2 + y2)).sin()
        };
        let phi = PeriodicScalarField::from_fn(g, |p| f(p[0], p[1], p[2], p[3])).unwrap();
        let h = ddbar(&phi);
        let e = 1e-3;
        let d2 = |p: [f64; 4], a: usize, b: usize| {
            let at = |sa: f64, sb: f64| {
                let mut q = p;
                q[a] += sa;
                q[b] += sb;
                f(q[0], q[1], q[2], q[3])
            };
            // Mixed second derivative from a 4th-order 2-D stencil.
            let w = [(1.0, 8.0), (2.0, -1.0)];
            let mut s = 0.0;
            for &(i, wi) in &w {
                for &(j, wj) in &w {
                    s += wi * wj
                        * (at(i * e, j * e) - at(i * e, -j * e) - at(-i * e, j * e) + at(-i * e, -j * e));
                }
            }
            s / (144.0 * e * e)
        };
        for idx in [0usize, 77, 1234, 50000] {
            let p = g.point(idx);
            let p = [p[0], p[1], p[2], p[3]];
            let re = 0.25 * (d2(p, 0, 2) + d2(p, 1, 3));
            let im = 0.25 * (d2(p, 0, 3) - d2(p, 1, 2));
            let h12 = h.entry(idx, 0, 1);
            assert!((h12.re - re).abs() < 1e-6, "{} vs {}", h12.re, re);
            assert!((h12.im - im).abs() < 1e-6, "{} vs {}", h12.im, im);
        }
    }

    #[test]
    fn top_ratio_examples() {
        let g = grid2();
        let flat = HermitianFormField::flat(g);
        let r = top_ratio(&flat, &flat).unwrap();
        assert!(r.values().iter().all(|&v| v == 1.0));
        let w = HermitianFormField::diagonal(g, &[1.0, 2.0]);
        let r = top_ratio(&w, &flat).unwrap();
        assert!(r.values().iter().all(|&v| (v - 8.0).abs() < 1e-14));
        assert_eq!(top_ratio(&flat, &w).unwrap_err(), LabError::NotMetric);
    }

    #[test]
    fn trace_pair_examples() {
        let g = grid2();
        let id = HermitianFormField::diagonal(g, &[1.0, 1.0]).into_metric().unwrap();
        let eta = HermitianFormField::diagonal(g, &[2.0, 3.0]);
        assert!(trace_pair(&id, &eta).unwrap().values().iter().all(|&v| v == 5.0));
        let flat = HermitianFormField::flat(g);
        assert!(trace_pair(&flat, &flat).unwrap().values().iter().all(|&v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn integrate_examples() {
        let g = grid2();
        let flat = HermitianFormField::flat(g);
        let one = PeriodicScalarField::constant(g, 1.0);
        assert!((integrate(&one, &flat).unwrap() - 2.0).abs() < 1e-14);
        let cosine = PeriodicScalarField::from_fn(g, |p| (2.0 * PI * p[0]).cos()).unwrap();
        assert!(integrate(&cosine, &flat).unwrap().abs() < 1e-14);
        let sq = cosine.map(|v| v * v);
        assert!((integrate(&sq, &flat).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn min_eigenvalue_examples() {
        let g = GridSpec::new(1, 8).unwrap();
        let g2 = GridSpec::new(2, 8).unwrap();
        let id = HermitianFormField::diagonal(g, &[1.0]);
        assert!(min_eigenvalue(&id).values().iter().all(|&v| v == 1.0));
        let d = HermitianFormField::diagonal(g2, &[0.5, 2.0]);
        assert!(min_eigenvalue(&d).values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn positivity_error_reports_location() {
        let g = GridSpec::new(1, 8).unwrap();
        let phi = PeriodicScalarField::from_fn(g, |p| 10.0 * (2.0 * PI * p[0]).cos()).unwrap();
        let form = HermitianFormField::flat(g).add(&ddbar(&phi));
        match form.into_metric() {
            Err(LabError::Positivity { min_eigenvalue, point, .. }) => {
                assert!(min_eigenvalue < 0.0);
                assert_eq!(point.len(), 2);
            }
            other => panic!("expected positivity error, got {other:?}"),
        }
    }
}
