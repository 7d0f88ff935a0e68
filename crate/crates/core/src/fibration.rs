//! The projection `f : X → Y` onto the last `m` complex coordinates.
//!
//! Fibers are exact coordinate slices of the total grid (and contiguous in
//! its layout), so restriction, fiber integration and pullback involve no
//! interpolation.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::field::{BaseField, PeriodicScalarField};
use crate::form::{FiberForm, HermitianFormField};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FibrationSpec {
    n: usize,
    m: usize,
    total: GridSpec,
    fiber: GridSpec,
    base: GridSpec,
}

impl FibrationSpec {
    pub fn new(total: GridSpec, m: usize) -> Result<Self> {
        let n = total.dim();
        if m == 0 || m >= n {
            return Err(LabError::InvalidInput(format!(
                "base dimension must satisfy 0 < m < n = {n}, got m = {m}"
            )));
        }
        Ok(Self {
            n,
            m,
            total,
            fiber: GridSpec::new(n - m, total.samples())?,
            base: GridSpec::new(m, total.samples())?,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Complex dimension of the fibers.
    pub fn fiber_dim(&self) -> usize {
        self.n - self.m
    }

    pub fn total(&self) -> GridSpec {
        self.total
    }

    pub fn fiber(&self) -> GridSpec {
        self.fiber
    }

    pub fn base(&self) -> GridSpec {
        self.base
    }

    pub fn fiber_len(&self) -> usize {
        self.fiber.len()
    }

    pub fn base_len(&self) -> usize {
        self.base.len()
    }

    pub fn fiber_range(&self, y: usize) -> Range<usize> {
        let len = self.fiber_len();
        y * len..(y + 1) * len
    }

    /// Base point below a total-space grid index.
    pub fn base_index(&self, idx: usize) -> usize {
        idx / self.fiber_len()
    }

    pub fn pullback(&self, u: &BaseField) -> PeriodicScalarField {
        assert_eq!(u.grid(), self.base, "field is not on the base grid");
        let fl = self.fiber_len();
        let values = u
            .values()
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, fl))
            .collect();
        PeriodicScalarField::from_vec(self.total, values)
    }

    /// `f^*ω_Y`: base block equal to `omega_y`, every other entry zero.
    pub fn pullback_form(&self, omega_y: &HermitianFormField) -> HermitianFormField {
        assert_eq!(omega_y.grid(), self.base, "form is not on the base grid");
        let off = self.fiber_dim();
        let fl = self.fiber_len();
        HermitianFormField::from_upper(self.total, self.n, |idx, j, k| {
            if j >= off && k >= off {
                omega_y.entry(idx / fl, j - off, k - off)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn restrict_scalar(&self, phi: &PeriodicScalarField, y: usize) -> PeriodicScalarField {
        PeriodicScalarField::from_vec(self.fiber, phi.values()[self.fiber_range(y)].to_vec())
    }

    /// Fiber-fiber coefficient block of `omega` on the fiber over `y`.
    pub fn restrict_to_fiber(&self, omega: &HermitianFormField, y: usize) -> FiberForm {
        let d = self.fiber_dim();
        let start = y * self.fiber_len();
        let block = HermitianFormField::from_upper(self.fiber, d, |i, j, k| omega.entry(start + i, j, k));
        if omega.is_metric() {
            block.into_metric().expect("fiber block of a metric is positive")
        } else {
            block
        }
    }

    /// Total-space field from one fiber field per base point.
    pub fn assemble(&self, fibers: &[PeriodicScalarField]) -> PeriodicScalarField {
        assert_eq!(fibers.len(), self.base_len());
        let values = fibers.iter().flat_map(|f| f.values().iter().copied()).collect();
        PeriodicScalarField::from_vec(self.total, values)
    }

    /// Fiber-wise means of a total-space field (flat weights).
    pub fn fiber_means(&self, phi: &PeriodicScalarField) -> BaseField {
        let fl = self.fiber_len();
        let values = phi
            .values()
            .par_chunks(fl)
            .map(|c| c.iter().sum::<f64>() / fl as f64)
            .collect();
        PeriodicScalarField::from_vec(self.base, values)
    }

    /// Density of `ω_y^{n-m}` against fiber Lebesgue measure, on the total grid.
    fn fiber_volume_density(&self, omega_x: &HermitianFormField) -> PeriodicScalarField {
        omega_x.block(0, self.fiber_dim()).volume_density()
    }

    /// `∫_{X_y} ω_y^{n-m}`.
    pub fn fiber_volume(&self, omega_x: &HermitianFormField, y: usize) -> f64 {
        let d = self.fiber_dim();
        let block = omega_x.block(0, d);
        let factor = crate::linalg::factorial(d) * 2f64.powi(d as i32);
        self.fiber_range(y)
            .map(|i| factor * crate::linalg::det(block.at(i), d))
            .sum::<f64>()
            / self.fiber_len() as f64
    }

    pub fn fiber_volumes(&self, omega_x: &HermitianFormField) -> BaseField {
        self.fiber_means(&self.fiber_volume_density(omega_x))
    }

    /// `φ̄(y) = ∫_{X_y} φ ω_y^{n-m} / ∫_{X_y} ω_y^{n-m}`.
    pub fn fiber_average(&self, phi: &PeriodicScalarField, omega_x: &HermitianFormField) -> BaseField {
        let w = self.fiber_volume_density(omega_x);
        let num = self.fiber_means(&phi.mul(&w));
        let den = self.fiber_means(&w);
        num.zip_map(&den, |a, b| a / b)
    }

    /// `ψ = (φ - φ̄)/t`, whose ω_y-weighted fiber averages vanish.
    pub fn fiber_normalized_potential(
        &self,
        phi: &PeriodicScalarField,
        omega_x: &HermitianFormField,
        t: f64,
    ) -> Result<PeriodicScalarField> {
        if !(t > 0.0) {
            return Err(LabError::NonPositiveT(t));
        }
        let avg = self.pullback(&self.fiber_average(phi, omega_x));
        Ok(phi.sub(&avg).scale(1.0 / t))
    }

    /// Fiber integration of a top-degree density (given against total
    /// Lebesgue measure); the result is a density against base Lebesgue
    /// measure.
    pub fn pushforward_volume(&self, density: &PeriodicScalarField) -> BaseField {
        self.fiber_means(density)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::ddbar;
    use std::f64::consts::PI;

    fn fib() -> FibrationSpec {
        FibrationSpec::new(GridSpec::new(2, 16).unwrap(), 1).unwrap()
    }

    #[test]
    fn rejects_bad_base_dimension() {
        let g = GridSpec::new(2, 8).unwrap();
        assert!(FibrationSpec::new(g, 0).is_err());
        assert!(FibrationSpec::new(g, 2).is_err());
    }

    #[test]
    fn fibers_are_coordinate_slices() {
        let f = fib();
        let phi = PeriodicScalarField::from_fn(f.total(), |p| p[0] + 10.0 * p[2] + 100.0 * p[3]).unwrap();
        let y = 37;
        let slice = f.restrict_scalar(&phi, y);
        let yb = f.base().point(y);
        for (i, &v) in slice.values().iter().enumerate() {
            let pf = f.fiber().point(i);
            assert!((v - (pf[0] + 10.0 * yb[0] + 100.0 * yb[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn average_of_pullback_is_identity() {
        let f = fib();
        let u = PeriodicScalarField::from_fn(f.base(), |p| (2.0 * PI * p[0]).sin() + p[1]).unwrap();
        let rho = PeriodicScalarField::from_fn(f.total(), |p| {
            0.02 * (2.0 * PI * p[0]).cos() * (2.0 * PI * p[2]).cos()
        })
        .unwrap();
        let omega_x = HermitianFormField::flat(f.total()).add(&ddbar(&rho)).into_metric().unwrap();
        let back = f.fiber_average(&f.pullback(&u), &omega_x);
        assert!(back.sub(&u).sup_abs() < 1e-13, "{}", back.sub(&u).sup_abs());
    }

    #[test]
    fn average_of_fiber_sine_vanishes() {
        let f = fib();
        let omega_x = HermitianFormField::flat(f.total());
        let phi = PeriodicScalarField::from_fn(f.total(), |p| (2.0 * PI * p[0]).sin()).unwrap();
        assert!(f.fiber_average(&phi, &omega_x).sup_abs() < 1e-15);
        let u = PeriodicScalarField::from_fn(f.base(), |p| (2.0 * PI * p[1]).cos()).unwrap();
        let g = PeriodicScalarField::from_fn(f.total(), |p| {
            (2.0 * PI * p[0]).sin() * (1.0 + (2.0 * PI * p[2]).sin())
        })
        .unwrap();
        let mixed = g.add(&f.pullback(&u));
        assert!(f.fiber_average(&mixed, &omega_x).sub(&u).sup_abs() < 1e-14);
    }

    #[test]
    fn normalized_potential_of_pullback_vanishes() {
        let f = fib();
        let omega_x = HermitianFormField::flat(f.total());
        let u = PeriodicScalarField::from_fn(f.base(), |p| (2.0 * PI * p[0]).sin()).unwrap();
        let psi = f.fiber_normalized_potential(&f.pullback(&u), &omega_x, 0.1).unwrap();
        assert!(psi.sup_abs() < 1e-13, "{}", psi.sup_abs());
        assert!(f.fiber_normalized_potential(&psi, &omega_x, 0.0).is_err());
    }

    #[test]
    fn product_fiber_data() {
        let f = fib();
        let omega_x = HermitianFormField::flat(f.total());
        for y in [0, 100, 255] {
            assert!((f.fiber_volume(&omega_x, y) - 1.0).abs() < 1e-15);
            let block = f.restrict_to_fiber(&omega_x, y);
            assert!(block.coeffs().iter().all(|c| *c == Complex64::new(0.5, 0.0)));
        }
        let scaled = omega_x.scale(3.0);
        assert!((f.fiber_volume(&scaled, 4) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn pushforward_of_product_volume() {
        let f = fib();
        let omega_x = HermitianFormField::flat(f.total());
        let push = f.pushforward_volume(&omega_x.volume_density());
        assert!(push.values().iter().all(|&v| (v - 2.0).abs() < 1e-15));
    }
}
