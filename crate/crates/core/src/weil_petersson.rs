//! The Weil-Petersson pseudonorm `|Ψ_y|² = ∫_{X_y} (Ψ_y ∧ Ψ̄_y)^{1/k}` of a
//! pluricanonical fiber form and its curvature `ω_WP = -i∂∂̄ log|Ψ_y|²`.
//!
//! For a fiber `C^d / Λ` and `Ψ = K·(dz^1∧…∧dz^d)^{⊗k}` the integrand is
//! `|K|^{2/k}` times `i^{d²} dz∧dz̄ = 2^d dV`, so the pseudonorm is
//! `2^d |K|^{2/k} covol(Λ)`; for elliptic fibers `C/(Z + τZ)` this is
//! `2|K|^{2/k} Im τ`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::field::{BaseField, PeriodicScalarField};
use crate::form::{ddbar, HermitianFormField};
use crate::scenario::{AdiabaticFamily, ChartSpec};
use crate::spectral;

/// Pointwise holomorphic fiber data: `Ψ = coefficient·(dz)^{⊗k}` on a fiber
/// whose lattice has covolume `covolume`.
#[derive(Debug, Clone, PartialEq)]
pub struct PluricanonicalSample {
    pub k: u32,
    /// Complex fiber dimension.
    pub fiber_dim: usize,
    pub coefficient: Vec<Complex64>,
    pub covolume: Vec<f64>,
}

impl PluricanonicalSample {
    /// Elliptic fibers `C/(Z + τZ)`.
    pub fn elliptic(k: u32, coefficient: Vec<Complex64>, tau: &[Complex64]) -> Result<Self> {
        if let Some(i) = tau.iter().position(|t| !(t.im > 0.0)) {
            return Err(LabError::InvalidInput(format!("Im τ must be positive (sample {i})")));
        }
        Self::new(k, 1, coefficient, tau.iter().map(|t| t.im).collect())
    }

    pub fn new(k: u32, fiber_dim: usize, coefficient: Vec<Complex64>, covolume: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(LabError::InvalidInput("pluricanonical power must be at least 1".into()));
        }
        if coefficient.len() != covolume.len() {
            return Err(LabError::InvalidInput("coefficient and modulus samples differ in length".into()));
        }
        if coefficient.iter().any(|c| c.norm() == 0.0) {
            return Err(LabError::InvalidInput("pluricanonical form vanishes".into()));
        }
        Ok(Self {
            k,
            fiber_dim,
            coefficient,
            covolume,
        })
    }
}

pub fn wp_pseudonorm(sample: &PluricanonicalSample) -> Vec<f64> {
    let scale = 2f64.powi(sample.fiber_dim as i32);
    let power = 1.0 / sample.k as f64;
    sample
        .coefficient
        .iter()
        .zip(&sample.covolume)
        .map(|(c, v)| scale * c.norm_sqr().powf(power) * v)
        .collect()
}

/// `ω_WP = -i∂∂̄ log P` for a pseudonorm field on a periodic base.
pub fn wp_metric(pseudonorm: &BaseField) -> Result<HermitianFormField> {
    if let Some(index) = pseudonorm.values().iter().position(|&p| !(p > 0.0)) {
        return Err(LabError::InvalidInput(format!(
            "pseudonorm is not positive at base index {index}"
        )));
    }
    Ok(ddbar(&pseudonorm.map(f64::ln)).scale(-1.0))
}

/// Sup over the base of `|∂̄K|`, computed spectrally.
pub fn periodic_holomorphicity_defect(grid: crate::grid::GridSpec, coefficient: &[Complex64]) -> f64 {
    let plan = spectral::plan(grid);
    let mut defect = 0.0f64;
    for j in 0..grid.dim() {
        let mut buf = coefficient.to_vec();
        plan.forward(&mut buf);
        buf.iter_mut().enumerate().for_each(|(idx, c)| *c *= plan.dzbar(idx, j));
        plan.inverse(&mut buf);
        defect = buf.iter().fold(defect, |m, c| m.max(c.norm()));
    }
    defect
}

#[derive(Debug, Clone)]
pub struct WpCertificate {
    /// The zero form on the base.
    pub form: HermitianFormField,
    pub pseudonorm: BaseField,
    /// `max - min` of the pseudonorm over the base.
    pub variation: f64,
    /// `|∂̄K|` over the base.
    pub holomorphicity_defect: f64,
    pub passed: bool,
}

/// Isotrivial families: every fiber is `C^d/(Z^d + iZ^d)` with `Ψ = dz`, so
/// the pseudonorm is constant and `ω_WP = 0`. The certificate records the
/// measured variation.
pub fn wp_product_case(family: &AdiabaticFamily) -> WpCertificate {
    let fib = family.fibration();
    let base = fib.base();
    let coefficient = vec![Complex64::new(1.0, 0.0); base.len()];
    let sample = PluricanonicalSample::new(1, fib.fiber_dim(), coefficient, vec![1.0; base.len()])
        .expect("unit data is valid");
    let pseudonorm = PeriodicScalarField::new(base, wp_pseudonorm(&sample)).expect("finite pseudonorm");
    let variation = pseudonorm.oscillation();
    let holomorphicity_defect = periodic_holomorphicity_defect(base, &sample.coefficient);
    let form = wp_metric(&pseudonorm).expect("positive pseudonorm");
    WpCertificate {
        passed: variation <= 1e-10 && form.sup_abs() == 0.0 && holomorphicity_defect <= 1e-8,
        form,
        pseudonorm,
        variation,
        holomorphicity_defect,
    }
}

/// Non-periodic chart `w = u + iv ∈ [-1/2, 1/2]²` sampled at
/// `(resolution + 1)²` points including the boundary, so `w = 0` is a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModuliChart {
    pub tau0: Complex64,
    pub epsilon: Complex64,
    pub resolution: usize,
    pub k: u32,
}

/// Points kept clear of the boundary by the centered fourth-order stencil.
const STENCIL_REACH: usize = 2;

impl ModuliChart {
    pub fn new(tau0: Complex64, epsilon: Complex64, resolution: usize, k: u32) -> Result<Self> {
        if resolution < 8 || !resolution.is_multiple_of(2) {
            return Err(LabError::InvalidInput("chart resolution must be even and at least 8".into()));
        }
        let chart = Self {
            tau0,
            epsilon,
            resolution,
            k,
        };
        let worst = (0..chart.len()).map(|i| chart.tau(chart.point(i)).im).fold(f64::INFINITY, f64::min);
        if !(worst > 0.0) {
            return Err(LabError::InvalidInput("Im τ must stay positive on the chart".into()));
        }
        Ok(chart)
    }

    pub fn from_spec(spec: &ChartSpec) -> Result<Self> {
        Self::new(
            Complex64::new(spec.tau0[0], spec.tau0[1]),
            Complex64::new(spec.epsilon[0], spec.epsilon[1]),
            spec.resolution,
            spec.k,
        )
    }

    pub fn side(&self) -> usize {
        self.resolution + 1
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    /// Node `(a, b)` stored at `a + side·b`, `u` fastest.
    pub fn point(&self, index: usize) -> Complex64 {
        let (a, b) = (index % self.side(), index / self.side());
        Complex64::new(-0.5 + a as f64 * self.step(), -0.5 + b as f64 * self.step())
    }

    pub fn index_of_origin(&self) -> usize {
        let c = self.resolution / 2;
        c + self.side() * c
    }

    pub fn tau(&self, w: Complex64) -> Complex64 {
        self.tau0 + self.epsilon * w
    }

    fn is_interior(&self, index: usize) -> bool {
        let (a, b) = (index % self.side(), index / self.side());
        let hi = self.resolution - STENCIL_REACH;
        (STENCIL_REACH..=hi).contains(&a) && (STENCIL_REACH..=hi).contains(&b)
    }

    /// Sample `Ψ = gauge(w)·(dz)^{⊗k}` over the chart.
    pub fn sample<G: Fn(Complex64) -> Complex64>(&self, gauge: G) -> Result<PluricanonicalSample> {
        let taus: Vec<Complex64> = (0..self.len()).map(|i| self.tau(self.point(i))).collect();
        let coeffs = (0..self.len()).map(|i| gauge(self.point(i))).collect();
        PluricanonicalSample::elliptic(self.k, coeffs, &taus)
    }

    /// Fourth-order centered second derivative along `u` (`axis = 0`) or `v`.
    fn second(&self, values: &[f64], index: usize, axis: usize) -> f64 {
        let s = if axis == 0 { 1 } else { self.side() };
        let h = self.step();
        (-values[index + 2 * s] + 16.0 * values[index + s] - 30.0 * values[index] + 16.0 * values[index - s]
            - values[index - 2 * s])
            / (12.0 * h * h)
    }

    fn first(&self, values: &[Complex64], index: usize, axis: usize) -> Complex64 {
        let s = if axis == 0 { 1 } else { self.side() };
        let h = self.step();
        (-values[index + 2 * s] + values[index + s] * 8.0 - values[index - s] * 8.0 + values[index - 2 * s])
            / (12.0 * h)
    }
}

/// Coefficient `h_{ww̄}` of `ω_WP` on the interior of a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartForm {
    chart: ModuliChart,
    /// `(index, value)` for interior nodes in index order.
    pub values: Vec<(usize, f64)>,
}

impl ChartForm {
    pub fn at(&self, index: usize) -> Option<f64> {
        self.values
            .binary_search_by_key(&index, |&(i, _)| i)
            .ok()
            .map(|p| self.values[p].1)
    }

    pub fn chart(&self) -> &ModuliChart {
        &self.chart
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &(_, v)| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min)
    }

    /// Sup of `|self - other|` over shared interior nodes.
    pub fn distance(&self, other: &ChartForm) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a.1 - b.1).abs()))
    }
}

/// `-∂_w∂_w̄ log P = -¼Δ log P` by fourth-order differences.
pub fn wp_metric_chart(chart: &ModuliChart, pseudonorm: &[f64]) -> Result<ChartForm> {
    if pseudonorm.len() != chart.len() {
        return Err(LabError::InvalidInput("pseudonorm does not match the chart".into()));
    }
    if let Some(index) = pseudonorm.iter().position(|&p| !(p > 0.0)) {
        return Err(LabError::InvalidInput(format!("pseudonorm is not positive at chart node {index}")));
    }
    let logs: Vec<f64> = pseudonorm.iter().map(|p| p.ln()).collect();
    let values = (0..chart.len())
        .into_par_iter()
        .filter(|&i| chart.is_interior(i))
        .map(|i| (i, -0.25 * (chart.second(&logs, i, 0) + chart.second(&logs, i, 1))))
        .collect();
    Ok(ChartForm { chart: *chart, values })
}

/// `∂_w∂_w̄ log Im τ = -|ε|² / (4 (Im τ)²)` for linear `τ`, i.e. the
/// coefficient of `i∂∂̄ log Im τ`.
pub fn ddbar_log_im_tau(chart: &ModuliChart) -> ChartForm {
    let e2 = chart.epsilon.norm_sqr();
    let values = (0..chart.len())
        .filter(|&i| chart.is_interior(i))
        .map(|i| {
            let im = chart.tau(chart.point(i)).im;
            (i, -e2 / (4.0 * im * im))
        })
        .collect();
    ChartForm { chart: *chart, values }
}

/// Sup over interior nodes of `|∂̄K| = ½|K_u + iK_v|`.
pub fn chart_holomorphicity_defect(chart: &ModuliChart, coefficient: &[Complex64]) -> f64 {
    (0..chart.len())
        .filter(|&i| chart.is_interior(i))
        .map(|i| {
            let du = chart.first(coefficient, i, 0);
            let dv = chart.first(coefficient, i, 1);
            0.5 * (du + Complex64::i() * dv).norm()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct ChartCheck {
    pub chart: ModuliChart,
    /// `‖ω_WP + i∂∂̄ log Im τ‖∞` on the interior.
    pub closed_form_error: f64,
    /// `h_{ww̄}` at `w = 0`.
    pub value_at_origin: f64,
    /// `‖ω_WP(e^w Ψ) - ω_WP(Ψ)‖∞`.
    pub gauge_difference: f64,
    pub min_eigenvalue: f64,
    pub holomorphicity_defect: f64,
}

/// The chart checks: closed form, value at the origin, holomorphic gauge
/// invariance, nonnegativity and holomorphicity of the gauge.
pub fn chart_check(chart: &ModuliChart) -> Result<ChartCheck> {
    let plain = chart.sample(|_| Complex64::new(1.0, 0.0))?;
    let gauged = chart.sample(|w| w.exp())?;
    let wp = wp_metric_chart(chart, &wp_pseudonorm(&plain))?;
    let wp_gauged = wp_metric_chart(chart, &wp_pseudonorm(&gauged))?;
    let exact = ddbar_log_im_tau(chart);
    let closed_form_error = wp
        .values
        .iter()
        .zip(&exact.values)
        .fold(0.0f64, |m, (a, b)| m.max((a.1 + b.1).abs()));
    Ok(ChartCheck {
        chart: *chart,
        closed_form_error,
        value_at_origin: wp.at(chart.index_of_origin()).expect("origin is interior"),
        gauge_difference: wp.distance(&wp_gauged),
        min_eigenvalue: wp.min(),
        holomorphicity_defect: chart_holomorphicity_defect(chart, &gauged.coefficient),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn chart(eps: f64) -> ModuliChart {
        ModuliChart::new(Complex64::new(0.0, 1.0), Complex64::new(eps, 0.0), 64, 1).unwrap()
    }

    #[test]
    fn pseudonorm_examples() {
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let s = PluricanonicalSample::elliptic(1, vec![one], &[i]).unwrap();
        assert!((wp_pseudonorm(&s)[0] - 2.0).abs() < 1e-15);
        let tau = Complex64::new(0.3, 1.7);
        let s2 = PluricanonicalSample::elliptic(2, vec![one], &[tau]).unwrap();
        assert!((wp_pseudonorm(&s2)[0] - 3.4).abs() < 1e-14);
        let g = Complex64::new(0.6, -0.8) * 3.0;
        let s3 = PluricanonicalSample::elliptic(3, vec![g], &[tau]).unwrap();
        let expected = 3.4 * 9f64.powf(1.0 / 3.0);
        assert!((wp_pseudonorm(&s3)[0] - expected).abs() < 1e-13);
        assert!(PluricanonicalSample::elliptic(1, vec![one], &[Complex64::new(0.0, -1.0)]).is_err());
    }

    #[test]
    fn constant_modulus_gives_zero() {
        let g = GridSpec::new(1, 8).unwrap();
        let p = PeriodicScalarField::constant(g, 2.0);
        assert_eq!(wp_metric(&p).unwrap().sup_abs(), 0.0);
        assert!(wp_metric(&PeriodicScalarField::constant(g, 0.0)).is_err());
        let flat_chart = chart(0.0);
        let check = chart_check(&flat_chart).unwrap();
        assert!(check.value_at_origin.abs() < 1e-10);
    }

    #[test]
    fn elliptic_chart_matches_closed_form() {
        let check = chart_check(&chart(0.2)).unwrap();
        assert!(check.closed_form_error <= 1e-6, "{}", check.closed_form_error);
        assert!((check.value_at_origin - 0.01).abs() <= 1e-8);
        assert!(check.gauge_difference <= 1e-10, "{}", check.gauge_difference);
        assert!(check.min_eigenvalue >= -1e-8);
        assert!(check.holomorphicity_defect <= 1e-8, "{}", check.holomorphicity_defect);
    }

    #[test]
    fn periodic_gauge_by_holomorphic_function_is_invisible() {
        // |e^{2πi z}|² = e^{-4πy} has log linear in y, so i∂∂̄ of it vanishes spectrally
        // only up to periodicity; use the constant-modulus periodic case instead.
        let g = GridSpec::new(1, 16).unwrap();
        let coefficient = vec![Complex64::new(2.0, 1.0); g.len()];
        assert!(periodic_holomorphicity_defect(g, &coefficient) < 1e-12);
        let nonholo: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let p = g.point(i);
                Complex64::new((2.0 * std::f64::consts::PI * p[0]).cos(), 0.0)
            })
            .collect();
        assert!(periodic_holomorphicity_defect(g, &nonholo) > 1.0);
    }
}
