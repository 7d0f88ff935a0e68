//! Declarative scenarios and the adiabatic family
//! `ω_t = ω_0 + t·ω_X`, `(ω_t + i∂∂̄φ_t)^n = a_t e^E ω_X^n`.
//!
//! `ω_X = flat + i∂∂̄ρ` on the total torus and `ω_0 = f^*ω_Y` with
//! `ω_Y = flat + i∂∂̄v` on the base. Both perturbations are finite Fourier
//! sums, so every Ricci-flat representative is the constant-coefficient form
//! in its class and the potentials are known in closed form.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fibration::FibrationSpec;
use crate::field::{BaseField, PeriodicScalarField};
use crate::form::{ddbar, min_eigenvalue, HermitianFormField};
use crate::grid::GridSpec;
use crate::linalg;

/// Smallest eigenvalue a scenario's `ω_X` or `ω_Y` may reach anywhere.
pub const POSITIVITY_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    #[default]
    Cos,
    Sin,
}

/// One Fourier term `amplitude · cos(2π k·x)` (or `sin`), with `k` indexed
/// by real axes `x_1, y_1, ..., x_n, y_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub k: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub kind: ModeKind,
}

impl Mode {
    fn eval(&self, x: &[f64]) -> f64 {
        let phase: f64 = self.k.iter().zip(x).map(|(&k, &x)| k as f64 * x).sum::<f64>() * 2.0 * PI;
        match self.kind {
            ModeKind::Cos => self.amplitude * phase.cos(),
            ModeKind::Sin => self.amplitude * phase.sin(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub residual_tol: Option<f64>,
    pub max_iter: Option<usize>,
}

/// Local elliptic moduli chart `τ(w) = tau0 + epsilon·w` over
/// `w ∈ [-1/2, 1/2]²`, with complex numbers written as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub tau0: [f64; 2],
    pub epsilon: [f64; 2],
    #[serde(default = "default_chart_resolution")]
    pub resolution: usize,
    #[serde(default = "default_power")]
    pub k: u32,
}

fn default_chart_resolution() -> usize {
    64
}

fn default_power() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub label: String,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default)]
    pub rho_modes: Vec<Mode>,
    #[serde(default)]
    pub v_modes: Vec<Mode>,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wp_chart: Option<ChartSpec>,
}

impl ScenarioSpec {
    /// The unperturbed product `T^{n-m} × T^m`.
    pub fn product(n: usize, m: usize) -> Self {
        Self {
            label: "product".into(),
            n,
            m,
            samples: None,
            rho_modes: Vec::new(),
            v_modes: Vec::new(),
            solver: SolverOverrides::default(),
            wp_chart: None,
        }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = Some(samples);
        self
    }

    pub fn with_rho(mut self, mode: Mode) -> Self {
        self.rho_modes.push(mode);
        self
    }

    pub fn with_v(mut self, mode: Mode) -> Self {
        self.v_modes.push(mode);
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.into();
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| LabError::InvalidInput(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Samples per axis, defaulting to 16 for n = 2 and 8 for n = 3.
    pub fn resolved_samples(&self) -> usize {
        self.samples.unwrap_or(if self.n == 2 { 16 } else { 8 })
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.resolved_samples())
    }

    /// Structural checks; positivity is checked by [`build_family`].
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n) {
            return Err(LabError::InvalidInput(format!("n must be 2 or 3, got {}", self.n)));
        }
        if self.m == 0 || self.m >= self.n {
            return Err(LabError::InvalidInput(format!(
                "m must satisfy 0 < m < n, got m = {}",
                self.m
            )));
        }
        self.grid()?;
        let axes = 2 * self.n;
        let fiber_axes = 2 * (self.n - self.m);
        for (name, modes) in [("rho_modes", &self.rho_modes), ("v_modes", &self.v_modes)] {
            for (i, mode) in modes.iter().enumerate() {
                if mode.k.len() != axes {
                    return Err(LabError::InvalidInput(format!(
                        "{name}[{i}]: wave vector needs {axes} integers, got {}",
                        mode.k.len()
                    )));
                }
                if !mode.amplitude.is_finite() {
                    return Err(LabError::InvalidInput(format!("{name}[{i}]: amplitude is not finite")));
                }
                let nyquist = self.resolved_samples() as i64 / 2;
                if mode.k.iter().any(|k| k.abs() >= nyquist) {
                    return Err(LabError::InvalidInput(format!(
                        "{name}[{i}]: wave vector {:?} is not resolved by N = {}",
                        mode.k,
                        self.resolved_samples()
                    )));
                }
            }
        }
        for (i, mode) in self.v_modes.iter().enumerate() {
            if mode.k[..fiber_axes].iter().any(|&k| k != 0) {
                return Err(LabError::InvalidInput(format!(
                    "v_modes[{i}]: base potential may not depend on fiber coordinates"
                )));
            }
        }
        if let Some(tol) = self.solver.residual_tol {
            if !(tol > 0.0) {
                return Err(LabError::InvalidInput("solver.residual_tol must be positive".into()));
            }
        }
        if self.solver.max_iter == Some(0) {
            return Err(LabError::InvalidInput("solver.max_iter must be at least 1".into()));
        }
        if let Some(chart) = &self.wp_chart {
            if chart.k == 0 {
                return Err(LabError::InvalidInput("wp_chart.k must be at least 1".into()));
            }
            if chart.resolution < 8 || chart.resolution % 2 != 0 {
                return Err(LabError::InvalidInput(
                    "wp_chart.resolution must be even and at least 8".into(),
                ));
            }
            let worst = chart.tau0[1] - 0.5 * (chart.epsilon[0].abs() + chart.epsilon[1].abs());
            if !(worst > 0.0) {
                return Err(LabError::InvalidInput(
                    "wp_chart: Im τ must stay positive on the chart".into(),
                ));
            }
        }
        Ok(())
    }

    /// `ρ` on the total grid.
    pub fn rho_field(&self) -> Result<PeriodicScalarField> {
        let modes = self.rho_modes.clone();
        PeriodicScalarField::from_fn(self.grid()?, move |x| modes.iter().map(|m| m.eval(x)).sum())
    }

    /// `v` on the base grid (only the base components of each wave vector).
    pub fn v_field(&self) -> Result<BaseField> {
        let off = 2 * (self.n - self.m);
        let modes = self.v_modes.clone();
        let base = GridSpec::new(self.m, self.resolved_samples())?;
        PeriodicScalarField::from_fn(base, move |y| {
            modes
                .iter()
                .map(|m| {
                    Mode {
                        k: m.k[off..].to_vec(),
                        amplitude: m.amplitude,
                        kind: m.kind,
                    }
                    .eval(y)
                })
                .sum()
        })
    }
}

/// `H = ω_0^m ∧ ω_X^{n-m} / ω_X^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianDensity {
    pub h: PeriodicScalarField,
}

#[derive(Debug, Clone)]
pub struct AdiabaticFamily {
    spec: ScenarioSpec,
    fibration: FibrationSpec,
    omega_x: HermitianFormField,
    omega_y: HermitianFormField,
    omega_0: HermitianFormField,
    e: PeriodicScalarField,
    rho: PeriodicScalarField,
    v: BaseField,
    vol_x: f64,
    vol_1: f64,
    vol_mixed: f64,
}

fn check_margin(form: HermitianFormField) -> Result<HermitianFormField> {
    let lam = min_eigenvalue(&form);
    let (index, &worst) = lam
        .values()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is nonempty");
    if worst < POSITIVITY_MARGIN {
        return Err(LabError::Positivity {
            min_eigenvalue: worst,
            index,
            point: form.grid().point(index),
        });
    }
    form.into_metric()
}

/// Density of `α^{n-m} ∧ (f^*β)^m` against Lebesgue measure, where only the
/// fiber block of `α` and the base block of `f^*β` contribute.
pub fn mixed_wedge_density(
    fibration: &FibrationSpec,
    alpha: &HermitianFormField,
    beta_pullback: &HermitianFormField,
) -> PeriodicScalarField {
    let d = fibration.fiber_dim();
    let m = fibration.m();
    let factor = linalg::factorial(d) * linalg::factorial(m) * 2f64.powi(fibration.n() as i32);
    alpha
        .block(0, d)
        .determinant()
        .mul(&beta_pullback.block(d, m).determinant())
        .scale(factor)
}

/// Construct the family from a validated scenario.
pub fn build_family(spec: &ScenarioSpec) -> Result<AdiabaticFamily> {
    spec.validate()?;
    let grid = spec.grid()?;
    let fibration = FibrationSpec::new(grid, spec.m)?;
    let rho = spec.rho_field()?;
    let v = spec.v_field()?;
    let omega_x = check_margin(HermitianFormField::flat(grid).add(&ddbar(&rho)))?;
    let omega_y = check_margin(HermitianFormField::flat(fibration.base()).add(&ddbar(&v)))?;
    let omega_0 = fibration.pullback_form(&omega_y);
    let vol_x = omega_x.volume_density().mean();
    let vol_1 = omega_0.add(&omega_x).volume_density().mean();
    let vol_mixed = mixed_wedge_density(&fibration, &omega_x, &omega_0).mean();
    let e = ricci_potential(&omega_x, vol_1)?;
    Ok(AdiabaticFamily {
        spec: spec.clone(),
        fibration,
        omega_x,
        omega_y,
        omega_0,
        e,
        rho,
        v,
        vol_x,
        vol_1,
        vol_mixed,
    })
}

/// `E = -log(det h_X / det h_flat) + c` with `∫e^E ω_X^n = target`.
///
/// `e^E ω_X^n = e^c n! dV`, so `c = log(target / n!)`.
pub fn ricci_potential(omega_x: &HermitianFormField, target: f64) -> Result<PeriodicScalarField> {
    if !omega_x.is_metric() {
        return Err(LabError::NotMetric);
    }
    let n = omega_x.dim();
    let flat_det = 0.5f64.powi(n as i32);
    let c = (target / linalg::factorial(n)).ln();
    Ok(omega_x.determinant().map(|d| c - (d / flat_det).ln()))
}

impl AdiabaticFamily {
    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn fibration(&self) -> &FibrationSpec {
        &self.fibration
    }

    pub fn grid(&self) -> GridSpec {
        self.fibration.total()
    }

    pub fn n(&self) -> usize {
        self.fibration.n()
    }

    pub fn m(&self) -> usize {
        self.fibration.m()
    }

    pub fn omega_x(&self) -> &HermitianFormField {
        &self.omega_x
    }

    /// The base metric `ω_Y` on the base grid.
    pub fn omega_y(&self) -> &HermitianFormField {
        &self.omega_y
    }

    /// `ω_0 = f^*ω_Y` (degenerate along the fibers).
    pub fn omega_0(&self) -> &HermitianFormField {
        &self.omega_0
    }

    /// The Ricci potential `E`.
    pub fn e(&self) -> &PeriodicScalarField {
        &self.e
    }

    pub fn rho(&self) -> &PeriodicScalarField {
        &self.rho
    }

    pub fn v(&self) -> &BaseField {
        &self.v
    }

    /// `∫ω_X^n`.
    pub fn volume_x(&self) -> f64 {
        self.vol_x
    }

    /// `∫ω_1^n`.
    pub fn volume_1(&self) -> f64 {
        self.vol_1
    }

    /// `∫ω_0^m ∧ ω_X^{n-m}`.
    pub fn volume_mixed(&self) -> f64 {
        self.vol_mixed
    }

    /// `ω_t = ω_0 + t·ω_X`, flagged as a metric.
    pub fn omega_t(&self, t: f64) -> Result<HermitianFormField> {
        if !(t > 0.0) {
            return Err(LabError::NonPositiveT(t));
        }
        self.omega_0.add(&self.omega_x.scale(t)).into_metric()
    }

    /// `∫ω_t^n`.
    pub fn volume_t(&self, t: f64) -> Result<f64> {
        Ok(self.omega_t(t)?.volume_density().mean())
    }

    /// `(a_t, c_t)` with `a_t = ∫ω_t^n / ∫ω_1^n` and `c_t = a_t / t^{n-m}`.
    pub fn normalization_constants(&self, t: f64) -> Result<(f64, f64)> {
        let a = if t == 1.0 { 1.0 } else { self.volume_t(t)? / self.vol_1 };
        Ok((a, a / t.powi((self.n() - self.m()) as i32)))
    }

    /// Limit of `c_t` as `t → 0`: `binom(n,m)·∫ω_0^m∧ω_X^{n-m} / ∫ω_1^n`.
    pub fn limiting_c(&self) -> f64 {
        linalg::binomial(self.n(), self.m()) * self.vol_mixed / self.vol_1
    }

    /// `log(a_t e^E det h_X)`, the target of `log det(ω_t + i∂∂̄φ)`.
    pub fn log_target(&self, t: f64) -> Result<PeriodicScalarField> {
        let (a, _) = self.normalization_constants(t)?;
        let la = a.ln();
        Ok(self
            .e
            .zip_map(&self.omega_x.determinant(), |e, d| la + e + d.ln()))
    }

    pub fn jacobian_density(&self) -> JacobianDensity {
        let wedge = mixed_wedge_density(&self.fibration, &self.omega_x, &self.omega_0);
        JacobianDensity {
            h: wedge.zip_map(&self.omega_x.volume_density(), |a, b| a / b),
        }
    }

    /// Closed-form potential `φ*_t = inf(f^*v + tρ) - (f^*v + tρ)`.
    ///
    /// Every scenario is a flat-torus family, so the Ricci-flat form in
    /// `[ω_t]` is the constant form `f^*flat + t·flat` and this always exists.
    pub fn oracle_potential(&self, t: f64) -> Result<PeriodicScalarField> {
        if !(t > 0.0) {
            return Err(LabError::NonPositiveT(t));
        }
        let u = self.fibration.pullback(&self.v).add(&self.rho.scale(t));
        Ok(u.scale(-1.0).sup_normalized())
    }

    /// Constant coefficients of the Ricci-flat representative of `[ω_t]`.
    pub fn flat_representative(&self, t: f64) -> Vec<Complex64> {
        let n = self.n();
        let d = n - self.m();
        let mut h = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            h[j * n + j] = Complex64::new(if j < d { 0.5 * t } else { 0.5 * (1.0 + t) }, 0.0);
        }
        h
    }
}
