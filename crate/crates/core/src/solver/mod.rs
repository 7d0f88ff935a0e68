//! The Monge-Ampère family `(ω_t + i∂∂̄φ_t)^n = a_t e^E ω_X^n`,
//! `sup φ_t = 0`, solved along decreasing schedules of `t`.

mod gmres;
pub(crate) mod newton;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::PeriodicScalarField;
use crate::form::{ddbar, min_eigenvalue, HermitianFormField};
use crate::scenario::{AdiabaticFamily, SolverOverrides};
use crate::spectral;

pub(crate) use newton::{newton_solve, MaProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Target for the sup norm of the log-residual.
    pub residual_tol: f64,
    /// Cap on Newton steps.
    pub max_iter: usize,
    /// Smallest line-search step before giving up.
    pub damping_floor: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-9,
            max_iter: 50,
            damping_floor: 2f64.powi(-20),
            gmres_restart: 40,
            gmres_max_iter: 400,
        }
    }
}

impl SolverConfig {
    pub fn with_overrides(mut self, overrides: &SolverOverrides) -> Self {
        if let Some(tol) = overrides.residual_tol {
            self.residual_tol = tol;
        }
        if let Some(max_iter) = overrides.max_iter {
            self.max_iter = max_iter;
        }
        self
    }

    pub fn with_tolerance(mut self, residual_tol: f64) -> Self {
        self.residual_tol = residual_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) {
            return Err(LabError::InvalidInput("residual_tol must be positive".into()));
        }
        if self.max_iter == 0 || self.gmres_restart == 0 || self.gmres_max_iter == 0 {
            return Err(LabError::InvalidInput("iteration caps must be at least 1".into()));
        }
        if !(self.damping_floor > 0.0 && self.damping_floor < 1.0) {
            return Err(LabError::InvalidInput("damping_floor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub t: f64,
    /// Sup-normalized potential.
    #[serde(skip)]
    pub phi: PeriodicScalarField,
    pub iterations: usize,
    /// Inner Krylov steps summed over all Newton steps.
    pub linear_iterations: usize,
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
    pub damped: bool,
    /// Factor applied to the warm start to make it admissible, if one was given.
    pub warm_start_scale: Option<f64>,
    pub min_metric_eigenvalue: f64,
    pub sup_norm_phi: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SolveReport {
    /// `ω̃_t = ω_t + i∂∂̄φ_t`.
    pub fn metric(&self, family: &AdiabaticFamily) -> Result<HermitianFormField> {
        family.omega_t(self.t)?.add(&ddbar(&self.phi)).into_metric()
    }
}

/// `r = log((ω_t + i∂∂̄φ)^n / (a_t e^E ω_X^n))`.
pub fn ma_residual(family: &AdiabaticFamily, phi: &PeriodicScalarField, t: f64) -> Result<PeriodicScalarField> {
    let metric = family.omega_t(t)?.add(&ddbar(phi)).into_metric()?;
    let target = family.log_target(t)?;
    Ok(metric.determinant().map(f64::ln).sub(&target))
}

/// Directional derivative of [`ma_residual`] at `φ` along `w`:
/// `tr_{ω̃}(i∂∂̄w)`.
pub fn linearized_residual(
    family: &AdiabaticFamily,
    phi: &PeriodicScalarField,
    t: f64,
    w: &PeriodicScalarField,
) -> Result<PeriodicScalarField> {
    let metric = family.omega_t(t)?.add(&ddbar(phi)).into_metric()?;
    let plan = spectral::plan(phi.grid());
    let values = newton::trace_ddbar(&plan, &metric.inverse_coeffs(), w.values());
    PeriodicScalarField::new(phi.grid(), values)
}

/// Largest `2^{-j}` with `ω_t + i∂∂̄(2^{-j}φ)` positive.
fn admissible_scale(omega_t: &HermitianFormField, phi: &PeriodicScalarField) -> (f64, PeriodicScalarField) {
    let h = ddbar(phi);
    let mut s = 1.0;
    for _ in 0..40 {
        if omega_t.add(&h.scale(s)).into_metric().is_ok() {
            return (s, phi.scale(s));
        }
        s *= 0.5;
    }
    (0.0, PeriodicScalarField::zeros(phi.grid()))
}

pub fn solve_potential(
    family: &AdiabaticFamily,
    t: f64,
    config: &SolverConfig,
    warm_start: Option<&PeriodicScalarField>,
) -> Result<SolveReport> {
    if !(t > 0.0) {
        return Err(LabError::NonPositiveT(t));
    }
    config.validate()?;
    let start = Instant::now();
    let omega_t = family.omega_t(t)?;
    let (warm_start_scale, initial) = match warm_start {
        Some(phi) => {
            if phi.grid() != family.grid() {
                return Err(LabError::InvalidInput("warm start lives on a different grid".into()));
            }
            let (s, scaled) = admissible_scale(&omega_t, phi);
            (Some(s), scaled)
        }
        None => (None, PeriodicScalarField::zeros(family.grid())),
    };
    let target = family.log_target(t)?;
    let problem = MaProblem {
        reference: &omega_t,
        log_target: &target,
    };
    let out = newton_solve(&problem, &initial, config)?;
    let phi = out.phi.sup_normalized();
    let metric = omega_t.add(&ddbar(&phi)).into_metric()?;
    let residual = metric.determinant().map(f64::ln).sub(&target).sup_abs();
    Ok(SolveReport {
        t,
        iterations: out.iterations,
        linear_iterations: out.linear_iterations,
        final_residual: residual,
        residual_history: out.history,
        damped: out.damped,
        warm_start_scale,
        min_metric_eigenvalue: min_eigenvalue(&metric).inf(),
        sup_norm_phi: phi.sup_abs(),
        phi,
        wall_time: start.elapsed(),
    })
}

/// A sweep that stopped early, with the reports completed before the failure.
#[derive(Debug, Clone)]
pub struct SweepFailure {
    pub completed: Vec<SolveReport>,
    pub failed_t: Option<f64>,
    pub error: LabError,
}

impl std::fmt::Display for SweepFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.failed_t {
            Some(t) => write!(f, "sweep failed at t = {t}: {}", self.error),
            None => write!(f, "invalid schedule: {}", self.error),
        }
    }
}

impl std::error::Error for SweepFailure {}

/// Geometric schedule `start·factor^k`, `k = 0..=steps`.
pub fn geometric_schedule(start: f64, factor: f64, steps: usize) -> Result<Vec<f64>> {
    if !(start > 0.0) || !(factor > 0.0 && factor < 1.0) {
        return Err(LabError::InvalidInput(
            "schedule needs t_start > 0 and 0 < t_factor < 1".into(),
        ));
    }
    Ok((0..=steps).map(|k| start * factor.powi(k as i32)).collect())
}

/// Solve along a strictly decreasing schedule, warm-starting each solve from
/// the previous potential.
pub fn continuation_sweep(
    family: &AdiabaticFamily,
    schedule: &[f64],
    config: &SolverConfig,
) -> std::result::Result<Vec<SolveReport>, SweepFailure> {
    let invalid = |error| SweepFailure {
        completed: Vec::new(),
        failed_t: None,
        error,
    };
    if schedule.is_empty() {
        return Err(invalid(LabError::Empty("schedule")));
    }
    if schedule.iter().any(|&t| !(t > 0.0)) || schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid(LabError::InvalidInput(
            "schedule must be positive and strictly decreasing".into(),
        )));
    }
    let mut reports: Vec<SolveReport> = Vec::with_capacity(schedule.len());
    for &t in schedule {
        let warm = reports.last().map(|r| &r.phi);
        match solve_potential(family, t, config, warm) {
            Ok(report) => reports.push(report),
            Err(error) => {
                return Err(SweepFailure {
                    completed: reports,
                    failed_t: Some(t),
                    error,
                })
            }
        }
    }
    Ok(reports)
}
