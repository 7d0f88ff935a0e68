//! Damped inexact Newton for `log det(η + i∂∂̄φ) = target + c` on any
//! periodic grid, in the mean-zero gauge with a floating constant `c`.

use num_complex::Complex64;
use rayon::prelude::*;

use super::gmres::gmres;
use super::SolverConfig;
use crate::error::{LabError, Result};
use crate::field::PeriodicScalarField;
use crate::form::{ddbar, HermitianFormField};
use crate::linalg;
use crate::spectral::{self, SpectralPlan};

pub(crate) struct NewtonOutcome {
    /// Mean-zero potential.
    pub phi: PeriodicScalarField,
    pub iterations: usize,
    pub linear_iterations: usize,
    /// `‖log det(η + i∂∂̄φ) - target‖∞` before each step and at exit.
    pub history: Vec<f64>,
    pub damped: bool,
}

/// State of one iterate: the perturbed metric's pointwise inverse and the
/// residual `G = log det - target - c`.
struct Iterate {
    inverse: Vec<Complex64>,
    mean_inverse: Vec<Complex64>,
    g: Vec<f64>,
}

pub(crate) struct MaProblem<'a> {
    pub reference: &'a HermitianFormField,
    pub log_target: &'a PeriodicScalarField,
}

impl MaProblem<'_> {
    /// `None` when `η + i∂∂̄φ` fails to be positive somewhere.
    fn evaluate(&self, phi: &PeriodicScalarField, c: f64) -> Option<Iterate> {
        let form = self.reference.add(&ddbar(phi));
        let d = form.dim();
        if !form
            .coeffs()
            .par_chunks(d * d)
            .all(|m| linalg::is_positive_definite(m, d))
        {
            return None;
        }
        let g: Vec<f64> = form
            .coeffs()
            .par_chunks(d * d)
            .zip(self.log_target.values().par_iter())
            .map(|(m, &t)| linalg::det(m, d).ln() - t - c)
            .collect();
        let inverse = form.inverse_coeffs();
        let mut mean_inverse = vec![Complex64::new(0.0, 0.0); d * d];
        for chunk in inverse.chunks(d * d) {
            for (acc, v) in mean_inverse.iter_mut().zip(chunk) {
                *acc += v;
            }
        }
        let len = phi.len() as f64;
        mean_inverse.iter_mut().for_each(|v| *v /= len);
        Some(Iterate {
            inverse,
            mean_inverse,
            g,
        })
    }
}

/// `tr_g(i∂∂̄w)` for pointwise inverse coefficients `inverse` of `g`.
pub(crate) fn trace_ddbar(plan: &SpectralPlan, inverse: &[Complex64], w: &[f64]) -> Vec<f64> {
    let grid = plan.grid();
    let d = grid.dim();
    let spec = plan.forward_real(w);
    let mut out = vec![0.0; w.len()];
    for j in 0..d {
        for k in j..d {
            let h = plan.apply(&spec, |idx| plan.dz(idx, j) * plan.dzbar(idx, k));
            let weight = if j == k { 1.0 } else { 2.0 };
            out.par_iter_mut().enumerate().for_each(|(i, o)| {
                // g^{kj̄}h_{jk̄} plus its conjugate partner.
                *o += weight * (inverse[i * d * d + k * d + j] * h[i]).re;
            });
        }
    }
    out
}

/// Modes on which every derivative multiplier vanishes, except the zero mode.
fn null_modes(plan: &SpectralPlan) -> Vec<usize> {
    (1..plan.grid().len()).filter(|&i| plan.is_null_mode(i)).collect()
}

/// Remove the non-constant null-mode content of `w` (those modes are
/// invisible to i∂∂̄); returns the removed part.
fn split_null(plan: &SpectralPlan, nulls: &[usize], w: &[f64]) -> Vec<f64> {
    let grid = plan.grid();
    let len = grid.len();
    let n = grid.samples();
    let mut part = vec![0.0; len];
    let mut multi = vec![0; grid.axes()];
    for &mode in nulls {
        // Null modes are ±1 patterns, so their coefficients are signed sums.
        grid.multi_index(mode, &mut multi);
        let sign = |idx: usize| -> f64 {
            let mut s = 0usize;
            let mut rest = idx;
            for &mi in multi.iter() {
                if mi != 0 {
                    s += rest % n;
                }
                rest /= n;
            }
            if s.is_multiple_of(2) {
                1.0
            } else {
                -1.0
            }
        };
        let coeff: f64 = (0..len).map(|i| sign(i) * w[i]).sum::<f64>() / len as f64;
        for (i, p) in part.iter_mut().enumerate() {
            *p += coeff * sign(i);
        }
    }
    part
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub(crate) fn newton_solve(
    problem: &MaProblem<'_>,
    initial: &PeriodicScalarField,
    config: &SolverConfig,
) -> Result<NewtonOutcome> {
    let grid = initial.grid();
    let plan = spectral::plan(grid);
    let nulls = null_modes(&plan);
    let mut phi = initial.mean_removed();
    let mut c = 0.0;
    let mut state = problem.evaluate(&phi, c).ok_or_else(|| {
        let form = problem.reference.add(&ddbar(&phi));
        let lam = crate::form::min_eigenvalue(&form);
        let (index, &min_eigenvalue) = lam
            .values()
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty grid");
        LabError::Positivity {
            min_eigenvalue,
            index,
            point: grid.point(index),
        }
    })?;
    // Start from the best constant, which is the mean residual.
    c = state.g.iter().sum::<f64>() / state.g.len() as f64;
    state.g.iter_mut().for_each(|g| *g -= c);
    let mut history = Vec::new();
    let mut damped = false;
    let mut linear_iterations = 0;
    let true_residual = |g: &[f64], c: f64| g.iter().fold(0.0f64, |m, x| m.max((x + c).abs()));
    for iteration in 0..config.max_iter {
        let r = true_residual(&state.g, c);
        history.push(r);
        if r <= config.residual_tol {
            return Ok(NewtonOutcome {
                phi,
                iterations: iteration,
                linear_iterations,
                history,
                damped,
            });
        }
        let d = grid.dim();
        // Constant-coefficient symbol of the averaged linearization.
        let symbol: Vec<f64> = (0..grid.len())
            .map(|idx| {
                if plan.is_null_mode(idx) {
                    return 1.0;
                }
                let mut s = 0.0;
                for j in 0..d {
                    for k in 0..d {
                        s += (state.mean_inverse[k * d + j] * plan.dz(idx, j) * plan.dzbar(idx, k)).re;
                    }
                }
                s
            })
            .collect();
        let inverse = &state.inverse;
        let apply = |w: &[f64]| -> Vec<f64> {
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let mut out = trace_ddbar(&plan, inverse, w);
            let null = split_null(&plan, &nulls, w);
            for (o, n) in out.iter_mut().zip(&null) {
                *o += mean + n;
            }
            out
        };
        let precond = |r: &[f64]| -> Vec<f64> {
            let spec = plan.forward_real(r);
            plan.apply(&spec, |idx| Complex64::new(1.0 / symbol[idx], 0.0))
                .into_iter()
                .map(|z| z.re)
                .collect()
        };
        let rhs: Vec<f64> = state.g.iter().map(|g| -g).collect();
        let forcing = (0.1 * sup_abs(&state.g).min(1.0)).max(1e-13);
        let lin = gmres(apply, precond, &rhs, forcing, config.gmres_restart, config.gmres_max_iter);
        linear_iterations += lin.iterations;
        let mut w = lin.x;
        let mean_w = w.iter().sum::<f64>() / w.len() as f64;
        let null = split_null(&plan, &nulls, &w);
        for (wi, ni) in w.iter_mut().zip(&null) {
            *wi -= mean_w + ni;
        }
        let delta = PeriodicScalarField::from_vec(grid, w);
        let delta_c = -mean_w;
        let merit = rms(&state.g);
        let mut step = 1.0;
        let mut positivity_violated;
        loop {
            let trial = phi.add(&delta.scale(step));
            let trial_c = c + step * delta_c;
            match problem.evaluate(&trial, trial_c) {
                Some(next) if rms(&next.g) <= (1.0 - 1e-4 * step) * merit => {
                    phi = trial.mean_removed();
                    c = trial_c;
                    state = next;
                    break;
                }
                Some(_) => positivity_violated = false,
                None => positivity_violated = true,
            }
            step *= 0.5;
            damped = true;
            if step < config.damping_floor {
                return Err(LabError::DampingFloor {
                    residual: r,
                    positivity_violated,
                });
            }
        }
    }
    let r = true_residual(&state.g, c);
    history.push(r);
    if r <= config.residual_tol {
        return Ok(NewtonOutcome {
            phi,
            iterations: config.max_iter,
            linear_iterations,
            history,
            damped,
        });
    }
    Err(LabError::NotConverged {
        iterations: config.max_iter,
        residual: r,
    })
}
