//! Fiberwise Ricci-flat metrics, the semi-flat form, the density `F` and the
//! limiting base equation `(ω_Y + i∂∂̄ψ)^m = κ·F·ω_Y^m`.

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{exponent_fit, ExponentFit};
use crate::error::{LabError, Result};
use crate::fibration::FibrationSpec;
use crate::field::{BaseField, PeriodicScalarField};
use crate::form::{ddbar, ricci_form, FiberForm, HermitianFormField};
use crate::linalg;
use crate::scenario::{mixed_wedge_density, AdiabaticFamily};
use crate::solver::{newton_solve, solve_potential, MaProblem, SolveReport, SolverConfig};
use crate::weil_petersson::wp_product_case;

/// Relative per-fiber oscillation allowed for `F` before it is reported
/// as non-constant.
pub const FIBER_CONSTANCY_TOL: f64 = 1e-8;
/// Relative defect allowed in `∫κF ω_Y^m = ∫ω_Y^m`.
pub const SOLVABILITY_TOL: f64 = 1e-10;

/// `F_y` with `(ω_y + i∂∂̄ζ_y)^{n-m} = e^{F_y} ω_y^{n-m}` solvable in the
/// fiber class: `F_y = -log(det h_y / det h_flat) + log(vol_y / d!)`.
pub fn fiber_ricci_data(omega_y: &FiberForm) -> Result<PeriodicScalarField> {
    if !omega_y.is_metric() {
        return Err(LabError::NotMetric);
    }
    let d = omega_y.dim();
    let flat_det = 0.5f64.powi(d as i32);
    let vol = omega_y.volume_density().mean();
    let c = (vol / linalg::factorial(d)).ln();
    Ok(omega_y.determinant().map(|det| c - (det / flat_det).ln()))
}

/// `∫_{X_y} (e^{F_y} - 1) ω_y^{n-m}`.
pub fn fiber_normalization_defect(omega_y: &FiberForm, f_y: &PeriodicScalarField) -> f64 {
    f_y.map(|f| f.exp() - 1.0).mul(&omega_y.volume_density()).mean()
}

/// Pointwise `|(ω_y + i∂∂̄ζ)^d / (e^F ω_y^d) - 1|`, maximized.
pub fn fiber_equation_residual(omega_y: &FiberForm, f_y: &PeriodicScalarField, zeta: &PeriodicScalarField) -> f64 {
    let sf = omega_y.add(&ddbar(zeta)).determinant();
    let rhs = omega_y.determinant().zip_map(f_y, |d, f| d * f.exp());
    sf.zip_map(&rhs, |a, b| (a / b - 1.0).abs()).sup()
}

fn weighted_mean(u: &PeriodicScalarField, omega: &HermitianFormField) -> f64 {
    let w = omega.volume_density();
    u.mul(&w).mean() / w.mean()
}

/// ζ_y in the gauge `∫ζ_y ω_y^{n-m} = 0`, and `ω_SF,y = ω_y + i∂∂̄ζ_y`.
///
/// One fiber dimension makes the equation linear, `Δζ = 4h(e^F - 1)`;
/// otherwise the Newton core runs on the fiber torus.
pub fn solve_fiber_ricci_flat(
    omega_y: &FiberForm,
    f_y: &PeriodicScalarField,
    config: &SolverConfig,
) -> Result<(PeriodicScalarField, FiberForm)> {
    if !omega_y.is_metric() {
        return Err(LabError::NotMetric);
    }
    let zeta = if omega_y.dim() == 1 {
        let h = omega_y.determinant();
        h.zip_map(f_y, |h, f| 4.0 * h * f.exp_m1()).inverse_laplacian()
    } else {
        solve_fiber_newton(omega_y, f_y, &PeriodicScalarField::zeros(omega_y.grid()), config)?
    };
    let zeta = zeta.offset(-weighted_mean(&zeta, omega_y));
    let residual = fiber_equation_residual(omega_y, f_y, &zeta);
    if !(residual <= config.residual_tol) {
        return Err(LabError::NotConverged { iterations: 0, residual });
    }
    let sf = omega_y.add(&ddbar(&zeta)).into_metric()?;
    Ok((zeta, sf))
}

/// The fiber equation through the Newton core, from an arbitrary start.
pub fn solve_fiber_newton(
    omega_y: &FiberForm,
    f_y: &PeriodicScalarField,
    initial: &PeriodicScalarField,
    config: &SolverConfig,
) -> Result<PeriodicScalarField> {
    let target = omega_y.determinant().zip_map(f_y, |d, f| d.ln() + f);
    let problem = MaProblem {
        reference: omega_y,
        log_target: &target,
    };
    let zeta = newton_solve(&problem, initial, config)?.phi;
    Ok(zeta.offset(-weighted_mean(&zeta, omega_y)))
}

#[derive(Debug, Clone)]
pub struct FiberRicciData {
    pub fiber_f: Vec<PeriodicScalarField>,
    pub fiber_zeta: Vec<PeriodicScalarField>,
    /// ζ on the total grid.
    pub zeta: PeriodicScalarField,
}

/// All fiber solves, in base-grid order.
pub fn fiber_ricci_flat_all(family: &AdiabaticFamily, config: &SolverConfig) -> Result<FiberRicciData> {
    let fib = family.fibration();
    let solved: Vec<Result<(PeriodicScalarField, PeriodicScalarField)>> = (0..fib.base_len())
        .into_par_iter()
        .map(|y| {
            let omega_y = fib.restrict_to_fiber(family.omega_x(), y);
            let f_y = fiber_ricci_data(&omega_y)?;
            let (zeta, _) = solve_fiber_ricci_flat(&omega_y, &f_y, config)?;
            Ok((f_y, zeta))
        })
        .collect();
    let mut fiber_f = Vec::with_capacity(solved.len());
    let mut fiber_zeta = Vec::with_capacity(solved.len());
    for (y, r) in solved.into_iter().enumerate() {
        let (f, z) = r.map_err(|e| LabError::Fiber {
            fiber: y,
            source: Box::new(e),
        })?;
        fiber_f.push(f);
        fiber_zeta.push(z);
    }
    let zeta = fib.assemble(&fiber_zeta);
    Ok(FiberRicciData {
        fiber_f,
        fiber_zeta,
        zeta,
    })
}

#[derive(Debug, Clone)]
pub struct Semiflat {
    pub fibers: FiberRicciData,
    /// `ω_SF = ω_X + i∂∂̄ζ`; not necessarily positive.
    pub omega_sf: HermitianFormField,
}

pub fn assemble_semiflat(family: &AdiabaticFamily, config: &SolverConfig) -> Result<Semiflat> {
    let fibers = fiber_ricci_flat_all(family, config)?;
    let omega_sf = family.omega_x().add(&ddbar(&fibers.zeta)).as_form();
    Ok(Semiflat { fibers, omega_sf })
}

/// Density of `ω_SF^{n-m} ∧ ω_0^m` against Lebesgue measure.
pub fn semiflat_wedge(family: &AdiabaticFamily, omega_sf: &HermitianFormField) -> PeriodicScalarField {
    mixed_wedge_density(family.fibration(), omega_sf, family.omega_0())
}

#[derive(Debug, Clone)]
pub struct DensityF {
    /// `F` on the base.
    pub f: BaseField,
    /// Largest relative oscillation of `Ω / (ω_SF^{n-m}∧ω_0^m)` along a fiber.
    pub fiber_oscillation: f64,
    /// `f_*Ω / (vol(X_y, ω_SF)·ω_Y^m)` on the base.
    pub pushforward: BaseField,
    /// `‖F - pushforward‖∞ / ‖F‖∞`.
    pub route_difference: f64,
}

/// `F = Ω / (ω_SF^{n-m} ∧ ω_0^m)`, reduced to the base after checking it is
/// constant along every fiber. `omega_density` is `Ω` against Lebesgue.
pub fn density_f(
    family: &AdiabaticFamily,
    omega_density: &PeriodicScalarField,
    omega_sf: &HermitianFormField,
) -> Result<DensityF> {
    let fib = family.fibration();
    let ratio = omega_density.zip_map(&semiflat_wedge(family, omega_sf), |a, b| a / b);
    let fl = fib.fiber_len();
    let osc: Vec<f64> = ratio
        .values()
        .chunks(fl)
        .map(|c| {
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = c.iter().sum::<f64>() / fl as f64;
            (hi - lo) / mean.abs()
        })
        .collect();
    let (worst, &fiber_oscillation) = osc
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty base");
    if !(fiber_oscillation <= FIBER_CONSTANCY_TOL) || ratio.inf() <= 0.0 {
        return Err(LabError::FiberConstancy {
            fiber: worst,
            oscillation: fiber_oscillation,
        });
    }
    let f = fib.fiber_means(&ratio);
    let pushforward = pushforward_density(fib, omega_density, omega_sf, family.omega_y());
    let route_difference = f.sub(&pushforward).sup_abs() / f.sup_abs();
    Ok(DensityF {
        f,
        fiber_oscillation,
        pushforward,
        route_difference,
    })
}

/// The fiber-integration route to `F`.
pub fn pushforward_density(
    fib: &FibrationSpec,
    omega_density: &PeriodicScalarField,
    omega_sf: &HermitianFormField,
    omega_y: &HermitianFormField,
) -> BaseField {
    let push = fib.pushforward_volume(omega_density);
    let fiber_vol = fib.fiber_volumes(omega_sf);
    push.zip_map(&fiber_vol, |p, v| p / v)
        .zip_map(&omega_y.volume_density(), |p, w| p / w)
}

#[derive(Debug, Clone)]
pub struct LimitData {
    pub f: BaseField,
    pub kappa: f64,
    /// Sup-normalized limit potential on the base.
    pub psi: BaseField,
    /// `ω = ω_Y + i∂∂̄ψ`.
    pub omega: HermitianFormField,
    /// `‖log(ω^m / (κF ω_Y^m))‖∞`.
    pub residual: f64,
    pub solvability_defect: f64,
}

/// Solve `(ω_Y + i∂∂̄ψ)^m = κ·F·ω_Y^m`. With `initial` the Newton core is
/// used from that start; otherwise `m = 1` is solved as the linear equation
/// `Δψ = 4h_Y(κF - 1)`.
pub fn solve_base_limit(
    f: &BaseField,
    omega_y: &HermitianFormField,
    kappa: f64,
    config: &SolverConfig,
    initial: Option<&BaseField>,
) -> Result<LimitData> {
    if !omega_y.is_metric() {
        return Err(LabError::NotMetric);
    }
    let vol = omega_y.volume_density().mean();
    let rhs_vol = f.mul(&omega_y.volume_density()).mean() * kappa;
    let solvability_defect = (rhs_vol - vol).abs() / vol;
    if !(solvability_defect <= SOLVABILITY_TOL) {
        return Err(LabError::Solvability {
            defect: solvability_defect,
        });
    }
    let log_target = omega_y.determinant().zip_map(f, |d, f| d.ln() + (kappa * f).ln());
    let psi = match initial {
        None if omega_y.dim() == 1 => omega_y
            .determinant()
            .zip_map(f, |h, f| 4.0 * h * (kappa * f - 1.0))
            .inverse_laplacian(),
        _ => {
            let start = initial
                .cloned()
                .unwrap_or_else(|| PeriodicScalarField::zeros(omega_y.grid()));
            let problem = MaProblem {
                reference: omega_y,
                log_target: &log_target,
            };
            newton_solve(&problem, &start, config)?.phi
        }
    };
    let psi = psi.sup_normalized();
    let omega = omega_y.add(&ddbar(&psi)).into_metric()?;
    let residual = omega.determinant().map(f64::ln).sub(&log_target).sup_abs();
    if !(residual <= config.residual_tol) {
        return Err(LabError::NotConverged { iterations: 0, residual });
    }
    Ok(LimitData {
        f: f.clone(),
        kappa,
        psi,
        omega,
        residual,
        solvability_defect,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitRow {
    pub t: f64,
    /// `‖φ_t - f^*ψ‖∞`.
    pub c0: f64,
    /// Sup of the Euclidean gradient of `φ_t - f^*ψ`.
    pub c1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitComparison {
    pub rows: Vec<LimitRow>,
    /// Fit of `c0` against `t`, when at least four differences are positive.
    pub fit: Option<ExponentFit>,
}

pub fn limit_comparison(reports: &[SolveReport], psi: &BaseField, fibration: &FibrationSpec) -> LimitComparison {
    let lifted = fibration.pullback(psi);
    let rows: Vec<LimitRow> = reports
        .iter()
        .map(|r| {
            let diff = r.phi.sub(&lifted);
            LimitRow {
                t: r.t,
                c0: diff.sup_abs(),
                c1: diff.gradient_norm().sup(),
            }
        })
        .collect();
    let pairs: Vec<(f64, f64)> = rows.iter().filter(|r| r.c0 > 0.0).map(|r| (r.t, r.c0)).collect();
    LimitComparison {
        fit: exponent_fit(&pairs).ok(),
        rows,
    }
}

#[derive(Debug, Clone)]
pub struct KeResidual {
    /// `Ric(ω) - ω_WP`.
    pub ricci_minus_wp: HermitianFormField,
    /// `Ric(ω) - Ric(ω_Y) + i∂∂̄ log F`.
    pub intermediate: HermitianFormField,
    pub ricci_minus_wp_sup: f64,
    pub intermediate_sup: f64,
}

pub fn generalized_ke_residual(
    omega: &HermitianFormField,
    omega_wp: &HermitianFormField,
    omega_y: &HermitianFormField,
    f: &BaseField,
) -> KeResidual {
    let ric = ricci_form(omega);
    let ricci_minus_wp = ric.sub(omega_wp);
    let intermediate = ric.sub(&ricci_form(omega_y)).add(&ddbar(&f.map(f64::ln)));
    KeResidual {
        ricci_minus_wp_sup: ricci_minus_wp.sup_abs(),
        intermediate_sup: intermediate.sup_abs(),
        ricci_minus_wp,
        intermediate,
    }
}

/// Everything produced by the base-limit construction for one scenario.
#[derive(Debug, Clone)]
pub struct LimitPipeline {
    pub reference_solve: SolveReport,
    pub semiflat: Semiflat,
    pub density: DensityF,
    pub limit: LimitData,
    pub omega_wp: HermitianFormField,
    pub ke: KeResidual,
    /// `|∫_Y F ω_Y^m·vol_fiber - ∫ω_1^n| / ∫ω_1^n`.
    pub total_mass_defect: f64,
}

/// Solve at `t = 1`, build `ω_SF`, `F` and the limit metric, and evaluate the
/// Kähler-Einstein residuals. The `t = 1` solve uses `config` tightened by
/// two orders of magnitude since `F` inherits its residual.
pub fn limit_pipeline(family: &AdiabaticFamily, config: &SolverConfig) -> Result<LimitPipeline> {
    let tight = config.with_tolerance((config.residual_tol * 1e-2).max(1e-13));
    let reference_solve = solve_potential(family, 1.0, &tight, None)?;
    let omega_density = reference_solve.metric(family)?.volume_density();
    let semiflat = assemble_semiflat(family, &tight)?;
    let density = density_f(family, &omega_density, &semiflat.omega_sf)?;
    let kappa = family.volume_mixed() / family.volume_1();
    let limit = solve_base_limit(&density.f, family.omega_y(), kappa, &tight, None)?;
    let omega_wp = wp_product_case(family).form;
    let ke = generalized_ke_residual(&limit.omega, &omega_wp, family.omega_y(), &density.f);
    let fib = family.fibration();
    let fiber_vol = fib.fiber_volumes(&semiflat.omega_sf).mean();
    let mass = density.f.mul(&family.omega_y().volume_density()).mean() * fiber_vol;
    let total_mass_defect = (mass - family.volume_1()).abs() / family.volume_1();
    Ok(LimitPipeline {
        reference_solve,
        semiflat,
        density,
        limit,
        omega_wp,
        ke,
        total_mass_defect,
    })
}
