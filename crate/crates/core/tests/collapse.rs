//! Sweep-level behavior of the collapse diagnostics.

use std::f64::consts::PI;

use adlab_core::diagnostics::{
    diagnose, fiber_geometry_constants, relative_variation, schwarz_trace, DiagnosticRecord,
};
use adlab_core::solver::{continuation_sweep, geometric_schedule};
use adlab_core::{build_family, GridSpec, HermitianFormField, Mode, ModeKind, ScenarioSpec, SolverConfig};

fn cos(k: &[i64], amplitude: f64) -> Mode {
    Mode {
        k: k.to_vec(),
        amplitude,
        kind: ModeKind::Cos,
    }
}

fn rho_v() -> ScenarioSpec {
    ScenarioSpec::product(2, 1)
        .with_rho(cos(&[1, 0, 1, 0], 0.025))
        .with_rho(cos(&[1, 0, -1, 0], 0.025))
        .with_v(cos(&[0, 0, 1, 0], 0.05))
}

fn sweep(spec: &ScenarioSpec) -> Vec<DiagnosticRecord> {
    let family = build_family(spec).unwrap();
    let schedule = geometric_schedule(1.0, 0.5, 8).unwrap();
    let reports = continuation_sweep(&family, &schedule, &SolverConfig::default()).unwrap();
    reports.iter().map(|r| diagnose(r, &family, None).unwrap()).collect()
}

fn tail<F: Fn(&DiagnosticRecord) -> f64>(records: &[DiagnosticRecord], f: F) -> Vec<f64> {
    records[records.len() - 4..].iter().map(f).collect()
}

#[test]
fn perturbed_sweep_is_bounded_and_decays() {
    let records = sweep(&rho_v());
    for column in [
        tail(&records, |r| r.schwarz_sup),
        tail(&records, |r| r.env_total_max),
        tail(&records, |r| r.env_fiber_max),
        tail(&records, |r| r.env_fiber_min),
        tail(&records, |r| r.vol_ratio),
        tail(&records, |r| r.sup_phi),
    ] {
        assert!(relative_variation(&column) < 0.15, "{column:?}");
    }
    let fits = adlab_core::diagnostics::sweep_fits(&records);
    let osc = fits.osc.unwrap();
    assert!((osc.slope - 1.0).abs() <= 0.05 && osc.r_squared >= 0.999);
    let s = fits.s_fiber.unwrap();
    assert!(s.slope >= 0.5 && (s.slope - 2.0).abs() < 1e-6);
    // The bound with C taken at t = 1/2 holds on t ≤ 1/2.
    assert_eq!(fits.s_fiber_bound_violations, vec![1.0]);
    for r in &records {
        assert!(r.residual <= 1e-9);
        assert!(r.env_fiber_min > 0.0 && r.env_fiber_min <= r.env_fiber_max);
    }
}

#[test]
fn product_schwarz_trace_increases_to_one() {
    let family = build_family(&ScenarioSpec::product(2, 1)).unwrap();
    let schedule = geometric_schedule(1.0, 0.5, 8).unwrap();
    let reports = continuation_sweep(&family, &schedule, &SolverConfig::default()).unwrap();
    let sups: Vec<f64> = reports.iter().map(|r| schwarz_trace(r, &family).unwrap().0).collect();
    assert!(sups.windows(2).all(|w| w[0] < w[1]));
    assert!(sups.iter().all(|&s| s <= 1.0));
    let last = *sups.last().unwrap();
    assert!(sups.iter().all(|&s| s <= 1.1 * last));
}

#[test]
fn flat_four_torus_fiber_constants() {
    let g = GridSpec::new(2, 8).unwrap();
    let geo = fiber_geometry_constants(&HermitianFormField::flat(g)).unwrap();
    assert!((geo.diameter - 1.0).abs() <= 2.0 / 8.0, "{}", geo.diameter);
    assert!((geo.lambda_1 - 4.0 * PI * PI).abs() < 1e-8, "{}", geo.lambda_1);
}

#[test]
fn non_metric_fiber_is_rejected() {
    let g = GridSpec::new(1, 8).unwrap();
    assert!(fiber_geometry_constants(&HermitianFormField::zeros(g, 1)).is_err());
}
