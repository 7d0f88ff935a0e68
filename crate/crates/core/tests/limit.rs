use adlab_core::semiflat::{limit_comparison, limit_pipeline, solve_base_limit};
use adlab_core::solver::{continuation_sweep, geometric_schedule};
use adlab_core::{build_family, LabError, Mode, ModeKind, PeriodicScalarField, ScenarioSpec, SolverConfig};

fn cos(k: &[i64], amplitude: f64) -> Mode {
    Mode {
        k: k.to_vec(),
        amplitude,
        kind: ModeKind::Cos,
    }
}

#[test]
fn v_only_potentials_are_already_the_limit() {
    let spec = ScenarioSpec::product(2, 1).with_v(cos(&[0, 0, 1, 0], 0.05));
    let family = build_family(&spec).unwrap();
    let config = SolverConfig::default();
    let pipeline = limit_pipeline(&family, &config).unwrap();
    // ψ_lim = inf v - v.
    let expected = family.v().scale(-1.0).sup_normalized();
    assert!(pipeline.limit.psi.sub(&expected).sup_abs() < 1e-10);
    let reports = continuation_sweep(&family, &geometric_schedule(1.0, 0.25, 3).unwrap(), &config).unwrap();
    let cmp = limit_comparison(&reports, &pipeline.limit.psi, family.fibration());
    assert!(cmp.rows.iter().all(|r| r.c0 <= 1e-8));
    assert!(pipeline.total_mass_defect < 1e-10);
}

#[test]
fn rho_limit_closes_linearly() {
    let spec = ScenarioSpec::product(2, 1)
        .with_rho(cos(&[1, 0, 1, 0], 0.025))
        .with_rho(cos(&[1, 0, -1, 0], 0.025))
        .with_v(cos(&[0, 0, 1, 0], 0.05));
    let family = build_family(&spec).unwrap();
    let config = SolverConfig::default();
    let pipeline = limit_pipeline(&family, &config).unwrap();
    assert!(pipeline.density.fiber_oscillation <= 1e-8);
    assert!(pipeline.density.route_difference <= 1e-8);
    assert!(pipeline.ke.intermediate_sup <= 1e-8);
    let reports = continuation_sweep(&family, &geometric_schedule(0.5, 0.5, 4).unwrap(), &config).unwrap();
    let cmp = limit_comparison(&reports, &pipeline.limit.psi, family.fibration());
    let fit = cmp.fit.unwrap();
    assert!(fit.slope >= 0.95, "{}", fit.slope);
}

#[test]
fn unsolvable_base_equation_is_rejected() {
    let family = build_family(&ScenarioSpec::product(2, 1)).unwrap();
    let base = family.fibration().base();
    let f = PeriodicScalarField::constant(base, 4.0);
    let err = solve_base_limit(&f, family.omega_y(), 0.5, &SolverConfig::default(), None).unwrap_err();
    assert!(matches!(err, LabError::Solvability { .. }));
}
