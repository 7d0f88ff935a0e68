use std::f64::consts::PI;

use adlab_core::diagnostics::exponent_fit;
use adlab_core::{
    ddbar, top_ratio, trace_pair, FibrationSpec, GridSpec, HermitianFormField, Mode, ModeKind, PeriodicScalarField,
    ScenarioSpec,
};
use proptest::prelude::*;

type Terms = Vec<(Vec<i64>, f64, bool)>;

fn field(grid: GridSpec, terms: &Terms) -> PeriodicScalarField {
    PeriodicScalarField::from_fn(grid, |p| {
        terms
            .iter()
            .map(|(k, a, sine)| {
                let phase = 2.0 * PI * k.iter().zip(p).map(|(&k, &x)| k as f64 * x).sum::<f64>();
                a * if *sine { phase.sin() } else { phase.cos() }
            })
            .sum()
    })
    .unwrap()
}

fn terms(axes: usize, amplitude: f64) -> impl Strategy<Value = Terms> {
    prop::collection::vec((prop::collection::vec(-3i64..=3, axes), -amplitude..amplitude, any::<bool>()), 1..5)
}

/// Few low modes with coefficients small enough that `flat + i∂∂̄f` stays
/// positive.
fn small_terms() -> impl Strategy<Value = Terms> {
    prop::collection::vec((prop::collection::vec(-2i64..=2, 4), -3e-4..3e-4f64, any::<bool>()), 1..5)
}

fn grid2() -> GridSpec {
    GridSpec::new(2, 8).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ddbar_is_linear_and_kills_constants(a in terms(4, 1.0), b in terms(4, 1.0), s in -3.0..3.0f64, c in -10.0..10.0f64) {
        let (f, g) = (field(grid2(), &a), field(grid2(), &b));
        let lhs = ddbar(&f.scale(s).add(&g).offset(c));
        let rhs = ddbar(&f).scale(s).add(&ddbar(&g));
        prop_assert!(lhs.sub(&rhs).sup_abs() < 1e-10);
    }

    #[test]
    fn flat_laplacian_is_symmetric_and_mean_free(a in terms(4, 1.0), b in terms(4, 1.0)) {
        let (f, g) = (field(grid2(), &a), field(grid2(), &b));
        let flat = HermitianFormField::flat(grid2());
        let lf = trace_pair(&flat, &ddbar(&f)).unwrap();
        let lg = trace_pair(&flat, &ddbar(&g)).unwrap();
        prop_assert!(lf.mean().abs() < 1e-11);
        // Symmetry of the Laplacian: ∫ f Δg = ∫ g Δf.
        prop_assert!((f.mul(&lg).mean() - g.mul(&lf).mean()).abs() < 1e-9);
    }

    #[test]
    fn translation_commutes_with_ddbar(a in terms(4, 1.0), axis in 0usize..4, steps in -7isize..8) {
        let f = field(grid2(), &a);
        let lhs = ddbar(&f.shifted(axis, steps));
        let rhs = ddbar(&f).shifted(axis, steps);
        prop_assert!(lhs.sub(&rhs).sup_abs() < 1e-11);
    }

    #[test]
    fn volume_is_conserved(a in small_terms()) {
        let flat = HermitianFormField::flat(grid2());
        let f = field(grid2(), &a);
        let moved = flat.add(&ddbar(&f)).into_metric().unwrap();
        let v0 = flat.volume_density().mean();
        prop_assert!((moved.volume_density().mean() - v0).abs() < 1e-12 * v0);
    }

    #[test]
    fn top_ratio_is_a_cocycle(a in small_terms(), b in small_terms()) {
        let flat = HermitianFormField::flat(grid2());
        let x = flat.add(&ddbar(&field(grid2(), &a))).into_metric().unwrap();
        let y = flat.add(&ddbar(&field(grid2(), &b))).into_metric().unwrap();
        let lhs = top_ratio(&x, &y).unwrap().mul(&top_ratio(&y, &flat).unwrap());
        let rhs = top_ratio(&x, &flat).unwrap();
        prop_assert!(lhs.sub(&rhs).sup_abs() < 1e-13);
        let back = top_ratio(&x, &y).unwrap().mul(&top_ratio(&y, &x).unwrap());
        prop_assert!(back.offset(-1.0).sup_abs() < 1e-13);
    }

    #[test]
    fn fiber_average_inverts_pullback(a in terms(2, 1.0), w in small_terms()) {
        let fib = FibrationSpec::new(grid2(), 1).unwrap();
        let omega = HermitianFormField::flat(grid2()).add(&ddbar(&field(grid2(), &w))).into_metric().unwrap();
        let u = field(fib.base(), &a);
        prop_assert!(fib.fiber_average(&fib.pullback(&u), &omega).sub(&u).sup_abs() < 1e-13);
        let phi = field(grid2(), &w);
        let psi = fib.fiber_normalized_potential(&phi, &omega, 0.5).unwrap();
        prop_assert!(fib.fiber_average(&psi, &omega).sup_abs() < 1e-13);
    }

    #[test]
    fn scenarios_round_trip_through_toml(amps in prop::collection::vec(-0.004..0.004f64, 0..3), sine in any::<bool>()) {
        let mut spec = ScenarioSpec::product(2, 1).with_label("generated");
        for (i, a) in amps.iter().enumerate() {
            let kind = if sine { ModeKind::Sin } else { ModeKind::Cos };
            spec = spec
                .with_rho(Mode { k: vec![1, i as i64, 0, 1], amplitude: *a, kind })
                .with_v(Mode { k: vec![0, 0, 1, i as i64], amplitude: *a, kind: ModeKind::Cos });
        }
        let parsed = ScenarioSpec::from_toml(&spec.to_toml()).unwrap();
        prop_assert_eq!(parsed, spec);
    }

    #[test]
    fn power_laws_are_recovered(slope in -3.0..3.0f64, scale in 0.1..10.0f64) {
        let pairs: Vec<(f64, f64)> = (0..6).map(|j| {
            let t = 0.5f64.powi(j);
            (t, scale * t.powf(slope))
        }).collect();
        let fit = exponent_fit(&pairs).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-10);
        prop_assert!((fit.intercept - scale.ln()).abs() < 1e-10);
    }
}
