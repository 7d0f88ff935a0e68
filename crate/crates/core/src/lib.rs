//! Numerical laboratory for Ricci-flat Kähler metrics on flat torus
//! fibrations `C^n/(Z^n + iZ^n) → C^m/(Z^m + iZ^m)` whose Kähler class
//! degenerates towards the pullback of a class from the base.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod fibration;
pub mod field;
pub mod form;
pub mod grid;
pub mod linalg;
pub mod scenario;
pub mod solver;
pub mod semiflat;
pub mod spectral;
pub mod weil_petersson;

pub use error::{LabError, Result};
pub use field::{BaseField, PeriodicScalarField};
pub use form::{ddbar, integrate, min_eigenvalue, top_ratio, trace_pair, FiberForm, HermitianFormField};
pub use grid::GridSpec;
pub use fibration::FibrationSpec;
pub use scenario::{build_family, AdiabaticFamily, JacobianDensity, Mode, ModeKind, ScenarioSpec};
pub use solver::{continuation_sweep, ma_residual, solve_potential, SolveReport, SolverConfig};
