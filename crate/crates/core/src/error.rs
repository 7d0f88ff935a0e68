use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("field contains a non-finite value at grid index {index}")]
    NonFinite { index: usize },

    #[error("form is not positive: minimum eigenvalue {min_eigenvalue:.6e} at grid index {index} (point {point:?})")]
    Positivity {
        min_eigenvalue: f64,
        index: usize,
        point: Vec<f64>,
    },

    #[error("form was not constructed as a metric")]
    NotMetric,

    #[error("parameter t must be positive, got {0}")]
    NonPositiveT(f64),

    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("line search reached the damping floor (residual {residual:.3e}, positivity violated: {positivity_violated})")]
    DampingFloor {
        residual: f64,
        positivity_violated: bool,
    },

    #[error("fiber {fiber}: {source}")]
    Fiber {
        fiber: usize,
        #[source]
        source: Box<LabError>,
    },

    #[error("solvability identity violated: relative defect {defect:.3e}")]
    Solvability { defect: f64 },

    #[error("density is not constant on fiber {fiber}: relative oscillation {oscillation:.3e}")]
    FiberConstancy { fiber: usize, oscillation: f64 },

    #[error("fiber volume-form identity residual {residual:.3e} exceeds tolerance")]
    VolumeIdentity { residual: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("exponent fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
}

impl LabError {
    /// Errors caused by bad user input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            LabError::InvalidGrid(_)
                | LabError::InvalidInput(_)
                | LabError::NonFinite { .. }
                | LabError::Positivity { .. }
                | LabError::NonPositiveT(_)
                | LabError::Empty(_)
        )
    }
}
