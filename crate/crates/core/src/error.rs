use thiserror::Error;

use crate::panel::FeDim;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by dataset construction, estimation, and corrections.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate observation ({i}, {j}, {t})")]
    DuplicateObs { i: i64, j: i64, t: i64 },

    #[error("outcome at ({i}, {j}, {t}) must be 0 or 1, got {y}")]
    NonBinaryOutcome { i: i64, j: i64, t: i64, y: f64 },

    #[error("non-finite value in regressor '{name}' at ({i}, {j}, {t})")]
    NonFiniteRegressor { name: String, i: i64, j: i64, t: i64 },

    #[error("no estimable rows: no pair has two consecutive periods")]
    NoLaggedRows,

    #[error("{dim} level {level} has zero total weight")]
    ZeroWeightLevel { dim: FeDim, level: usize },

    #[error("alternating projections did not converge after {sweeps} sweeps (last delta {delta:.3e})")]
    ProjectionNoConvergence { sweeps: usize, delta: f64 },

    #[error("regressor '{name}' is collinear with the fixed effects")]
    Collinear { name: String },

    #[error("Newton-Raphson did not converge after {iterations} iterations (last step {delta:.3e}, deviance {deviance:.6e})")]
    NoConvergence {
        iterations: usize,
        delta: f64,
        deviance: f64,
    },

    #[error("no identifiable sample after separation screening")]
    NoIdentifiableSample,

    #[error("singular matrix in {context}")]
    Singular { context: String },

    #[error("half panel {which} failed: {source}")]
    HalfPanel {
        which: String,
        #[source]
        source: Box<Error>,
    },

    #[error("long-run denominator 1 - \u{0394}y not positive on {count} rows (first at ({i}, {j}, {t}))")]
    LongRunDenominator {
        count: usize,
        i: i64,
        j: i64,
        t: i64,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// True when the error reflects bad input rather than a numerical failure.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::DuplicateObs { .. }
                | Error::NonBinaryOutcome { .. }
                | Error::NonFiniteRegressor { .. }
                | Error::NoLaggedRows
                | Error::Invalid(_)
        )
    }
}
