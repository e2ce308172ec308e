use thiserror::Error;

/// Errors raised by the operators, solvers and front end.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two fields or grids that were expected to match do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A quadrature or extrapolation whose refinements disagree.
    #[error("{what} did not converge: estimates {coarse:e} and {fine:e}")]
    Convergence {
        what: String,
        coarse: f64,
        fine: f64,
    },

    /// An iterative linear solve that stopped above tolerance.
    #[error("linear solver stalled after {iterations} iterations, relative residual {residual:e}")]
    Solver { iterations: usize, residual: f64 },

    /// A quotient u/v evaluated where v vanishes.
    #[error("degenerate quotient: {0}")]
    DegenerateQuotient(String),

    /// Malformed configuration or input file.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for errors caused by numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. } | Error::Solver { .. } | Error::DegenerateQuotient(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
