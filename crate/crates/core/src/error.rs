use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("series/iteration failed to converge: {context} (residual {residual:.3e})")]
    ConvergenceFailure { context: String, residual: f64 },

    #[error("quadrature failed: {context} (error estimate {estimate:.3e} > tol {tol:.3e})")]
    QuadratureFailure {
        context: String,
        estimate: f64,
        tol: f64,
    },

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("matrix factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-uniform grid: {0}")]
    NonUniformGrid(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("missing increments: {0}")]
    MissingIncrements(String),

    #[error("truncation horizon too short: <M>_T / <M>_Tmax = {ratio:.4} exceeds {limit}")]
    Truncation { ratio: f64, limit: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
