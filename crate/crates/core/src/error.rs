use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inverse transform left an imaginary residue of {0:.3e}")]
    ImaginaryResidue(f64),

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("trajectory diverged at t = {time} (max |u| = {max_abs:.3e})")]
    Divergence { time: f64, max_abs: f64 },

    #[error("dense assembly refused for N = {n} (limit {limit})")]
    DenseGuard { n: usize, limit: usize },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("line search failed to reduce the residual (norm {0:.3e})")]
    LineSearch(f64),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("orbit collapsed onto a steady state (|F(anchor)| = {0:.3e})")]
    DegenerateOrbit(f64),

    #[error("no periodicity detected: {0}")]
    NoPeriodicity(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed data file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that mean "the numerics did not find a solution" as
    /// opposed to bad input or IO trouble.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::LineSearch(_)
                | Error::NotConverged { .. }
                | Error::DegenerateOrbit(_)
                | Error::NoPeriodicity(_)
                | Error::Eigensolver(_)
        )
    }
}
