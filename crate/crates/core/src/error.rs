use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("field has {got} values, grid expects {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("kernel produced a non-finite value at offset ({0}, {1}, {2})")]
    KernelNotFinite(i64, i64, i64),

    #[error("vector convolution requires an orientation")]
    OrientationUnset,

    #[error("packing fraction n3 = {value:.4e} >= 1 at node ({i}, {j}, {k})")]
    PackingViolation { value: f64, i: usize, j: usize, k: usize },

    #[error("logarithm of nonpositive argument {0}")]
    LogDomain(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {cycles} cycles (relative residual {residual:.3e})")]
    SolverDiverged {
        cycles: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("non-finite value in stage `{stage}` at node {node}")]
    NonFinite { stage: String, node: usize },

    #[error("outer iteration did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    /// Short machine-readable tag used by the CLI exit-code contract.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Io(_) | Error::Format(_) => "io",
            Error::SolverDiverged { .. } | Error::NotConverged(_) => "convergence",
            Error::NonFinite { .. } | Error::PackingViolation { .. } | Error::LogDomain(_) => {
                "numerics"
            }
            _ => "internal",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
