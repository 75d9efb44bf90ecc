use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shooting bracket not found for w(0) in [{lo}, {hi}]")]
    BracketNotFound { lo: f64, hi: f64 },

    #[error("ground state profile rejected: {0}")]
    InvalidProfile(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("linearized operator has {count} positive eigenvalues (expected exactly one)")]
    TooManyPositiveEigenvalues { count: usize },

    #[error("decay fit rejected: {0}")]
    DecayFit(String),

    #[error("singular or ill-conditioned system: {0}")]
    Singular(String),

    #[error("linear solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    LinearSolveDiverged { iterations: usize, residual: f64 },

    #[error("Newton iteration failed after {iterations} iterations; residual history {history:?}")]
    NewtonDiverged { iterations: usize, history: Vec<f64> },

    #[error("spike at distance {distance:.3} from the box edge (need at least {required:.3})")]
    SpikeNearBoundary { distance: f64, required: f64 },

    #[error("configuration outside the admissible set: {0}")]
    InvalidConfiguration(String),

    #[error("solution lost positivity: min value {0:.3e}")]
    NotPositive(f64),

    #[error("no feasible restart produced a value")]
    NoFeasibleRestart,

    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("singular coupling: {0}")]
    SingularCoupling(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
