use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped so a caller can map them onto coarse failure classes:
/// configuration/validation problems, numerical failures detected by guards
/// (norm drift, node stalls, degenerate inputs), and statistical
/// invariant-check failures reported by the experiment runners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("wavefunction norm drifted by {drift:.3e} (limit {limit:.1e})")]
    NormDrift { drift: f64, limit: f64 },

    #[error("non-finite amplitude encountered at node {node} during evolution")]
    NonFinite { node: usize },

    #[error("trajectory hit a wavefunction node at t={t:.6e} (|psi|^2={density:.3e})")]
    Node { t: f64, density: f64 },

    #[error("trajectory stalled near a node at t={t:.6e}: step size {step:.3e} below minimum")]
    NodeStall { t: f64, step: f64 },

    #[error("{stalled} of {total} ensemble points stalled (limit {limit_percent}%)")]
    TooManyStalls {
        stalled: usize,
        total: usize,
        limit_percent: f64,
    },

    #[error("rejection sampling acceptance rate {rate:.3e} too low; rescale the envelope")]
    LowAcceptance { rate: f64 },

    #[error("cell {cell} holds ensemble mass but no |psi|^2 mass")]
    EmptySupport { cell: usize },

    #[error("signal fit refused: {0}")]
    FitRefused(String),

    #[error("invariant check failed: {0}")]
    InvariantFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse failure class used for process exit codes.
    pub fn exit_class(&self) -> ExitClass {
        match self {
            Error::InvalidInput(_) | Error::Config(_) | Error::Io(_) => ExitClass::Config,
            Error::InvariantFailed(_) => ExitClass::Invariant,
            _ => ExitClass::Numerical,
        }
    }
}

/// Failure classes surfaced as distinct CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Config,
    Numerical,
    Invariant,
}
