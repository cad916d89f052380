//! Crate-wide error type.
//!
//! Numerical contracts (stochasticity drift, residual tolerances, stability
//! bounds) are enforced, not silently repaired; violations surface as typed
//! errors so callers can map them to process exit codes.

use thiserror::Error;

/// Errors produced by channel construction, analysis, simulation, and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// One-step probabilities leave [0,1] or a diagonal entry would go
    /// negative for the given geometry/time step.
    #[error("stability violation: {0}")]
    Stability(String),

    /// An iterative solver did not reach its residual target within budget.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// A quantity underflowed or degenerated before it could be analyzed.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Column-stochasticity drifted beyond tolerance in a matrix power.
    #[error("stochasticity drift {drift:.3e} exceeds {tol:.3e} ({context})")]
    Drift {
        drift: f64,
        tol: f64,
        context: String,
    },

    /// Vector/matrix dimensions do not match.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A stationary averaging window starts before the channel memory has
    /// been flushed.
    #[error("window error: {0}")]
    Window(String),

    /// A calibration target is outside the bracketed range.
    #[error("range error: {0}")]
    Range(String),

    /// Projected simulation work exceeds the configured budget.
    #[error("budget exceeded: projected work {projected} > budget {budget}")]
    Budget { projected: u64, budget: u64 },

    /// Molecule counts left the representable integer range.
    #[error("count overflow: {0}")]
    Overflow(String),

    /// Not enough data for the requested estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Configuration file is malformed or contains unknown keys.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 budget, 4 numerical, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Budget { .. } => 3,
            Error::Stability(_)
            | Error::Convergence(_)
            | Error::Degenerate(_)
            | Error::Drift { .. }
            | Error::Dimension(_)
            | Error::Window(_)
            | Error::Range(_)
            | Error::Overflow(_)
            | Error::InsufficientData(_) => 4,
            Error::Io(_) => 1,
        }
    }
}
