//! Error type shared by every module of the crate.

use thiserror::Error;

use crate::moments::MomentState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter inequality does not hold. The message names it.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("firm index {firm} out of range for {n_firms} firms")]
    Index { firm: usize, n_firms: usize },

    /// Regression history without price variation.
    #[error("degenerate history: {0}")]
    DegenerateHistory(String),

    #[error("non-finite value encountered at tau = {tau}")]
    StepSize { tau: f64 },

    /// Limit detection hit the tau ceiling; the last state is attached.
    #[error("not converged by tau = {}", .state.tau)]
    NotConverged { state: Box<MomentState> },

    #[error("value out of admissible range: {0}")]
    Range(String),

    #[error("empty support: {0}")]
    EmptySupport(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    /// Iterative solver ran out of iterations.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    SolverNotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Failure inside one run of an ensemble.
    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
