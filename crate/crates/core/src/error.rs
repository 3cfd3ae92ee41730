use thiserror::Error;

/// Errors raised by the equilibrium, optimization and duopoly routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PmpError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate evaluation point: {0}")]
    Degenerate(String),

    #[error("not an equilibrium: {0}")]
    Order(String),

    #[error("no equilibrium exists (binding class {binding_class}): {reason}")]
    NoEquilibrium { binding_class: usize, reason: String },

    #[error("solver did not converge: {0}")]
    Convergence(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("step crosses a price-ordering boundary at {boundary}")]
    Boundary { boundary: f64 },

    #[error("best-response iteration did not converge after {rounds} rounds")]
    NoConvergence {
        rounds: usize,
        trajectory: Vec<Vec<f64>>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, PmpError>;

pub(crate) fn domain(msg: impl Into<String>) -> PmpError {
    PmpError::Domain(msg.into())
}
