use thiserror::Error;

/// Errors produced by the simulation and verification routines.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid configuration or argument values (dimension mismatch, bounds out of range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An evaluation point lies outside the domain a spec or histogram was declared on.
    #[error("out of domain: {0}")]
    OutOfDomain(String),

    /// A quadrature did not reach the requested tolerance within its subdivision budget.
    #[error("quadrature did not converge: {0}")]
    QuadratureNonconvergence(String),

    /// A Monte Carlo estimate is too noisy to support the requested decision.
    #[error("monte carlo variance too high: {0}")]
    McVarianceTooHigh(String),

    /// A numeric precondition of the underlying theory is violated
    /// (e.g. `d >= sum 1/h_l`, empty admissible interval).
    #[error("condition violated: {0}")]
    ConditionViolated(String),

    /// The configured cell budget would be exceeded.
    #[error("cell budget exceeded: requested {requested} cells, budget {budget}")]
    BudgetExceeded { requested: usize, budget: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidInput(msg.into())
    }
}
