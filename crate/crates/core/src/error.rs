use thiserror::Error;

use crate::chain::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The chain failed one or more model checks other than irreducibility.
    #[error("invalid chain: {0}")]
    InvalidChain(ValidationReport),

    /// The transition graph is not strongly connected.
    #[error("reducible chain: {0}")]
    Reducible(ValidationReport),

    /// λ ≥ μ. Mean queue length has no stationary meaning.
    #[error("unstable system: arrival rate lambda = {lambda} is not below completion rate mu = {mu} (rho = {rho})")]
    Unstable { lambda: f64, mu: f64, rho: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {what} (condition estimate {condition:e})")]
    Numerical { what: String, condition: f64 },

    /// The uniformization series needed more terms than the caller allowed.
    #[error("step budget of {budget} exhausted; partial estimate {partial} with error bound {error_bound:e}")]
    BudgetExhausted {
        budget: usize,
        partial: f64,
        error_bound: f64,
    },

    #[error("invalid simulation config: {0}")]
    Config(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI: 1 usage/parse, 2 domain, 3 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Parse(_) | Error::Config(_) | Error::Io(_) => 1,
            Error::InvalidChain(_)
            | Error::Reducible(_)
            | Error::Unstable { .. }
            | Error::Domain(_)
            | Error::Estimation(_) => 2,
            Error::Numerical { .. } | Error::BudgetExhausted { .. } => 3,
        }
    }
}
