use thiserror::Error;

use crate::gpd::GpdParams;

/// Errors produced by the inference library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A covariate value is outside the unit hypercube.
    #[error("covariate out of [0,1] at row {row}, column {col}: {value}")]
    CovariateOutOfRange { row: usize, col: usize, value: f64 },

    /// The likelihood maximizer hit its iteration cap before becoming stationary.
    #[error("MLE did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NotConverged {
        best: GpdParams,
        iterations: usize,
        grad_norm: f64,
    },

    /// No starting point with finite log-posterior could be located.
    #[error("MCMC initialization failed: {0}")]
    Initialization(String),

    /// The ball around `x` contains no covariate observations, so `p_hat` is zero.
    #[error("no covariate mass in the ball around x = {x:?}")]
    NoCovariateMass { x: Vec<f64> },

    /// Quantile inversion could not bracket the requested level.
    #[error("quantile bracket exceeded: {0}")]
    Bracket(String),
}

impl Error {
    /// Short machine-readable code for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::CovariateOutOfRange { .. } => "covariate_out_of_range",
            Error::NotConverged { .. } => "not_converged",
            Error::Initialization(_) => "initialization",
            Error::NoCovariateMass { .. } => "no_covariate_mass",
            Error::Bracket(_) => "bracket",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
