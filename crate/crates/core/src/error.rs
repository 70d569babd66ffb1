use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by problem construction, estimators, allocators and samplers.
#[derive(Debug, Error)]
pub enum LfiError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("evidence is zero: no parameter value can produce the observed data")]
    DegenerateProblem,

    #[error("parameter {0} lies outside the problem support")]
    OutsideSupport(String),

    #[error("total particle weight is zero")]
    ZeroTotalWeight,

    #[error("likelihood estimate undefined: parameter {index} has no simulations")]
    UndefinedLikelihood { index: usize },

    #[error("plug-in evidence is zero: no simulation was accepted")]
    DegenerateEstimate,

    #[error("target function is constant over the support; the optimal density vanishes")]
    DegenerateTarget,

    #[error("allocation is undefined: {0}")]
    UndefinedAllocation(String),

    #[error("cannot give {needed} parameters a positive count with a budget of {budget}")]
    InfeasibleAllocation { needed: usize, budget: u64 },

    #[error("sampling drew a parameter where the importance density is zero")]
    ZeroProposalDensity,

    #[error("variance integral does not converge: {0}")]
    DivergentIntegral(String),

    #[error("mixture proposal density underflowed to zero")]
    MixtureUnderflow,

    #[error("proposal fell outside the prior support on {0} consecutive attempts")]
    ProposalRejected(usize),

    #[error("unknown token `{token}` for {what}")]
    UnknownToken { what: &'static str, token: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = LfiError> = std::result::Result<T, E>;

impl LfiError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LfiError::Io {
            path: path.into(),
            source,
        }
    }
}
