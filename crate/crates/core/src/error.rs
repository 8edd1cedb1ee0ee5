use thiserror::Error;

use crate::sdp::SdpStatus;

/// Errors raised by the bound computations and their inputs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The Kraus-span (or Lindblad-span) condition fails, so the asymptotic
    /// bound is not linear in the number of uses.
    #[error("Heisenberg scaling possible: span condition violated for parameters {params:?}")]
    HeisenbergPossible { params: Vec<String> },

    #[error("degenerate parameter `{0}`: single-parameter bound vanishes")]
    DegenerateParameter(String),

    #[error("solver finished with status {status:?}: {detail}")]
    Solver { status: SdpStatus, detail: String },

    #[error("optimal-state recovery failed: {0}")]
    Recovery(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
