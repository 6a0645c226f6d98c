use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample size exceeds the configured cap of {cap}")]
    Overflow { cap: u64 },

    #[error("initial potential {potential} exceeds 1 for m = {m}; choose a larger m")]
    Infeasible { m: u64, potential: f64 },

    #[error("interval arithmetic could not certify a candidate at step {step}, coordinate {coordinate}")]
    PrecisionExhausted { step: u64, coordinate: usize },

    #[error("conditional-mean contract violated: {0}")]
    ContractViolation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} needs {needed} units, over the budget of {budget}")]
    BudgetExceeded {
        what: &'static str,
        needed: u128,
        budget: u64,
    },

    #[error("unsupported field GF({p}^{e})")]
    UnsupportedField { p: u64, e: u32 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("internal invariant broken: {0}")]
    Internal(String),
}

impl Error {
    /// True for errors caused by caller-supplied parameters rather than by
    /// the computation itself.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::InvalidParameter(_)
                | Error::DimensionMismatch { .. }
                | Error::UnsupportedField { .. }
                | Error::BudgetExceeded { .. }
                | Error::Overflow { .. }
        )
    }
}
