use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong inside the library.
///
/// Variants split into two families: input/parameter validation problems
/// ([`Error::is_validation`]) and numerical failures (solver did not converge,
/// precision exhausted, backends disagree, ...).
#[derive(Debug, Error)]
pub enum Error {
    #[error("the zero polynomial has no well-defined root set")]
    ZeroPolynomial,

    #[error("polynomial of degree 0 has no roots")]
    ConstantPolynomial,

    #[error("composition degree {requested} exceeds the configured cap {cap}")]
    CompositionCap { requested: usize, cap: usize },

    #[error("root finder did not converge after {iterations} sweeps ({unconverged} roots still moving)")]
    NonConvergence { iterations: usize, unconverged: usize },

    #[error("certification failed at every precision up to {max_precision} bits")]
    PrecisionExhausted { max_precision: u32 },

    #[error("invalid parameter `{name}`: {constraint}")]
    InvalidParameter { name: &'static str, constraint: String },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("point list is not a cycle: closure error {closure:e} exceeds {tolerance:e}")]
    NotACycle { closure: f64, tolerance: f64 },

    #[error("atom cap exceeded: {requested} atoms requested, cap is {cap}")]
    AtomCap { requested: u128, cap: usize },

    #[error("backend capacity exceeded: {0}")]
    BackendCapacity(String),

    #[error("periodic-point backends disagree: {0}")]
    BackendDisagreement(String),

    #[error("periodic solver incomplete: found {found} of {expected} points with multiplicity")]
    Incomplete { found: usize, expected: usize },

    #[error("rate fit refused: {0}")]
    FitRefused(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("branch continuation failed: {0}")]
    Continuation(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ZeroPolynomial
                | Error::ConstantPolynomial
                | Error::InvalidParameter { .. }
                | Error::InvalidMap(_)
                | Error::Precondition(_)
                | Error::Parse(_)
                | Error::AtomCap { .. }
                | Error::CompositionCap { .. }
                | Error::BackendCapacity(_)
        )
    }

    pub(crate) fn param(name: &'static str, constraint: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            constraint: constraint.into(),
        }
    }
}
