use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("capacity solver did not converge after {max_iter} iterations (bracket [{lower}, {upper}] bits)")]
    NonConvergence { max_iter: usize, lower: f64, upper: f64 },

    #[error("state {state} has dispersion {value:e} below the floor {floor:e}")]
    DegenerateDispersion { state: usize, value: f64, floor: f64 },

    #[error("invalid state model: {0}")]
    InvalidModel(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("Markov kernel is not ergodic (irreducible = {irreducible}, aperiodic = {aperiodic})")]
    NotErgodic { irreducible: bool, aperiodic: bool },

    #[error("Markov kernel is not diagonalizable")]
    NonDiagonalizable,

    #[error("epsilon {0} outside its admissible range")]
    InvalidEpsilon(f64),

    #[error("second-order exponent {got} incompatible with model (expected {expected})")]
    BetaMismatch { expected: f64, got: f64 },

    #[error("exact evaluation needs {needed} atoms, cap is {cap}")]
    BudgetExceeded { needed: f64, cap: f64 },

    #[error("enumeration of {needed} conditional-type assignments exceeds cap {cap}")]
    EnumerationTooLarge { needed: f64, cap: f64 },

    #[error("bound only valid for n >= {n_min}")]
    OutOfValidity { n_min: f64 },

    #[error("conditional type inconsistent with state type: {0}")]
    InconsistentType(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}
