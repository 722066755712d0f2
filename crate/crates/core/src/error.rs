use thiserror::Error;

/// Errors raised by the fingerprinting core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("symbol {symbol} out of range for alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },

    #[error("invalid alphabet size {0} (must be in 1..=256)")]
    InvalidAlphabet(usize),

    #[error("invalid axes: {0}")]
    InvalidAxes(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid probability mass function: {0}")]
    InvalidPmf(String),

    #[error("composition does not match conditioning cells: {0}")]
    CompositionMismatch(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("search budget exceeded: {needed} candidates > cap {cap}")]
    BudgetExceeded { needed: u128, cap: u128 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownStrategy { kind: &'static str, name: String, known: String },

    #[error("stale decode outcome: {0}")]
    StaleOutcome(String),

    #[error("check not applicable: {0}")]
    Inapplicable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
