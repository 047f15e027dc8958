use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum HblError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Space is too small for the requested operation (e.g. isoperimetric
    /// profiles need at least one proper subset).
    #[error("degenerate space: {0}")]
    DegenerateSpace(String),

    /// Input data violates a structural invariant (metric axioms, weight
    /// positivity, schema mismatch, ...).
    #[error("data error: {0}")]
    DataError(String),

    #[error("parse error: {0}")]
    ParseError(String),

    /// The approximate midpoint property fails for a pair that the atom
    /// splitting construction needs.
    #[error("approximate midpoint property fails for pair ({x}, {y})")]
    AmpFailure { x: String, y: String },

    /// Atom splitting exceeded its iteration cap without reaching the
    /// target scale.
    #[error("atom splitting did not contract: {0}")]
    NonContraction(String),

    #[error("linear program solver failed: {0}")]
    SolverFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HblError>;
