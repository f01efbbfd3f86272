use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("division by zero while evaluating expression")]
    DivisionByZero,

    #[error("schema violation in field `{field}`: {reason}")]
    Schema { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible reference point: {0}")]
    Infeasible(String),

    #[error("missing reference multiplier: {0}")]
    MissingMultiplier(String),

    #[error("{what} exceeds the enumeration cap ({actual} > {cap})")]
    CapExceeded {
        what: &'static str,
        actual: usize,
        cap: usize,
    },

    #[error("index sets overlap: {0:?}")]
    OverlappingIndexSets(Vec<usize>),

    #[error("directional derivative is not unique: {count} solutions found{}", if *.continuum { " (plus a continuum)" } else { "" })]
    Multiplicity {
        count: usize,
        continuum: bool,
        solutions: Vec<Vec<f64>>,
    },

    #[error("multiplier check failed: {0}")]
    Multiplier(String),

    #[error("operation requires a {expected} problem, got {actual}")]
    WrongKind { expected: &'static str, actual: String },

    #[error("linear program did not terminate within the iteration limit")]
    LpIterationLimit,

    #[error("nonlinear solve failed: {0}")]
    NonlinearSolve(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
