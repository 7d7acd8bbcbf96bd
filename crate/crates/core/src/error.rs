use thiserror::Error;

/// Errors raised by the solver pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("KKT block for active rows {rows:?} is singular (condition {condition:.3e})")]
    SingularKkt { rows: Vec<usize>, condition: f64 },

    #[error("non-finite value in matrix exponential")]
    NonFinite,

    #[error("degenerate switching times: {0}")]
    Degenerate(String),

    #[error("shooting did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("switching times {first} and {second} collapsed")]
    TimesCollapsed { first: usize, second: usize },

    #[error("switching time of event {event} escaped the horizon ({side:?})")]
    TimeEscaped { event: usize, side: EscapeSide },

    #[error("problem infeasible for this parameter{}", row.map(|r| format!(" (constraint row {r})")).unwrap_or_default())]
    Infeasible { row: Option<usize> },

    #[error("no valid arc structure found after {rounds} refinement rounds")]
    NoStructure { rounds: usize },

    #[error("too few samples: {retained} retained, {needed} needed")]
    TooFewSamples { retained: usize, needed: usize },

    #[error("bracket endpoints share the same classification")]
    SameStructure,

    #[error("boundary is not affine (max residual {residual:.3e})")]
    NonAffineBoundary {
        residual: f64,
        points: Vec<Vec<f64>>,
    },

    #[error("enumeration budget of {cap} candidates exhausted")]
    Budget { cap: usize },

    #[error("I/O error: {0}")]
    Io(String),
}

/// Which end of the horizon a switching time ran into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EscapeSide {
    Start,
    End,
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
