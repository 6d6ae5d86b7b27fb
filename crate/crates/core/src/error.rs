use std::fmt;

use thiserror::Error;

/// `(k, m, j)` coordinates attached to an invariant violation. Unused
/// coordinates are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Coord {
    pub ap: Option<usize>,
    pub server: Option<usize>,
    pub job_type: Option<usize>,
}

impl Coord {
    pub fn ap(k: usize) -> Self {
        Self { ap: Some(k), ..Self::default() }
    }

    pub fn server(m: usize) -> Self {
        Self { server: Some(m), ..Self::default() }
    }

    pub fn ap_server(k: usize, m: usize) -> Self {
        Self { ap: Some(k), server: Some(m), job_type: None }
    }

    pub fn ap_type(k: usize, j: usize) -> Self {
        Self { ap: Some(k), server: None, job_type: Some(j) }
    }

    pub fn server_type(m: usize, j: usize) -> Self {
        Self { ap: None, server: Some(m), job_type: Some(j) }
    }

    pub fn full(k: usize, m: usize, j: usize) -> Self {
        Self { ap: Some(k), server: Some(m), job_type: Some(j) }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
        write!(f, "(k={}, m={}, j={})", show(self.ap), show(self.server), show(self.job_type))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invariant violated: {what} at {at}")]
    InvariantViolation { what: String, at: Coord },

    #[error("hazard schedule covers {have} slots, value horizon needs {need}")]
    ScheduleTooShort { have: usize, need: usize },

    #[error("enumeration budget exceeded: {size} states (budget {budget})")]
    BudgetExceeded { size: usize, budget: usize },

    #[error("instance generation failed: {0}")]
    GenerationFailed(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("index out of range at line {line}: {msg}")]
    IndexOutOfRange { line: usize, msg: String },

    #[error("unknown policy {0:?} (expected static, random, selfish, queue_aware or mdp)")]
    UnknownPolicy(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invariant(what: impl Into<String>, at: Coord) -> Self {
        Self::InvariantViolation { what: what.into(), at }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
