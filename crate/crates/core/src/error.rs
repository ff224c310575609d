use std::path::PathBuf;

use thiserror::Error;

/// A rejected CSV row: 1-based line number and reason.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input at line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("{} row(s) rejected: {}", .0.len(), join_rows(.0))]
    RejectedRows(Vec<RowError>),

    #[error("empty catalog")]
    EmptyCatalog,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {x} lies outside the kernel domain [{lo}, {hi}]")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },

    #[error("conditional intensity is zero at event {index}")]
    ZeroIntensity { index: usize },

    #[error("inconsistent state: {0}")]
    Inconsistent(String),

    #[error("triggering rate {0} reached the subcriticality limit 0.99")]
    Supercritical(f64),

    #[error("monotone program infeasible; violated check points: {0:?}")]
    Infeasible(Vec<f64>),

    #[error("monotone solver did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("too few events to fit ({0}, need at least 10)")]
    TooFewEvents(usize),

    #[error("generation cap {0} exceeded while simulating offspring")]
    GenerationCap(usize),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

fn join_rows(rows: &[RowError]) -> String {
    rows.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used by the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Malformed { .. } => "malformed",
            Error::RejectedRows(_) => "rejected_rows",
            Error::EmptyCatalog => "empty_catalog",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::OutsideDomain { .. } => "outside_domain",
            Error::ZeroIntensity { .. } => "zero_intensity",
            Error::Inconsistent(_) => "inconsistent",
            Error::Supercritical(_) => "supercritical",
            Error::Infeasible(_) => "infeasible",
            Error::NoConvergence(_) => "no_convergence",
            Error::TooFewEvents(_) => "too_few_events",
            Error::GenerationCap(_) => "generation_cap",
            Error::Precondition(_) => "precondition",
            Error::Serde(_) => "serde",
        }
    }
}
