use std::fmt;

use thiserror::Error;

/// A single failed validation rule, addressed by its dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("integrator fault at t = {t:.9} s: {detail}")]
    IntegratorFault { t: f64, detail: String },

    #[error("kalman filter covariance corrupted at sample {index}: innovation variance {variance}")]
    CovarianceCorrupted { index: usize, variance: f64 },

    #[error("outside the valid domain: {0}")]
    Domain(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed:\n{}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("phase {phase}: {source}")]
    Phase {
        phase: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// True for validation-class failures (bad input rather than a failed run).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParameter { .. } | Error::Parse { .. } | Error::Validation(_) | Error::Domain(_) => true,
            Error::Phase { source, .. } | Error::Scenario { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    /// True when the root cause is an integrator blow-up or a corrupted filter.
    pub fn is_fault(&self) -> bool {
        match self {
            Error::IntegratorFault { .. } | Error::CovarianceCorrupted { .. } => true,
            Error::Phase { source, .. } | Error::Scenario { source, .. } => source.is_fault(),
            _ => false,
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
