use std::fmt;

use thiserror::Error;

/// A single violated invariant, named by the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {}", join(.0))]
    InvalidConfig(Vec<FieldError>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported derivative order {0} (supported: 1..=6)")]
    UnsupportedOrder(usize),

    #[error("non-finite integrand value {value} at node z = {node}")]
    NonFinite { node: f64, value: f64 },

    #[error("degenerate invariant measure: nu = 0")]
    DegenerateMeasure,

    #[error("solvability violated: source mean {mean:e} exceeds tolerance {tol:e}")]
    Solvability { mean: f64, tol: f64 },

    #[error("degenerate inner layer: nu * dy*/dz vanishes")]
    DegenerateInnerLayer,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("simulation: {0}")]
    Simulation(String),
}

fn join(errs: &[FieldError]) -> String {
    errs.iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
