use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the planning core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{what} did not converge within {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },
    #[error("{what} is not Schur stable (spectral radius {spectral_radius})")]
    Stability { what: &'static str, spectral_radius: f64 },
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("admissible set construction failed: {0}")]
    Construction(String),
    #[error("edge weight propagation did not settle within {steps} steps")]
    Weight { steps: usize },
    #[error("goal node {goal} unreachable from start node {start}")]
    NoPath {
        start: usize,
        goal: usize,
        /// Connected component of the start node, sorted by index.
        reachable: Vec<usize>,
    },
    #[error("invalid start: {0}")]
    Start(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn dim_err(context: &'static str, expected: (usize, usize), found: (usize, usize)) -> Error {
    Error::Dimension {
        context,
        expected: alloc::format!("{}x{}", expected.0, expected.1),
        found: alloc::format!("{}x{}", found.0, found.1),
    }
}
