use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MfdError>;

#[derive(Debug, Error)]
pub enum MfdError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index ({i}, {j}, {k}) out of range for dimensions {dims:?}")]
    IndexOutOfRange {
        i: usize,
        j: usize,
        k: usize,
        dims: [usize; 3],
    },

    #[error("flat index {index} out of range (length {len})")]
    FlatIndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("evaluation at a singular point: {0}")]
    Singular(String),

    #[error("{solver} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("energy divergence at t = {t}: E = {energy:.6e} exceeds {limit:.6e}")]
    EnergyDivergence { t: f64, energy: f64, limit: f64 },

    #[error("{0}")]
    Unsupported(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MfdError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        MfdError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MfdError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (solver breakdown, blow-up,
    /// singular factorization) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MfdError::SolverDiverged { .. }
                | MfdError::EnergyDivergence { .. }
                | MfdError::Singular(_)
        )
    }
}
