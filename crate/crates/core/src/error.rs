use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PatError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PatError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value produced by {layer}")]
    NonFinite { layer: String },

    #[error("degenerate max: autocorrelation is identically zero, cannot normalize")]
    DegenerateMax,

    #[error("usage error: {0}")]
    Usage(String),

    #[error("unsupported operation: {0} has no vector-Jacobian product")]
    Unsupported(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit quality gate failed: validation MSE {achieved:.3e} exceeds gate {gate:.3e}")]
    FitQuality { achieved: f64, gate: f64 },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("covariance is not positive semi-definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension {dim} is constant across the dataset; cannot min-max normalize")]
    DegenerateDimension { dim: usize },

    #[error("invalid class index {index} for {classes} classes")]
    InvalidClass { index: usize, classes: usize },

    #[error("training aborted at epoch {epoch}, batch {batch}: {source}")]
    Training {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<PatError>,
    },

    #[error("non-finite loss")]
    NanLoss,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PatError {
    pub(crate) fn dims(context: impl Into<String>, expected: usize, got: usize) -> Self {
        PatError::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PatError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by arithmetic rather than by bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            PatError::NonFinite { .. }
            | PatError::DegenerateMax
            | PatError::NanLoss
            | PatError::NotPsd { .. }
            | PatError::FitQuality { .. } => true,
            PatError::Training { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub(crate) fn check_len(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(PatError::dims(context, expected, got))
    }
}
