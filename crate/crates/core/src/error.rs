use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-monotone timestamps at frame {index}")]
    NonMonotoneTimestamps { index: usize },

    #[error("non-binary cell value {value} at frame {frame}, cell {cell}")]
    NonBinaryCell { frame: usize, cell: usize, value: u8 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("ROI of site '{site}' exceeds grid bounds")]
    RoiOutOfBounds { site: String },

    #[error("timestamp misalignment: {0}")]
    Misaligned(String),

    #[error("degenerate marginal: probability {0} must lie strictly inside (0, 1)")]
    DegenerateMarginal(f64),

    #[error("infeasible covariance target for pair ({k}, {l}): {gamma} outside [{lower}, {upper}]")]
    InfeasibleCovariance {
        k: usize,
        l: usize,
        gamma: f64,
        lower: f64,
        upper: f64,
    },

    #[error("root search for pair ({k}, {l}) did not converge (residual {residual:e})")]
    NonConvergent { k: usize, l: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Errors that stem from bad input data or parameters rather than the
    /// environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
