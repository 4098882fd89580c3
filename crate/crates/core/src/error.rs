use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate hyperplane normal: largest component {largest:e} below tolerance {tolerance:e}")]
    DegenerateNormal { largest: f64, tolerance: f64 },

    #[error("projected coefficient {alpha:e} is nonzero but below chart tolerance {tolerance:e}")]
    CoefficientOverflow { alpha: f64, tolerance: f64 },

    #[error("slice does not intersect the domain")]
    EmptySlice,

    #[error("lifted point {point:?} lies outside the 3D box")]
    OutsideDomain { point: [f64; 3] },

    #[error("malformed NSF1 header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} values, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("blow-up at t = {time}: coefficient magnitude {magnitude:e} exceeds 1e12; reduce dt")]
    BlowUp { time: f64, magnitude: f64 },

    #[error("a-priori bound violated: {0}")]
    BoundViolation(String),

    #[error("stratification verdict disagrees with voxel-volume oracle: {0}")]
    Inconsistency(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
