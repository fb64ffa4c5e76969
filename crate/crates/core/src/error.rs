use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SvlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SvlError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("ill-formed volume header: {0}")]
    Header(String),

    #[error("payload size mismatch: expected {expected} bytes, found {actual}")]
    PayloadSize { expected: usize, actual: usize },

    #[error("unknown dtype tag {0:?}")]
    UnknownDtype(String),

    #[error("dtype mismatch: file holds {found}, caller expected {expected}")]
    DtypeMismatch { expected: String, found: String },

    #[error("invalid mask value {0} (masks hold only 0 or 1)")]
    MaskValue(u8),

    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch([usize; 3], [usize; 3]),

    #[error("label {0} is not present in the volume")]
    LabelAbsent(u32),

    #[error("no labeled voxels available to fill from")]
    NoLabeledVoxels,

    #[error("packing failed: {0}")]
    Packing(String),

    #[error("predictor returned a {got:?} mask for a {expected:?} patch")]
    PredictorOutput { expected: [usize; 3], got: [usize; 3] },

    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error("matching needs at least two scans, got {0}")]
    TooFewScans(usize),

    #[error("no rotation available between scans {0} and {1}")]
    MissingRotation(usize, usize),

    #[error("labels cover voxel {0:?} outside the particle mask")]
    LabelOutsideMask([usize; 3]),

    #[error("a ground-truth ledger is required: {0}")]
    MissingLedger(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl SvlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SvlError::Io {
            path: path.into(),
            source,
        }
    }
}
