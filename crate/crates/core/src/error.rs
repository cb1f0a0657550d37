use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown task `{0}` (expected australian, german or banknote)")]
    UnknownTask(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file contains no data rows")]
    EmptyDataset { path: PathBuf },

    #[error("{path}: row {row} has {found} attributes, expected {expected}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("class column holds {0} distinct labels, expected 2")]
    NotBinary(usize),

    #[error("d_common = {d_common} is smaller than the native feature count {native}")]
    DimensionTooSmall { d_common: usize, native: usize },

    #[error("SES fraction {0} outside [0, 0.4]")]
    SesFraction(f64),

    #[error("SES filter index {index} is not in the training split of this dataset")]
    SesMismatch { index: usize },

    #[error("feature width {found} does not match network input dimension {expected}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("index set is empty")]
    EmptyIndexSet,

    #[error("index {index} out of range for {len} instances")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("population member {0} has not been trained or assessed")]
    Untrained(u64),

    #[error("selection windows overlap: top takes {top} ranks, mid window starts at rank {mid_start}")]
    OverlappingSelection { top: usize, mid_start: usize },

    #[error("breeding pool is empty")]
    EmptyPool,

    #[error("individual {0} has no twin sibling in the offspring list")]
    Unpaired(u64),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("weight snapshots have different lengths ({0} vs {1})")]
    SnapshotLength(usize, usize),

    #[error("reference network for {task} diverged on every retry")]
    ReferenceDiverged { task: String },

    #[error("empty calibration grid")]
    EmptyGrid,

    #[error("incomplete report: {0}")]
    PartialReport(String),

    #[error("malformed file {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
