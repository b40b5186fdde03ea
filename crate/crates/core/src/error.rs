use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lane has no points")]
    EmptyLane,
    #[error("lane is degenerate: {0}")]
    DegenerateLane(String),
    #[error("cubic fit needs at least 4 distinct abscissae, got {distinct}")]
    RankDeficient { distinct: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid point {index}: {reason}")]
    InvalidPoint { index: usize, reason: String },
    #[error("neighborhood has {found} points, need at least 3")]
    InsufficientPoints { found: usize },
    #[error("neighborhood points are collinear or admit no upward plane")]
    DegenerateNeighborhood,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("voxel set is empty")]
    EmptyVoxelSet,
    #[error("point set is empty")]
    EmptySet,

    #[error("bad magic {found:?}, expected \"LSVL\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported cloud format version {0}")]
    VersionUnsupported(u32),
    #[error("truncated cloud file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("cloud file has {extra} trailing bytes after {count} records")]
    TrailingData { count: u64, extra: u64 },
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },

    #[error("I/O error on {}", path.display())]
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

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}
