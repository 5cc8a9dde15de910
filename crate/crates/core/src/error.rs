use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("docs non-empty violated: corpus contains no documents")]
    EmptyCorpus,

    #[error("zero terms survive vocabulary filtering")]
    EmptyVocabulary,

    #[error("unmappable document {0}: no in-vocabulary terms")]
    Unmappable(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown document id {0:?}")]
    UnknownId(String),

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("malformed record {index} in {origin}: {reason}")]
    MalformedRecord {
        origin: String,
        index: usize,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("maximum lattice dimension {0} exceeded")]
    MaxDimExceeded(usize),

    #[error("unsupported schema version {found} (this build reads version {supported})")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("checksum mismatch: map file is truncated or corrupted")]
    Checksum,

    #[error("corrupt map file: {0}")]
    Corrupt(String),

    #[error("invalid cohort: {0}")]
    InvalidCohort(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code, used by the CLI and HTTP layers.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::EmptyCorpus => "empty_corpus",
            Error::EmptyVocabulary => "empty_vocabulary",
            Error::Unmappable(_) => "unmappable",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::UnknownId(_) => "unknown_id",
            Error::DuplicateId(_) => "duplicate_id",
            Error::MalformedRecord { .. } => "malformed_record",
            Error::Io { .. } => "io",
            Error::MaxDimExceeded(_) => "max_dim_exceeded",
            Error::SchemaVersion { .. } => "schema_version",
            Error::Checksum => "checksum",
            Error::Corrupt(_) => "corrupt",
            Error::InvalidCohort(_) => "invalid_cohort",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}
