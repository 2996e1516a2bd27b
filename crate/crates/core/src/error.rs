//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Structural problem in a binary or text data file, located by byte offset.
    #[error("{path}: {detail} (byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        detail: String,
    },

    /// A value that must be finite was NaN or infinite.
    #[error("{path}: non-finite value at row {row}, col {col} (byte offset {offset})")]
    NonFinite {
        path: PathBuf,
        row: usize,
        col: usize,
        offset: u64,
    },

    /// Problem in a line-oriented text file.
    #[error("{path}: line {line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("label {id} out of range for num_classes={num_classes} ({context})")]
    LabelOutOfRange {
        id: u64,
        num_classes: usize,
        context: String,
    },

    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },

    #[error("invalid shape: {detail}")]
    InvalidShape { detail: String },

    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },

    /// Not enough data to satisfy an operation's preconditions.
    #[error("insufficient data: {detail}")]
    InsufficientData { detail: String },

    /// Training diverged to a non-finite loss.
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    /// A manifest record is inconsistent with what a command needs.
    #[error("manifest record '{utt_id}': {detail}")]
    ManifestRecord { utt_id: String, detail: String },

    /// A dataset failed validation; violations are carried as text.
    #[error("manifest validation failed:\n{report}")]
    ManifestInvalid { report: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            detail: detail.into(),
        }
    }

    pub fn invalid_config(detail: impl Into<String>) -> Self {
        Error::InvalidConfig {
            detail: detail.into(),
        }
    }

    pub fn insufficient(detail: impl Into<String>) -> Self {
        Error::InsufficientData {
            detail: detail.into(),
        }
    }

    pub fn dim_mismatch(detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            detail: detail.into(),
        }
    }

    /// True for errors that indicate inconsistent or unusable input data,
    /// as opposed to failed validation of a manifest or configuration; the
    /// CLI maps the two groups to distinct exit codes.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::ManifestInvalid { .. } | Error::InvalidConfig { .. }
        )
    }
}
