use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: PathBuf,
        found: [u8; 4],
        expected: [u8; 4],
    },
    #[error("{path}: unsupported version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },
    #[error("{path}: truncated payload ({detail})")]
    Truncated { path: PathBuf, detail: String },
    #[error("non-finite value at vector {index}, component {component}")]
    NonFinite { index: usize, component: usize },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("object {object_id}: {what} dimension {found}, expected {expected}")]
    ObjectDimMismatch {
        object_id: String,
        what: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("dimension mismatch: {what} has {found}, expected {expected}")]
    DimMismatch {
        what: String,
        found: usize,
        expected: usize,
    },
    #[error("{path}:{line}: unknown label {label:?}")]
    UnknownLabel {
        path: PathBuf,
        line: usize,
        label: String,
    },
    #[error("duplicate object id {0:?}")]
    DuplicateId(String),
    #[error("class {class:?} has {count} object(s); at least 2 are required to split")]
    ClassTooSmall { class: String, count: usize },
    #[error("empty ground-view set: modality missing, route the object to retrieval")]
    MissingGroundViews,
    #[error("model mode {mode} requires the {modality} modality")]
    MissingModality {
        mode: &'static str,
        modality: &'static str,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
