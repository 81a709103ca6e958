use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node id {id} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { id: usize, num_nodes: usize },

    #[error("duplicate node id {0} in selection")]
    DuplicateNode(usize),

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("truncated payload in {what}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("parse error in {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("graph has no labels but the operation requires them")]
    MissingLabels,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("requested {clients} clients but only {available} nodes are available")]
    TooManyClients { clients: usize, available: usize },

    #[error("unknown modality {0:?}")]
    UnknownModality(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short class name used when recording failed runs.
    pub fn class(&self) -> &'static str {
        match self {
            Error::NodeOutOfRange { .. } | Error::DuplicateNode(_) => "structural",
            Error::MissingFile(_) => "missing_file",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::TruncatedPayload { .. } => "truncated_payload",
            Error::Parse { .. } => "parse",
            Error::InvalidParam(_) => "invalid_param",
            Error::MissingLabels => "missing_labels",
            Error::EmptyInput(_) => "empty_input",
            Error::TooManyClients { .. } => "too_many_clients",
            Error::UnknownModality(_) => "unknown_modality",
            Error::NonFinite(_) => "non_finite",
            Error::UnknownColumn(_) => "unknown_column",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
