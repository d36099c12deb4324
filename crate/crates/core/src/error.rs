use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("{path}: parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed for {id}: {reason}")]
    Validation { id: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("word {0:?} has no concept group")]
    UnmappedWord(String),

    #[error("no candidate target word for {0:?}")]
    NoCandidate(String),

    #[error("provider {provider} unavailable: {message}")]
    ProviderUnavailable { provider: String, message: String },

    #[error("provider {provider} violated the embedding contract: {message}")]
    ProviderContractViolation { provider: String, message: String },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("token index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("caption {0} has no eligible source word")]
    NoSourceWord(String),

    #[error("consensus requires at least one model choice")]
    EmptyConsensus,

    #[error("substituting {0:?} with itself")]
    NoOpSubstitution(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("drop rate is undefined for a base R@1 of zero")]
    UndefinedDropRate,

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        let path = path.as_ref().to_path_buf();
        if source.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingInput(path);
        }
        Error::Io { path, source }
    }

    /// Builds a [`Error::Parse`] with a byte offset recovered from the
    /// line/column reported by `serde_json`.
    pub(crate) fn parse(path: impl AsRef<Path>, input: &str, err: serde_json::Error) -> Self {
        let (line, column) = (err.line(), err.column());
        Error::Parse {
            path: path.as_ref().to_path_buf(),
            offset: byte_offset(input, line, column),
            line,
            column,
            message: err.to_string(),
        }
    }
}

/// Converts a 1-based line/column pair into a byte offset into `input`.
fn byte_offset(input: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = input
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(input.len())
}
