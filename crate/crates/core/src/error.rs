//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// A caller violated an operation's contract (non-scalar loss,
    /// empty input, missing class, ...).
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    /// Invalid configuration (bad fractions, infeasible grid entry, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Episode sampling could not satisfy the request.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Training diverged (NaN/Inf loss or gradients).
    #[error("numeric divergence at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    /// Structured binary file is malformed.
    #[error("file format error in {path}: {detail}")]
    Format { path: String, detail: String },

    /// Payload checksum did not match.
    #[error("checksum mismatch in {path}: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum {
        path: String,
        stored: u32,
        computed: u32,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
