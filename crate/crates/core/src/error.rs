use std::path::PathBuf;

use soundlm_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav: {0}")]
    Wav(String),
    #[error("format: {0}")]
    Format(String),
    #[error("{0}")]
    Invalid(String),
    #[error("digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("undefined SNR for silent reference")]
    SilentReference,
    #[error(
        "prompt too long for context window: {prompt} prompt tokens + {horizon} horizon tokens exceed \
         max_seq_len {max_seq_len} (prompt budget {budget})"
    )]
    ContextOverflow {
        prompt: usize,
        horizon: usize,
        max_seq_len: usize,
        budget: usize,
    },
    #[error("sampling: {0}")]
    Sampling(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
