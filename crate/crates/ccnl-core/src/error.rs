use thiserror::Error;

pub type Result<T> = std::result::Result<T, CcnlError>;

#[derive(Debug, Error)]
pub enum CcnlError {
    #[error("dimension mismatch: {context} (lhs shape {lhs:?}, rhs shape {rhs:?})")]
    DimensionMismatch {
        context: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CcnlError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CcnlError::Io {
            path: path.into(),
            source,
        }
    }
}
