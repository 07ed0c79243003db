use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A frequency (or angle) cannot be identified from the given dimensions.
    #[error("unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("root finder did not converge: {0}")]
    NoConvergence(String),

    #[error("bad magic in cube file {0:?}")]
    BadMagic(PathBuf),

    #[error("unsupported cube file version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated cube file: expected {expected} payload bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("cube dimensions overflow: {0}")]
    DimensionOverflow(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at {path:?} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
