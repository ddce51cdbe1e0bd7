use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("incompatible digests: {0}")]
    Incompatible(String),

    #[error("query on an empty digest")]
    EmptyDigest,

    #[error("recompression to k={new} from k={old} is not supported (only k' < k)")]
    UnsupportedRecompress { old: u64, new: u64 },

    #[error("count overflow")]
    Overflow,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
