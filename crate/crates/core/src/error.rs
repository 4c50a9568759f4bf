use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} samples, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid AFDM parameters: {0}")]
    Params(String),

    #[error("{bits} bits cannot be framed into {bits_per_symbol}-bit symbols")]
    Framing { bits: usize, bits_per_symbol: usize },

    #[error("unsupported constellation order {0} (need a power of 4)")]
    Constellation(usize),

    #[error("cannot draw {paths} distinct (delay, Doppler) pairs from {available} available")]
    InfeasibleChannel { paths: usize, available: usize },

    #[error("prefix of {cpp_len} samples is shorter than the maximum delay {l_max}")]
    CppTooShort { cpp_len: usize, l_max: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("exhaustive search over {hypotheses} hypotheses exceeds the limit of {limit}")]
    InstanceTooLarge { hypotheses: f64, limit: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed channel record: {0}")]
    Record(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Whether the error stems from user configuration rather than from the
    /// simulation itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Params(_)
                | Error::Constellation(_)
                | Error::InfeasibleChannel { .. }
                | Error::CppTooShort { .. }
                | Error::InstanceTooLarge { .. }
        )
    }
}
