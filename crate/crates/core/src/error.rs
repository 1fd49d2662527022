use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("binomial coefficient C({n}, {k}) overflows 128-bit integers")]
    Overflow { n: u64, k: u64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid protocol parameters L={l}, d={d}: {reason}")]
    InvalidParams {
        l: u32,
        d: u32,
        reason: &'static str,
    },

    #[error("invalid attack matrix: {0}")]
    InvalidAttack(String),

    #[error("subset {0:?} has zero yield")]
    UndefinedSubset(Vec<u32>),

    #[error("every subset has zero yield")]
    ZeroYield,

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no e_mis entry for L={l}, d={d}")]
    MissingEntry { l: u32, d: u32 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
