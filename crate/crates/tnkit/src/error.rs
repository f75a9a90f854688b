use thiserror::Error;

/// Errors raised by tensor, network and solver operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TnError {
    /// A multi-index component lies outside its link dimension.
    #[error("index {index} out of range for link {link} of dimension {dim}")]
    IndexOutOfRange { link: usize, index: usize, dim: usize },

    #[error("rank mismatch: expected {expected}, got {got}")]
    RankMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid link range: {0}")]
    InvalidRange(String),

    /// An index map sends two source indices to the same target.
    #[error("index map is not injective on link {0}")]
    NotInjective(usize),

    #[error("not a valid permutation: {0:?}")]
    BadPermutation(Vec<usize>),

    #[error("scalar tensors have no links to {0}")]
    ScalarOperation(&'static str),

    #[error("linear algebra kernel failure: {0}")]
    Kernel(String),

    #[error("symmetry error: {0}")]
    Symmetry(String),

    #[error("network error: {0}")]
    Network(String),

    #[error("operator error: {0}")]
    Operator(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension cap exceeded: {size} > {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed record: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, TnError>;

impl From<std::io::Error> for TnError {
    fn from(e: std::io::Error) -> Self {
        TnError::Io(e.to_string())
    }
}
