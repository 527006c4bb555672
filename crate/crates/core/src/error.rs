use thiserror::Error;

/// Errors raised by the tensor engine, the sparse layers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("index tuple {tuple:?} out of bounds for dims {dims:?}")]
    IndexOutOfBounds { tuple: Vec<usize>, dims: Vec<usize> },

    #[error("cantor code overflows 128 bits for tuple {0:?}")]
    CantorOverflow(Vec<usize>),

    #[error("degenerate sampling: row {row} has no unmasked positive proportion")]
    DegenerateRow { row: usize },

    #[error("degenerate half-permutation sample: every proportion in column {column} is zero")]
    DegenerateColumn { column: usize },

    #[error("unbalanced half-permutation chunk starting at {chunk_start}")]
    UnbalancedChunk { chunk_start: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
