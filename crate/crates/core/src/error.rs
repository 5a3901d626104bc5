use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum TfdeError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected length {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("singular pivot at row {row}")]
    Singular { row: usize },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("unknown problem `{0}`")]
    Lookup(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TfdeError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(TfdeError::Shape { expected, got })
    }
}
