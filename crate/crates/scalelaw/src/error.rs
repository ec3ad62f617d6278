use thiserror::Error;

/// Errors produced by dataset loading, form evaluation, and fitting.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (length mismatch, empty input, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An input value left the domain of the operation (nonpositive x, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter set does not structurally match the form it is used with.
    #[error("configuration error: {0}")]
    Config(String),

    /// A parameter value is invalid for the functional form.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A kernel cannot be rewritten in the requested representation.
    #[error("not representable: {0}")]
    NotRepresentable(String),

    /// Dataset ingestion failure with row/column diagnostics.
    #[error("load error at row {row}, column {column}: {message}")]
    Load {
        row: usize,
        column: String,
        message: String,
    },

    /// I/O or parse failure without a row location.
    #[error("load error: {0}")]
    LoadOther(String),

    /// A split produced an unusable partition.
    #[error("split error: {0}")]
    Split(String),

    /// Every seed of a multi-start fit diverged.
    #[error("fit error: {0}")]
    Fit(String),

    /// The compute-optimal solver did not reach the residual target.
    #[error("solver error: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
