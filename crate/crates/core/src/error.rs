use thiserror::Error;

/// Errors shared across the whole toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix entries must be finite ({context})")]
    NonFinite { context: String },

    #[error("expected {expected} entries for a {rows}x{cols} matrix, got {got}")]
    EntryCount {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix dimensions must be positive")]
    EmptyMatrix,

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("matrix is not Hermitian: asymmetry {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("matrix is not unitary: defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotUnitary { defect: f64, tol: f64 },

    #[error(
        "matrix is numerically singular: singular value {value:.3e} at position {index} \
         cannot be inverted with zero regularization"
    )]
    SingularMatrix { index: usize, value: f64 },

    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("parameter {name} must not be negative, got {value}")]
    NegativeParameter { name: &'static str, value: f64 },

    #[error("retraction to the unitary group failed at stage {stage}, t = {t}: {reason}")]
    RetractionFailed {
        stage: usize,
        t: f64,
        reason: String,
    },

    #[error("mismatched inputs: {context}")]
    MismatchedInputs { context: String },

    #[error("instance generation failed: {message}")]
    Generation { message: String },

    #[error("invalid input: {context}")]
    InvalidInput { context: String },

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
