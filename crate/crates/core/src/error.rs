use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("index {index} out of range (max {max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("index order violated: {0}")]
    IndexOrder(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {context} at t={t}, y={y:?}")]
    NonFinite {
        context: String,
        t: f64,
        y: Vec<f64>,
    },

    #[error("non-finite state at step {index} (t={t})")]
    NonFiniteState { index: usize, t: f64 },

    #[error("function model has no derivative evaluator")]
    MissingDerivative,

    #[error("derivative check failed at t={t}, y={y:?}: defect {defect:e} exceeds {bound:e}")]
    DerivativeCheck {
        t: f64,
        y: Vec<f64>,
        defect: f64,
        bound: f64,
    },

    #[error("Chen defect {max:e} exceeds tolerance {tol:e}")]
    ChenDefect { max: f64, tol: f64 },

    #[error("need at least {needed} dyadic scales, have {available}")]
    InsufficientScales { needed: usize, available: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
