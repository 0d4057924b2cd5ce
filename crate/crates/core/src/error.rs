use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown design `{0}` (known: fano, biplane11, pg2_3, pg2_4)")]
    UnknownDesign(String),

    #[error("size overflow: {rows}x{cols} exceeds the cap of {cap} entries")]
    SizeOverflow { rows: usize, cols: usize, cap: usize },

    #[error("{what}: {value} exceeds cap {cap}")]
    CapExceeded { what: &'static str, value: u128, cap: u128 },

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("normal equations residual {residual:e} exceeds tolerance {tolerance:e}")]
    NumericalFailure { residual: f64, tolerance: f64 },

    #[error("not an FRC: {0}")]
    NotAnFrc(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("straggler policy infeasible: s = {s} with n = {n} workers")]
    PolicyInfeasible { s: usize, n: usize },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::CapExceeded { .. } => 4,
            Error::Io(_) | Error::Csv(_) => 1,
            Error::NumericalFailure { .. } | Error::InternalInconsistency(_) => 1,
            _ => 3,
        }
    }
}
