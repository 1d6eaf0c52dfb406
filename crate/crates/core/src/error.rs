use thiserror::Error;

/// Errors raised by the approximation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("data length {len} does not match {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, len: usize },

    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("rank {k} out of range 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("matrix is identically zero")]
    ZeroMatrix,

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid sampling probabilities: {0}")]
    InvalidProbabilities(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires a column-selection sketch")]
    NotSelection,

    #[error("sketch has no columns")]
    EmptySketch,

    #[error("no sigma in [{lo:e}, {hi:e}] brackets eta target {target}")]
    NoBracket { lo: f64, hi: f64, target: f64 },

    #[error("all eigenvalues are nonpositive")]
    NoPositiveEigenvalues,

    #[error("iteration failed to converge")]
    NoConvergence,

    #[error("{0} failed to converge")]
    Decomposition(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
