//! Error type shared by every module in the crate.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by transforms, adapters, gradients and training.
#[derive(Debug, Clone, PartialEq)]
pub enum SeloraError {
    /// A matrix or transform was given a shape it cannot operate on.
    InvalidDimension(String),
    /// The sparse ratio leaves no learnable spectral entries.
    DegenerateSparsity {
        rows: usize,
        cols: usize,
        sparse_ratio: f64,
    },
    /// Variance matching at initialization hit a zero-variance materialization.
    DegenerateInit(String),
    /// A column of the direction matrix has zero norm and cannot be normalized.
    DegenerateNormalization { column: usize },
    /// Optimizer state and gradient layouts disagree.
    LayoutMismatch { expected: usize, actual: usize },
    /// Subspace analysis was asked for a rank outside `1..dim`.
    InvalidRank { rank: usize, dim: usize },
    /// An amplification-factor denominator is zero.
    UndefinedAmplification { reverse: bool },
    /// A value that must be finite was NaN or infinite.
    NonFinite(String),
    /// Training produced a non-finite loss or otherwise failed numerically.
    NumericFailure { step: u64, message: String },
}

impl fmt::Display for SeloraError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeloraError::InvalidDimension(msg) => write!(f, "invalid dimension: {msg}"),
            SeloraError::DegenerateSparsity {
                rows,
                cols,
                sparse_ratio,
            } => write!(
                f,
                "degenerate sparsity: eta={sparse_ratio} leaves no learnable entries in a {rows}x{cols} grid"
            ),
            SeloraError::DegenerateInit(msg) => write!(f, "degenerate initialization: {msg}"),
            SeloraError::DegenerateNormalization { column } => {
                write!(f, "degenerate normalization: column {column} has zero norm")
            }
            SeloraError::LayoutMismatch { expected, actual } => {
                write!(f, "layout mismatch: expected {expected} coordinates, got {actual}")
            }
            SeloraError::InvalidRank { rank, dim } => {
                write!(f, "invalid rank: r={rank} must satisfy 1 <= r < {dim}")
            }
            SeloraError::UndefinedAmplification { reverse } => {
                if *reverse {
                    write!(f, "reverse amplification factor undefined: residual projection has zero norm")
                } else {
                    write!(f, "amplification factor undefined: projection has zero norm")
                }
            }
            SeloraError::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            SeloraError::NumericFailure { step, message } => {
                write!(f, "numeric failure at step {step}: {message}")
            }
        }
    }
}

impl core::error::Error for SeloraError {}

pub type Result<T> = core::result::Result<T, SeloraError>;
