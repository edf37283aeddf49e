use thiserror::Error;

use crate::solver::SolverDiagnostics;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("row slice of {requested} rows exceeds slot capacity {capacity}")]
    SliceOverflow { requested: usize, capacity: usize },

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("k = {k} exceeds vector length {n}")]
    InvalidK { k: usize, n: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver did not reach a feasible point after {} iterations (residual {:.3e} > sigma {:.3e})", .0.iterations, .0.residual_norm, .0.sigma)]
    NoConvergence(Box<SolverDiagnostics>),

    #[error("no feasible grid point at the requested resolution")]
    InfeasibleAtResolution,

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("probe matrix must use the ternary alphabet")]
    WrongAlphabet,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}
