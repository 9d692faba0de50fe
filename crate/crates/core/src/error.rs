use thiserror::Error;

/// Errors raised by table handling, model construction, fitting and detection.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("ragged table: row {row} has {got} fields, expected {expected}")]
    Ragged {
        row: usize,
        got: usize,
        expected: usize,
    },

    #[error("duplicate cell coordinates {0:?}")]
    DuplicateCell(Vec<usize>),

    #[error("missing cell coordinates {0:?}")]
    MissingCell(Vec<usize>),

    #[error("level index {index} out of range for factor {factor} with {levels} levels")]
    IndexOutOfRange {
        factor: usize,
        index: usize,
        levels: usize,
    },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("design matrix is rank deficient (rank {rank} < {p} parameters)")]
    RankDeficient { rank: usize, p: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration would scan {candidates} candidate subsets, above the cap of {cap}; sample instead")]
    EnumerationCap { candidates: u128, cap: u128 },

    #[error("no pattern produced a usable fit ({0} attempted)")]
    AllFitsFailed(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
