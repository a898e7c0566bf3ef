use thiserror::Error;

use crate::codebook::BeamId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spatial angle {0} outside [-1, 1)")]
    AngleOutOfRange(f64),

    #[error("array size {0} is not a power of two >= 4")]
    InvalidArraySize(usize),

    #[error("receiver position coincides with the base station")]
    ReceiverAtBaseStation,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid beam {0}")]
    InvalidBeam(BeamId),

    #[error("beam {0} has no parent")]
    NoParent(BeamId),

    #[error("beam {0} is in the bottom layer and has no children")]
    NoChildren(BeamId),

    #[error("beam {0} is not a current search candidate")]
    NotACandidate(BeamId),

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("position prior has no points")]
    EmptyPrior,

    #[error("invalid position prior: {0}")]
    InvalidPrior(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("no active users")]
    NoActiveUsers,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("map file: {0}")]
    MapFormat(String),

    #[error("empty input")]
    EmptyInput,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
