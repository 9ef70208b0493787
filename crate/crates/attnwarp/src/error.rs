//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: left is {w_a}x{k_a}, right is {w_b}x{k_b}")]
    ShapeMismatch {
        w_a: usize,
        k_a: usize,
        w_b: usize,
        k_b: usize,
    },
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("invalid warping path: {0}")]
    InvalidPath(String),
    #[error("parameters incompatible with input: {0}")]
    ArchitectureMismatch(String),
    #[error("non-finite activation in forward pass")]
    NonFiniteActivation,
    #[error("warping matrix is not normalized")]
    NotNormalized,
    #[error("no forward pass recorded on this graph")]
    GraphNotRecorded,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training loss diverged (non-finite) at step {step}")]
    DivergedLoss { step: u64 },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("no reference series given")]
    NoReferences,
    #[error("empty score list: {0}")]
    EmptyScoreList(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("series too short: need at least {need} points, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("empty train split")]
    EmptyTrainSplit,
    #[error("parse error at line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("inconsistent shapes: {0}")]
    InconsistentShapes(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
