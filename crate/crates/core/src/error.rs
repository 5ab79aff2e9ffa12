//! Error types shared across the crate.

use thiserror::Error;

/// Errors from embedding construction and the elementary projections.
#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("invalid dimensions: require 1 <= d <= D, got d = {low}, D = {ambient}")]
    InvalidDimension { low: usize, ambient: usize },
    #[error("matrix is not in the admissible class: {0}x{0} row-submatrix {1:?} is singular")]
    SingularSubmatrix(usize, Vec<usize>),
    #[error("columns are numerically dependent, cannot orthonormalize")]
    DependentColumns,
    #[error("dimension mismatch: expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed embedding file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from the geometric predicates and constructions.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no pre-image found: the point is not in the embedded set (residual {residual:.3e})")]
    NoPreimage { residual: f64 },
    #[error("Monte-Carlo estimation needs at least {min} samples, got {got}")]
    TooFewSamples { min: u64, got: u64 },
    #[error("invalid sampling box: lower bound exceeds upper bound in coordinate {0}")]
    EmptyBox(usize),
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
}

/// Errors from the phi/gamma mappings and warpings.
#[derive(Debug, Error)]
pub enum MappingError {
    #[error("point is outside the zonotope domain (constraint residual {residual:.3e})")]
    OutOfDomain { residual: f64 },
    #[error("dimension mismatch: expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Errors from Gaussian-process construction, fitting and prediction.
#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("covariance matrix not positive definite even at jitter {jitter:.3e}")]
    Conditioning { jitter: f64 },
    #[error("invalid kernel specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

/// Errors from the optimization loop.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("objective returned a non-finite value at evaluation {evaluation}")]
    NonFiniteObjective { evaluation: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Errors from the benchmark registry and experiment orchestration.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown objective '{0}'; known: branin, giunta, hartmann6, borehole, levy")]
    UnknownObjective(String),
    #[error("objective '{name}' needs D >= {needed}, got D = {got}")]
    AmbientTooSmall {
        name: String,
        needed: usize,
        got: usize,
    },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
