//! Error types shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while building inputs, factorizing
/// dependency structures, or estimating indices and bounds.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("covariance matrix is not symmetric at ({0},{1})")]
    AsymmetricCovariance(usize, usize),
    #[error("covariance is not positive semidefinite (smallest eigenvalue {0:.3e})")]
    NotPositiveSemidefinite(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("parameter vector has length {got}, model needs {expected}")]
    ParamLengthMismatch { expected: usize, got: usize },
    #[error("index set is not a dependent block of the input spec")]
    NotADependentBlock,
    #[error("ordering is not a permutation of the block")]
    PermutationInvalid,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("conditioning set and target are not a prefix of the block permutation")]
    InconsistentPrefix,
    #[error("block of size {0} is too small (need at least 2)")]
    BlockTooSmall(usize),
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("index {0} is not in the ground set")]
    IndexNotInGround(usize),
    #[error("output variance is degenerate (below 1e-14); indices are undefined")]
    DegenerateVariance,
    #[error("dimension {0} too large for exact subset enumeration (limit 20)")]
    DimensionTooLargeForExact(usize),
    #[error("input {0} sits in a dependent block; Sobol' indices need independence")]
    NotIndependentInput(usize),
    #[error("block of size {0} exceeds the enumeration limit (20)")]
    BlockTooLarge(usize),
    #[error("variance must be positive, got {0}")]
    NonpositiveVariance(f64),
    #[error("model has no gradient; the derivative bound needs one")]
    GradientUnavailable,
    #[error("no derivative bound available for this model (no supplied bound and no gradient to estimate one)")]
    BoundUnavailable,
    #[error("integer overflow while evaluating a cost formula; try smaller sizes")]
    Overflow,
    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
