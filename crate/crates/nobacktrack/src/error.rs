//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by chain construction, linear solvers, and harnesses.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("transition matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("row {row} sums to {sum:.17}, expected 1 within tolerance")]
    RowSumViolation { row: usize, sum: f64 },
    #[error("negative entry at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("stationary distribution is not unique (null space dimension {nullity})")]
    NonUniqueStationary { nullity: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("target distribution has zero probability at state {state}")]
    ZeroTargetProbability { state: usize },
    #[error("chain is not irreducible")]
    NotIrreducible,
    #[error("chain is not reversible with respect to the given distribution")]
    NotReversible,
    #[error("linear system is singular")]
    SingularSystem,
    #[error("invalid initial state or distribution")]
    InvalidInit,
    #[error("update kernel violates the balance or domination conditions: {0}")]
    KernelConditionViolation(String),
    #[error("new chain does not dominate old chain off-diagonal at ({row}, {col})")]
    DominationViolation { row: usize, col: usize },
    #[error("chains do not form an elementary pair: {0}")]
    NotElementaryPair(String),
    #[error("trajectory carries no delta marks")]
    NoMarks,
    #[error("block boundary at step {at} is not one of the designated states")]
    BoundaryMismatch { at: usize },
    #[error("state subset is empty")]
    EmptySubset,
    #[error("block-type distribution must satisfy rho(0) = rho(1)")]
    RhoAsymmetric,
    #[error("distribution is not stationary for the given chain")]
    NotStationary,
    #[error("parameter out of range: {0}")]
    DeltaOutOfRange(String),
}

pub type Result<T> = std::result::Result<T, Error>;
