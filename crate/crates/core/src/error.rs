//! Library error type.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// An eigenvalue sits close to `-1` without being inside the clustering
    /// tolerance, so the Cayley transform would blow up.
    #[error("ill-conditioned Cayley transform: eigenvalue at distance {distance:e} from -1")]
    IllConditioned { distance: f64 },

    /// `k * l_v` is a multiple of pi, so the loop coefficients cannot be
    /// eliminated through the two loop equations.
    #[error("loop resonance at cell {cell}: k*l_v = {kl:.15} is a multiple of pi")]
    LoopResonance { cell: i64, kl: f64 },

    #[error("k = {k} is not in a band: no unit-modulus transfer eigenvalue")]
    NotInBand { k: f64 },

    #[error("unsupported reduction: {0}")]
    UnsupportedReduction(String),

    /// Conjugation moved the block out of the quasi-delta family.
    #[error("result leaves the quasi-delta family: {0}")]
    NotQuasiDelta(String),

    #[error("no twisted shift makes the chain invariant: {reason} at vertex {vertex}")]
    Obstruction { vertex: i64, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
