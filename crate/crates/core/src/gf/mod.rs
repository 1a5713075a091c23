//! Exact arithmetic over prime fields GF(q), extension fields GF(q^r) and
//! matrices over GF(q).
//!
//! Everything here is immutable once built and safe to share between worker
//! threads. Randomness is always passed in explicitly.

mod ext;
mod matrix;
mod poly;
mod prime;

pub use ext::{find_irreducible, is_irreducible, ExtElement, ExtField, FieldTables};
pub use matrix::{complete_and_invert, matrix_row_rank, sample_matrix, Completion, FieldMatrix};
pub use prime::{is_prime, Fp, PrimeField};

use thiserror::Error;

/// Errors raised by finite-field and matrix operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GfError {
    #[error("modulus {0} is not a prime")]
    NotPrime(u64),
    #[error("field mismatch: GF({left}) vs GF({right})")]
    FieldMismatch { left: u64, right: u64 },
    #[error("zero has no multiplicative inverse")]
    NoInverse,
    #[error("extension degree must be at least 1")]
    ZeroDegree,
    #[error("polynomial is not a monic irreducible of degree {0}")]
    NotIrreducible(usize),
    #[error("value {value} is not a canonical element of GF({q})")]
    OutOfRange { value: u64, q: u64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("matrix has rank {rank}, expected full row rank {rows}")]
    RankDeficient { rank: usize, rows: usize },
    #[error("field of order {q}^{r} does not fit in 64 bits")]
    TooLarge { q: u64, r: usize },
}
