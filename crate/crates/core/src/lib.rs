//! Derandomized Chernoff-plus-union-bound constructions.
//!
//! The [`derandomizer`] module holds the greedy pessimistic-estimator engine,
//! both in its enumerated form (scan every sample point) and in its
//! coordinate-by-coordinate conditional-expectation form. The
//! [`constructions`] module drives it to build small-bias sets, balanced
//! linear codes, almost k-wise independent sets and dense perfect hash
//! families. Every object can be certified by the brute-force oracles in
//! [`verifier`], which never look at the engine's internals.

#![forbid(unsafe_code)]

pub mod algebra;
pub mod constructions;
pub mod derandomizer;
mod error;
pub mod format;
pub mod numerics;
pub mod sample;
pub mod verifier;

pub use error::{Error, Result};
pub use numerics::{Rational, Scalar};
pub use sample::{Alphabet, Provenance, SampleMultiset};

/// Enumeration and constraint-count budget used when nothing else is configured.
pub const DEFAULT_BUDGET: u64 = 1 << 24;

/// Library version string recorded in manifests and file provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
