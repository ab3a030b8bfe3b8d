//! Gaussian random assignment field.
//!
//! The field assigns to every permutation `u` of `[n]` the standardised
//! assignment value `g_u = n^{-1/2} * sum_i c(i, u(i))` of an `n x n` matrix of
//! i.i.d. standard Gaussian costs. This crate evaluates the field, solves for
//! its extremes, enumerates it exhaustively for small `n`, evaluates the
//! closed-form bounds on its maximum and near-maximal sets, and runs
//! reproducible Monte Carlo studies of all of the above.
//!
//! Permutations are one-line notation. Everything that crosses an API or file
//! boundary is 1-based; indexing into matrices is 0-based.

pub mod bounds;
pub mod combinatorics;
pub mod enumerator;
mod error;
pub mod field;
pub mod io;
pub mod montecarlo;
pub mod solvers;
pub mod stats;

pub use error::{Error, Result};
pub use field::{CostMatrix, FieldValue, Permutation};
