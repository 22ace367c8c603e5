//! Matrix factorization for mixed-sign data.
//!
//! Four solvers share one multiplicative-update machinery:
//!
//! * `nmf`: classic nonnegative factorization of a nonnegative matrix,
//! * `snf`: semi-NMF with mixed-sign basis, nonnegative coefficients,
//! * `grsnf`: semi-NMF with a static nearest-neighbor graph penalty and a
//!   basis sparsity term,
//! * `l21snf`: the robust variant: column-wise (unsquared) reconstruction
//!   error, an L2,1 graph penalty whose edge weights are refreshed every
//!   iteration, and the same sparsity term.
//!
//! Around the solvers sit the pieces needed to benchmark them: p-NN graph
//! construction ([`graph`]), k-means/ACC/NMI evaluation ([`cluster`]),
//! dataset loading and synthesis ([`data`]), and per-iteration diagnostics
//! (objective, proxy loss, KKT residual) in [`solver`].
//!
//! Everything numeric is generic over [`Scalar`] (f32 or f64); the aliases
//! below pin the f64 instantiation used by the CLI and the experiments.

pub mod cluster;
pub mod data;
pub mod error;
pub mod graph;
pub mod matrix;
mod rng;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar precision used by the CLI and the experiments.
pub type Real = f64;
/// Dense matrix at the default precision.
pub type Mat = ndarray::Array2<Real>;
/// Solver configuration at the default precision.
pub type Config = solver::SolverConfig<Real>;
/// Run output at the default precision.
pub type RunResult = solver::SolverResult<Real>;
/// Epsilon guard at the default precision.
pub type Guard = matrix::EpsilonPolicy<Real>;
