//! Randomized reduced rank regression (R⁴) for kernel-based operator learning.
//!
//! This crate implements reduced rank regression in reproducing kernel Hilbert
//! spaces: given samples `(x_i, y_i)`, it fits a rank-`r` Hilbert–Schmidt
//! operator `G` minimizing the Tikhonov-regularized empirical risk
//!
//! ```text
//!   R̂(G) = (1/n) Σ_i ‖ψ(y_i) − G φ(x_i)‖² + γ‖G‖²_HS,   rank(G) ≤ r.
//! ```
//!
//! Two exact solvers (primal and dual generalized eigenvalue formulations) are
//! provided alongside two randomized solvers that replace the large GEP with a
//! Gaussian-sketched rangefinder and a small `(r+s)×(r+s)` eigenproblem, in the
//! spirit of randomized SVD. The crate also computes the closed-form expected
//! excess-risk bounds for both sketch distributions (isotropic and
//! output-covariance-correlated), so that Monte Carlo experiments can be
//! checked against theory.
//!
//! Module map:
//!
//! * [`kernels`] — kernel evaluation, `1/n`-scaled Gram assembly, length-scale
//!   heuristics.
//! * [`linalg`] — sketch generation, Cholesky solves, economy QR, symmetric
//!   GEP, truncated SVD, dense nonsymmetric eigendecomposition.
//! * [`estimators`] — the four fitting procedures plus prediction, spectral
//!   extraction, and serialization.
//! * [`risk_bounds`] — empirical/optimal risk, the singular spectrum of
//!   `B̂ = Ĉ_γ^{-1/2}Ĉ_XY`, and the expected-error bounds.
//! * [`dynamics`] — the noisy logistic map, its ground-truth Koopman spectrum,
//!   and the directed Hausdorff distance.
//! * [`rng`] — seed derivation and deterministic Gaussian sampling.
//!
//! All stochastic operations take explicit 64-bit seeds and are bit-reproducible.
//! Matrices are `faer` column-major `Mat<f64>` throughout; rows index samples.

pub mod dynamics;
pub mod estimators;
pub mod kernels;
pub mod linalg;
pub mod risk_bounds;
pub mod rng;

use thiserror::Error;

/// Errors reported by this crate.
///
/// `InvalidInput` marks precondition violations the caller can fix (shape
/// mismatches, out-of-range parameters, rank requests beyond what the data
/// supports). `Numerical` marks factorization or iteration failures on inputs
/// that passed validation. `Unsupported` marks operations that are
/// well-defined mathematically but outside this crate's implemented surface.
#[derive(Debug, Error)]
pub enum RrrError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("serialization failure: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, RrrError>;
