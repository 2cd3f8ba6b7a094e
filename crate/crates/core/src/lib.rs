//! Quasi-Bayesian non-negative matrix factorization.
//!
//! The quasi-posterior is `exp(-λ‖Y - UVᵀ‖²_F) π(U, V, γ)` with a
//! hierarchical prior: entries of column ℓ of U and V are drawn from a scaled
//! element density `g_{γ_ℓ}`, and each scale γ_ℓ from a hyperprior `h`.
//! Columns whose scale shrinks towards zero drop out, so K can be chosen
//! larger than the true rank.
//!
//! Two estimators are provided: the posterior mean of `UVᵀ`
//! ([`sampler::run_gibbs`]) and the posterior mode ([`map::run_map`]). The
//! [`bound`] module evaluates the right-hand side of the oracle inequality
//! satisfied by the posterior mean.

pub mod bound;
pub mod error;
pub mod map;
pub mod matrix;
pub mod model;
pub mod priors;
pub mod sampler;
pub mod special;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use model::{effective_rank, frobenius_sq, mse, reconstruct, Factorization, ModelConfig};
pub use priors::{ElementPrior, PriorConstants, Priors, ScaleHyperprior};
