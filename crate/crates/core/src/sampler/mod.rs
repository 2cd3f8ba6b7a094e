//! Gibbs sampling of the quasi-posterior.

mod conditional;
mod gibbs;
mod univariate;

pub use conditional::{
    inverse_gaussian_mode, row_conditional_exponential, row_conditional_truncgauss, sample_gamma_conditional,
    sample_truncated_mvn, scale_conditional, RowConditional, ScaleConditional,
};
pub use gibbs::{
    gibbs_step, quasi_log_posterior, run_gibbs, run_gibbs_with, trace_csv, ChainState, GibbsConfig, GibbsOptions, GibbsOutput,
    GibbsTraceRow,
};
pub use univariate::{sample_gamma, sample_inverse_gamma, sample_inverse_gaussian, sample_univariate_truncnorm};
