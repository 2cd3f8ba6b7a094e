//! Single estimator runs shared by the subcommands and the sweep.

use std::fmt;
use std::str::FromStr;

use bnmf_core::map::{run_map, MapConfig, MapTrace};
use bnmf_core::sampler::{run_gibbs_with, trace_csv, GibbsConfig, GibbsOptions, GibbsTraceRow};
use bnmf_core::{DenseMatrix, ElementPrior, Factorization, ModelConfig, Priors, ScaleHyperprior};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Map,
    Gibbs,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Map => "map",
            Algorithm::Gibbs => "gibbs",
        })
    }
}

impl FromStr for Algorithm {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "map" => Ok(Algorithm::Map),
            "gibbs" => Ok(Algorithm::Gibbs),
            _ => Err(CliError::usage("algorithm", format!("expected 'map' or 'gibbs', got '{s}'"))),
        }
    }
}

/// Parses the prior strings, naming the field on failure.
pub fn parse_priors(prior: &str, hyperprior: &str) -> CliResult<Priors> {
    let element: ElementPrior = prior.parse().map_err(|e| CliError::usage("prior", e))?;
    let hyper: ScaleHyperprior = hyperprior.parse().map_err(|e| CliError::usage("hyperprior", e))?;
    Ok(Priors::new(element, hyper))
}

/// Model configuration for width `k`. With `lambda` given, σ² is set to
/// `1/(4λ)`; otherwise λ takes its default from `sigma2`, which must then be
/// positive.
pub fn model_config(sigma2: f64, k: usize, lambda: Option<f64>) -> CliResult<ModelConfig> {
    match lambda {
        Some(l) if l > 0.0 && l.is_finite() => Ok(ModelConfig::new(0.25 / l, k)?),
        Some(l) => Err(CliError::usage("lambda", format!("must be positive, got {l}"))),
        None if sigma2 > 0.0 => Ok(ModelConfig::new(sigma2, k)?),
        None => Err(CliError::usage("sigma2", "noiseless data needs an explicit lambda")),
    }
}

/// Independent seed for point `index` of a run derived from `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

#[derive(Debug, Clone)]
pub enum Diagnostics {
    Map { trace: MapTrace, converged: bool },
    Gibbs { trace: Vec<GibbsTraceRow> },
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub m_hat: DenseMatrix,
    /// Final MAP iterate or last Gibbs sample.
    pub fac: Factorization,
    pub diagnostics: Diagnostics,
}

impl Fit {
    /// Diagnostics trace as CSV.
    pub fn trace_csv(&self) -> String {
        match &self.diagnostics {
            Diagnostics::Map { trace, .. } => trace.to_csv(),
            Diagnostics::Gibbs { trace } => trace_csv(trace),
        }
    }
}

pub fn fit(
    y: &DenseMatrix,
    config: &ModelConfig,
    priors: &Priors,
    algorithm: Algorithm,
    map: &MapConfig,
    gibbs: &GibbsConfig,
    truth: Option<&DenseMatrix>,
) -> CliResult<Fit> {
    config.validate_dims(y.rows(), y.cols())?;
    match algorithm {
        Algorithm::Map => {
            let out = run_map(y, config, map, priors, None)?;
            Ok(Fit {
                m_hat: out.fac.reconstruct(),
                fac: out.fac,
                diagnostics: Diagnostics::Map { trace: out.trace, converged: out.converged },
            })
        }
        Algorithm::Gibbs => {
            let out = run_gibbs_with(y, config, gibbs, priors, GibbsOptions { init: None, truth })?;
            Ok(Fit { m_hat: out.m_hat, fac: out.last, diagnostics: Diagnostics::Gibbs { trace: out.trace } })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..4).map(|i| derive_seed(7, i)).collect();
        assert_eq!(s, (0..4).map(|i| derive_seed(7, i)).collect::<Vec<_>>());
        for i in 0..4 {
            for j in 0..i {
                assert_ne!(s[i], s[j]);
            }
        }
    }

    #[test]
    fn prior_errors_name_the_field() {
        let e = parse_priors("laplace", "gamma:b=1").unwrap_err().to_string();
        assert!(e.contains("'prior'"), "{e}");
        let e = parse_priors("exponential", "gamma:c=1").unwrap_err().to_string();
        assert!(e.contains("'hyperprior'"), "{e}");
    }

    #[test]
    fn lambda_overrides_sigma2() {
        let c = model_config(0.0, 2, Some(1e4)).unwrap();
        assert!((c.lambda - 1e4).abs() < 1e-8);
        assert!(model_config(0.0, 2, None).is_err());
    }
}
