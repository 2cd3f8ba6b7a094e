//! Resolved run configuration and the subcommands that act on it.
//!
//! The command line and JSON experiment files both produce a [`RunConfig`];
//! [`execute`] writes every output under `out`, starting with the resolved
//! configuration itself.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bnmf_core::bound::{corollary_bound, theorem_bound, BoundBreakdown, BoundQuery};
use bnmf_core::map::MapConfig;
use bnmf_core::priors::prior_constants;
use bnmf_core::sampler::GibbsConfig;
use bnmf_core::{effective_rank, mse};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::fit::{derive_seed, fit, model_config, parse_priors, Algorithm, Diagnostics};
use crate::io::{load_matrix, save_matrix, write_file};
use crate::sweep::{default_hyperprior, default_prior, sweep_b, write_report, SweepConfig, RANK_TOL};
use crate::synthetic::{generate_synthetic, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Generate,
    Map,
    Gibbs,
    #[default]
    Sweep,
    Bound,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Generate => "generate",
            Command::Map => "map",
            Command::Gibbs => "gibbs",
            Command::Sweep => "sweep",
            Command::Bound => "bound",
        })
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| CliError::usage("command", format!("unknown command '{s}'")))
    }
}

/// `b ∈ {10⁰, 10¹, …, 10⁹}`.
pub fn default_b_grid() -> Vec<f64> {
    (0..10).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub out: PathBuf,
    /// Synthetic design; with `input` set only `K`, `sigma2` and `seed` are used.
    pub spec: SyntheticSpec,
    /// Observed matrix to factor instead of synthetic data.
    pub input: Option<PathBuf>,
    /// Signal matrix to score `input` fits against.
    pub truth: Option<PathBuf>,
    pub prior: String,
    pub hyperprior: String,
    /// Estimator used by `sweep`.
    pub algorithm: Algorithm,
    pub b_grid: Vec<f64>,
    pub lambda: Option<f64>,
    pub map: MapConfig,
    pub gibbs: GibbsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seed = SyntheticSpec::default().seed;
        Self {
            command: Command::default(),
            out: PathBuf::from("run"),
            spec: SyntheticSpec::default(),
            input: None,
            truth: None,
            prior: default_prior(),
            hyperprior: default_hyperprior(),
            algorithm: Algorithm::Map,
            b_grid: default_b_grid(),
            lambda: None,
            map: MapConfig { seed: estimator_seed(seed), ..MapConfig::default() },
            gibbs: GibbsConfig { seed: estimator_seed(seed), ..GibbsConfig::default() },
        }
    }
}

/// Estimator seed paired with a data seed, on a separate stream.
pub fn estimator_seed(data_seed: u64) -> u64 {
    derive_seed(data_seed, 1 << 32)
}

impl RunConfig {
    /// Sets the data seed and both estimator seeds from one value.
    pub fn set_seed(&mut self, seed: u64) {
        self.spec.seed = seed;
        self.map.seed = estimator_seed(seed);
        self.gibbs.seed = estimator_seed(seed);
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            spec: self.spec,
            algorithm: self.algorithm,
            prior: self.prior.clone(),
            hyperprior: self.hyperprior.clone(),
            b_grid: self.b_grid.clone(),
            lambda: self.lambda,
            map: self.map,
            gibbs: self.gibbs,
        }
    }
}

/// Reads an experiment file. Unknown keys and malformed values are usage
/// errors naming the key.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(config_field(&e.to_string()), e))
}

fn config_field(msg: &str) -> String {
    // serde reports "unknown field `x`" / "invalid type ... for key `x`"
    msg.split('`').nth(1).unwrap_or("config").to_string()
}

/// Runs a JSON experiment file; `out` overrides the configured directory.
pub fn run_experiment(path: &Path, out: Option<&Path>) -> CliResult<PathBuf> {
    let mut cfg = load_config(path)?;
    if let Some(o) = out {
        cfg.out = o.to_path_buf();
    }
    execute(&cfg)?;
    Ok(cfg.out)
}

/// Summary of a single MAP or Gibbs fit. Holds no timings, so repeated runs
/// with the same configuration give identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub algorithm: Algorithm,
    pub prior: String,
    pub hyperprior: String,
    pub lambda: f64,
    pub mse: Option<f64>,
    pub gamma: Vec<f64>,
    pub effective_rank: usize,
    pub iterations: usize,
    pub converged: Option<bool>,
}

/// Bound evaluated at the generating factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub r: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub sigma2: f64,
    pub theorem: BoundBreakdown,
    /// Entry bound used for the corollary, `entry_upper`.
    pub l: f64,
    pub corollary: f64,
    pub alpha: f64,
    pub ln_alpha: f64,
    pub beta: f64,
    pub s_f: f64,
    pub c_f: f64,
}

/// Writes `config.json`, then the outputs of the selected command.
pub fn execute(cfg: &RunConfig) -> CliResult<()> {
    let out = &cfg.out;
    // fail on bad priors before writing anything
    parse_priors(&cfg.prior, &cfg.hyperprior)?;
    write_file(&out.join("config.json"), &serde_json::to_string_pretty(cfg)?)?;
    match cfg.command {
        Command::Generate => {
            let d = generate_synthetic(&cfg.spec)?;
            save_matrix(&out.join("Y.csv"), &d.y)?;
            save_matrix(&out.join("M.csv"), &d.m)?;
            save_matrix(&out.join("U.csv"), d.truth.u())?;
            save_matrix(&out.join("V.csv"), d.truth.v())
        }
        Command::Map => single_fit(cfg, Algorithm::Map),
        Command::Gibbs => single_fit(cfg, Algorithm::Gibbs),
        Command::Sweep => write_report(&sweep_b(&cfg.sweep_config())?, out),
        Command::Bound => {
            let report = bound_report(cfg)?;
            write_file(&out.join("bound.json"), &serde_json::to_string_pretty(&report)?)
        }
    }
}

fn single_fit(cfg: &RunConfig, algorithm: Algorithm) -> CliResult<()> {
    let priors = parse_priors(&cfg.prior, &cfg.hyperprior)?;
    let (y, truth) = match &cfg.input {
        Some(path) => {
            let y = load_matrix(path)?;
            let truth = cfg.truth.as_deref().map(load_matrix).transpose()?;
            (y, truth)
        }
        None => {
            let d = generate_synthetic(&cfg.spec)?;
            (d.y, Some(d.m))
        }
    };
    if let Some(t) = &truth {
        if t.shape() != y.shape() {
            return Err(CliError::usage("truth", format!("shape {:?} differs from data {:?}", t.shape(), y.shape())));
        }
    }
    let model = model_config(cfg.spec.sigma2, cfg.spec.k, cfg.lambda)?;
    let f = fit(&y, &model, &priors, algorithm, &cfg.map, &cfg.gibbs, truth.as_ref())?;
    let gamma = f.fac.gamma().to_vec();
    let tau = RANK_TOL * gamma.iter().cloned().fold(0.0, f64::max);
    let (iterations, converged) = match &f.diagnostics {
        Diagnostics::Map { trace, converged } => (trace.records.len(), Some(*converged)),
        Diagnostics::Gibbs { trace } => (trace.len(), None),
    };
    let summary = FitSummary {
        algorithm,
        prior: priors.element.to_string(),
        hyperprior: priors.hyper.to_string(),
        lambda: model.lambda,
        mse: truth.as_ref().map(|t| mse(t, &f.m_hat)).transpose()?,
        effective_rank: effective_rank(&f.fac, tau),
        gamma,
        iterations,
        converged,
    };
    let out = &cfg.out;
    save_matrix(&out.join("M_hat.csv"), &f.m_hat)?;
    save_matrix(&out.join("U.csv"), f.fac.u())?;
    save_matrix(&out.join("V.csv"), f.fac.v())?;
    write_file(&out.join("trace.csv"), &f.trace_csv())?;
    write_file(&out.join("summary.json"), &serde_json::to_string_pretty(&summary)?)
}

/// Bound at the generating factors with `r = r_true`.
pub fn bound_report(cfg: &RunConfig) -> CliResult<BoundReport> {
    let priors = parse_priors(&cfg.prior, &cfg.hyperprior)?;
    let d = generate_synthetic(&cfg.spec)?;
    let model = model_config(cfg.spec.sigma2, cfg.spec.k, cfg.lambda)?;
    model.validate_dims(cfg.spec.m1, cfg.spec.m2)?;
    let pc = prior_constants(&priors, &model, cfg.spec.m1, cfg.spec.m2)?;
    let (u0, v0, _) = d.truth.into_parts();
    let l = cfg.spec.entry_upper;
    let q = BoundQuery::new(u0, v0, cfg.spec.r_true, Some(l))?;
    let theorem = theorem_bound(&q, &d.m, &model, &pc)?;
    let corollary = corollary_bound(q.r(), l, model.k, cfg.spec.m1, cfg.spec.m2, &model, &pc)?;
    Ok(BoundReport {
        r: q.r(),
        k: model.k,
        sigma2: model.sigma2,
        theorem,
        l,
        corollary,
        alpha: pc.alpha,
        ln_alpha: pc.ln_alpha,
        beta: pc.beta,
        s_f: pc.s_f,
        c_f: pc.c_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in [Command::Generate, Command::Map, Command::Gibbs, Command::Sweep, Command::Bound] {
            assert_eq!(c.to_string().parse::<Command>().unwrap(), c);
        }
        assert!("fit".parse::<Command>().is_err());
    }

    #[test]
    fn config_field_is_extracted() {
        let e = serde_json::from_str::<RunConfig>(r#"{"priorr": "x"}"#).unwrap_err();
        assert_eq!(config_field(&e.to_string()), "priorr");
    }

    #[test]
    fn default_grid_spans_ten_decades() {
        let g = default_b_grid();
        assert_eq!(g.len(), 10);
        assert_eq!(g[9], 1e9);
    }
}
