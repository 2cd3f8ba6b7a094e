//! Hyperparameter sweep over the scale-prior parameter `b`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use bnmf_core::map::MapConfig;
use bnmf_core::sampler::GibbsConfig;
use bnmf_core::{effective_rank, mse};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::fit::{derive_seed, fit, model_config, parse_priors, Algorithm};
use crate::io::write_file;
use crate::synthetic::{generate_synthetic, SyntheticSpec};

/// Relative effective-rank threshold: τ = `RANK_TOL` · max γ.
pub const RANK_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub spec: SyntheticSpec,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default = "default_prior")]
    pub prior: String,
    /// Family and fixed parameters; `b` is replaced by each grid value.
    #[serde(default = "default_hyperprior")]
    pub hyperprior: String,
    pub b_grid: Vec<f64>,
    /// Inverse temperature; defaults to `1/(4σ²)`.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub map: MapConfig,
    #[serde(default)]
    pub gibbs: GibbsConfig,
}

pub(crate) fn default_prior() -> String {
    "exponential".into()
}

pub(crate) fn default_hyperprior() -> String {
    "gamma:b=1".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub b: f64,
    /// `None` when the run failed.
    pub mse: Option<f64>,
    pub gamma: Vec<f64>,
    pub effective_rank: usize,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub records: Vec<SweepRecord>,
}

impl SweepReport {
    /// One line per grid point: `b,mse,effective_rank,gamma_1..K`. Timings
    /// are left out so that the file is reproducible.
    pub fn to_csv(&self) -> String {
        let k = self.config.spec.k;
        let mut out = String::from("b,mse,effective_rank");
        for l in 1..=k {
            write!(out, ",gamma_{l}").unwrap();
        }
        out.push('\n');
        for r in &self.records {
            let mse = r.mse.map(|m| format!("{m:?}")).unwrap_or_default();
            write!(out, "{:?},{mse},{}", r.b, r.effective_rank).unwrap();
            for l in 0..k {
                match r.gamma.get(l) {
                    Some(g) => write!(out, ",{g:?}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Thread count from `BNMF_THREADS`; `None` means the rayon default.
pub fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var("BNMF_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(CliError::usage("BNMF_THREADS", format!("expected a thread count, got '{s}'"))),
        },
        Err(_) => Ok(None),
    }
}

/// Factors one shared realization under every `b` of the grid. Points run in
/// parallel, each with its own seed derived from the estimator seed and the
/// grid index; a failing point is recorded and the sweep continues.
pub fn sweep_b(config: &SweepConfig) -> CliResult<SweepReport> {
    if config.b_grid.is_empty() {
        return Err(CliError::usage("b_grid", "grid must not be empty"));
    }
    if let Some(b) = config.b_grid.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(CliError::usage("b_grid", format!("grid values must be positive, got {b}")));
    }
    let base = parse_priors(&config.prior, &config.hyperprior)?;
    let data = generate_synthetic(&config.spec)?;
    let model = model_config(config.spec.sigma2, config.spec.k, config.lambda)?;

    let run_point = |(idx, &b): (usize, &f64)| -> SweepRecord {
        let start = Instant::now();
        let result = (|| -> CliResult<_> {
            let priors = bnmf_core::Priors::new(base.element, base.hyper.with_b(b)?);
            let map = MapConfig { seed: derive_seed(config.map.seed, idx as u64), ..config.map };
            let gibbs = GibbsConfig { seed: derive_seed(config.gibbs.seed, idx as u64), ..config.gibbs };
            let f = fit(&data.y, &model, &priors, config.algorithm, &map, &gibbs, None)?;
            Ok((mse(&data.m, &f.m_hat)?, f.fac))
        })();
        let wall_time_s = start.elapsed().as_secs_f64();
        match result {
            Ok((m, fac)) => {
                let tau = RANK_TOL * fac.gamma().iter().cloned().fold(0.0, f64::max);
                SweepRecord {
                    b,
                    mse: Some(m),
                    effective_rank: effective_rank(&fac, tau),
                    gamma: fac.gamma().to_vec(),
                    wall_time_s,
                    error: None,
                }
            }
            Err(e) => SweepRecord { b, mse: None, gamma: Vec::new(), effective_rank: 0, wall_time_s, error: Some(e.to_string()) },
        }
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::usage("BNMF_THREADS", e))?;
    let records = pool.install(|| config.b_grid.par_iter().enumerate().map(run_point).collect());
    Ok(SweepReport { config: config.clone(), records })
}

/// Writes `report.json` and `report.csv` under `dir`.
pub fn write_report(report: &SweepReport, dir: &Path) -> CliResult<()> {
    write_file(&dir.join("report.json"), &serde_json::to_string_pretty(report)?)?;
    write_file(&dir.join("report.csv"), &report.to_csv())
}
