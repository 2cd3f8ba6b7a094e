//! The Gibbs sampler for the posterior mean of `U Vᵀ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::model::{default_init, mse, residual_sq, Factorization, ModelConfig};
use crate::priors::{log_prior, Priors};

use super::conditional::{coordinate_sweeps, sample_gamma_conditional, RowBlock};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub n_iters: usize,
    /// Iterations discarded before averaging; must be below `n_iters`.
    pub burn_in: usize,
    /// Coordinate passes per truncated-normal row draw.
    pub inner_sweeps: usize,
    pub seed: u64,
    /// Ridge added to the Gram matrix, relative to its mean diagonal.
    pub jitter: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { n_iters: 1000, burn_in: 200, inner_sweeps: 4, seed: 0, jitter: 1e-10 }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 {
            return Err(Error::Config("n_iters must be positive".into()));
        }
        if self.burn_in >= self.n_iters {
            return Err(Error::Config(format!(
                "burn_in = {} leaves no kept iterations out of {}",
                self.burn_in, self.n_iters
            )));
        }
        if self.inner_sweeps == 0 {
            return Err(Error::Config("inner_sweeps must be at least 1".into()));
        }
        if !(self.jitter > 0.0 && self.jitter.is_finite()) {
            return Err(Error::Config(format!("jitter must be a small positive number, got {}", self.jitter)));
        }
        Ok(())
    }
}

/// Current sample plus the running sum of kept reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub fac: Factorization,
    pub iteration: usize,
    pub running_sum: DenseMatrix,
    pub kept: usize,
}

impl ChainState {
    pub fn new(fac: Factorization) -> Self {
        let running_sum = DenseMatrix::zeros(fac.m1(), fac.m2());
        Self { fac, iteration: 0, running_sum, kept: 0 }
    }

    /// Running average of `U Vᵀ`, once anything has been kept.
    pub fn estimate(&self) -> Option<DenseMatrix> {
        (self.kept > 0).then(|| {
            let n = self.kept as f64;
            DenseMatrix::new(
                self.running_sum.rows(),
                self.running_sum.cols(),
                self.running_sum.as_slice().iter().map(|s| s / n).collect(),
            )
            .expect("running sum is finite")
        })
    }
}

/// One row of the diagnostics trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GibbsTraceRow {
    pub iteration: usize,
    /// `-λ‖Y - UVᵀ‖² + ln π(U, V, γ)` at the current sample.
    pub quasi_log_posterior: f64,
    /// MSE of the running estimate against the true signal, when supplied.
    pub mse_vs_truth: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GibbsOutput {
    pub m_hat: DenseMatrix,
    pub last: Factorization,
    pub trace: Vec<GibbsTraceRow>,
}

/// `iteration,quasi_log_posterior,mse_vs_truth`; the last column is empty
/// when no truth was supplied.
pub fn trace_csv(trace: &[GibbsTraceRow]) -> String {
    let mut out = String::from("iteration,quasi_log_posterior,mse_vs_truth\n");
    for row in trace {
        let mse = row.mse_vs_truth.map(|m| m.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", row.iteration, row.quasi_log_posterior, mse));
    }
    out
}

/// Optional starting point and ground truth for `run_gibbs_with`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GibbsOptions<'a> {
    pub init: Option<&'a Factorization>,
    pub truth: Option<&'a DenseMatrix>,
}

/// `-λ‖Y - UVᵀ‖²_F + ln π(U, V, γ)`.
pub fn quasi_log_posterior(y: &DenseMatrix, fac: &Factorization, lambda: f64, priors: &Priors) -> Result<f64> {
    Ok(-lambda * residual_sq(y, fac.u(), fac.v()) + log_prior(fac, priors)?)
}

/// One outer iteration: every row of U given (V, γ) from the previous
/// iteration, then every row of V given the new U, then every scale.
pub fn gibbs_step<R: Rng + ?Sized>(
    state: ChainState,
    y: &DenseMatrix,
    config: &ModelConfig,
    gc: &GibbsConfig,
    priors: &Priors,
    rng: &mut R,
) -> Result<ChainState> {
    step_with(state, y, &y.transpose(), config, gc, priors, rng)
}

fn step_with<R: Rng + ?Sized>(
    mut state: ChainState,
    y: &DenseMatrix,
    yt: &DenseMatrix,
    config: &ModelConfig,
    gc: &GibbsConfig,
    priors: &Priors,
    rng: &mut R,
) -> Result<ChainState> {
    if y.shape() != (state.fac.m1(), state.fac.m2()) {
        return Err(Error::Shape(format!(
            "data is {:?} but the factors give {}x{}",
            y.shape(),
            state.fac.m1(),
            state.fac.m2()
        )));
    }
    {
        let (u, v, gamma) = state.fac.parts_mut();
        update_rows(u, y, v, gamma, config.lambda, priors, gc, rng)?;
        update_rows(v, yt, u, gamma, config.lambda, priors, gc, rng)?;
        for l in 0..gamma.len() {
            gamma[l] = sample_gamma_conditional(priors, u, v, l, rng)?;
        }
    }
    state.iteration += 1;
    if state.iteration > gc.burn_in {
        let recon = state.fac.reconstruct();
        for (s, r) in state.running_sum.as_mut_slice().iter_mut().zip(recon.as_slice()) {
            *s += r;
        }
        state.kept += 1;
    }
    Ok(state)
}

#[allow(clippy::too_many_arguments)]
fn update_rows<R: Rng + ?Sized>(
    target: &mut DenseMatrix,
    data: &DenseMatrix,
    other: &DenseMatrix,
    gamma: &[f64],
    lambda: f64,
    priors: &Priors,
    gc: &GibbsConfig,
    rng: &mut R,
) -> Result<()> {
    let block = RowBlock::new(data, other, gamma, lambda, &priors.element, gc.jitter)?;
    for i in 0..target.rows() {
        let mean = block.mean(i);
        coordinate_sweeps(block.precision(), mean.as_slice(), target.row_mut(i), gc.inner_sweeps, rng);
    }
    Ok(())
}

/// Runs the chain from the default initialization and returns the average
/// of the kept reconstructions.
pub fn run_gibbs(y: &DenseMatrix, config: &ModelConfig, gc: &GibbsConfig, priors: &Priors) -> Result<GibbsOutput> {
    run_gibbs_with(y, config, gc, priors, GibbsOptions::default())
}

pub fn run_gibbs_with(
    y: &DenseMatrix,
    config: &ModelConfig,
    gc: &GibbsConfig,
    priors: &Priors,
    opts: GibbsOptions<'_>,
) -> Result<GibbsOutput> {
    gc.validate()?;
    if let Some(truth) = opts.truth {
        if truth.shape() != y.shape() {
            return Err(Error::Shape("truth and data shapes differ".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(gc.seed);
    let init = match opts.init {
        Some(f) => {
            if f.k() != config.k {
                return Err(Error::Shape(format!("init has K = {}, config has K = {}", f.k(), config.k)));
            }
            f.clone()
        }
        None => default_init(y, config.k, &mut rng)?,
    };
    let yt = y.transpose();
    let mut state = ChainState::new(init);
    let mut trace = Vec::with_capacity(gc.n_iters);
    for _ in 0..gc.n_iters {
        state = step_with(state, y, &yt, config, gc, priors, &mut rng)?;
        let mse_vs_truth = match (opts.truth, state.estimate()) {
            (Some(t), Some(est)) => Some(mse(t, &est)?),
            _ => None,
        };
        trace.push(GibbsTraceRow {
            iteration: state.iteration,
            quasi_log_posterior: quasi_log_posterior(y, &state.fac, config.lambda, priors)?,
            mse_vs_truth,
        });
    }
    let m_hat = state
        .estimate()
        .ok_or_else(|| Error::Config("no iterations were kept".into()))?;
    Ok(GibbsOutput { m_hat, last: state.fac, trace })
}
