//! Posterior mode by block coordinate descent.
//!
//! Each outer iteration minimizes
//! `λ‖Y - UVᵀ‖²_F - ln π(U, V, γ)` over U (projected gradient), then V
//! (projected gradient), then γ (closed-form conditional modes where the
//! scale conditional is conjugate, a one-dimensional search otherwise).
//! Steps are chosen by backtracking with a sufficient-decrease test, so the
//! objective never increases.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::model::{default_init, residual_sq, Factorization, ModelConfig};
use crate::priors::{log_prior, ElementPrior, Priors};
use crate::sampler::{scale_conditional, ScaleConditional};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub max_outer: usize,
    pub max_inner: usize,
    /// First trial step of the projected-gradient blocks.
    pub step0: f64,
    /// Step shrink factor for backtracking, in (0, 1).
    pub backtrack: f64,
    /// Relative objective change that ends a block or the outer loop.
    pub tol_obj: f64,
    /// Projected-gradient norm that ends a block.
    pub tol_grad: f64,
    pub gamma_floor: f64,
    /// Seed for the default initialization.
    pub seed: u64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            max_outer: 2000,
            max_inner: 100,
            step0: 1.0,
            backtrack: 0.5,
            tol_obj: 1e-10,
            tol_grad: 1e-9,
            gamma_floor: 1e-8,
            seed: 0,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Config("max_outer and max_inner must be positive".into()));
        }
        if !(self.step0 > 0.0) {
            return Err(Error::Config(format!("step0 must be positive, got {}", self.step0)));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config(format!("backtrack must lie in (0, 1), got {}", self.backtrack)));
        }
        if !(self.tol_obj > 0.0 && self.tol_grad > 0.0 && self.gamma_floor > 0.0) {
            return Err(Error::Config("tolerances and gamma_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Objective values recorded over one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapRecord {
    pub outer: usize,
    pub after_u: f64,
    pub after_v: f64,
    /// Objective at the end of the iteration.
    pub objective: f64,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapTrace {
    pub initial_objective: f64,
    pub records: Vec<MapRecord>,
}

impl MapTrace {
    /// Every objective value in evaluation order, starting with the initial one.
    pub fn objective_sequence(&self) -> Vec<f64> {
        let mut out = vec![self.initial_objective];
        for r in &self.records {
            out.extend([r.after_u, r.after_v, r.objective]);
        }
        out
    }

    /// CSV with header `outer_iter,objective,gamma_1,...,gamma_K`.
    pub fn to_csv(&self) -> String {
        let k = self.records.first().map_or(0, |r| r.gamma.len());
        let mut out = String::from("outer_iter,objective");
        for l in 1..=k {
            let _ = write!(out, ",gamma_{l}");
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{}", r.outer, r.objective);
            for g in &r.gamma {
                let _ = write!(out, ",{g}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MapOutput {
    pub fac: Factorization,
    pub trace: MapTrace,
    pub converged: bool,
}

/// `λ‖Y - UVᵀ‖²_F - ln π(U, V, γ)`.
pub fn map_objective(y: &DenseMatrix, fac: &Factorization, config: &ModelConfig, priors: &Priors) -> Result<f64> {
    if y.shape() != (fac.m1(), fac.m2()) {
        return Err(Error::Shape(format!(
            "data is {:?}, factors give {}x{}",
            y.shape(),
            fac.m1(),
            fac.m2()
        )));
    }
    Ok(config.lambda * residual_sq(y, fac.u(), fac.v()) - log_prior(fac, priors)?)
}

/// Gradient of the U-block objective `λ‖Y - UVᵀ‖² - Σ ln g_{γ_ℓ}(U_{iℓ})`.
pub fn grad_u(
    y: &DenseMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    gamma: &[f64],
    lambda: f64,
    p: &ElementPrior,
) -> Result<DenseMatrix> {
    if y.rows() != u.rows() || y.cols() != v.rows() || u.cols() != v.cols() || gamma.len() != u.cols() {
        return Err(Error::Shape("inconsistent shapes in grad_u".into()));
    }
    let block = FactorBlock::new(y, v, gamma, lambda, p)?;
    let mut g = vec![0.0; u.rows() * u.cols()];
    block.gradient(u.as_slice(), &mut g);
    DenseMatrix::new(u.rows(), u.cols(), g)
}

/// Gradient of the V-block objective.
pub fn grad_v(
    y: &DenseMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    gamma: &[f64],
    lambda: f64,
    p: &ElementPrior,
) -> Result<DenseMatrix> {
    grad_u(&y.transpose(), v, u, gamma, lambda, p)
}

/// Quadratic-plus-prior objective of one factor with the other held fixed:
/// `λ(‖Y‖² - 2⟨YW, X⟩ + ⟨X WᵀW, X⟩) + Σ ψ(X_{iℓ}/γ_ℓ)` with `ψ = -ln f`
/// up to constants.
struct FactorBlock<'a> {
    yw: DenseMatrix,
    gram: DenseMatrix,
    y_norm_sq: f64,
    lambda: f64,
    gamma: &'a [f64],
    element: &'a ElementPrior,
}

impl<'a> FactorBlock<'a> {
    fn new(
        y: &DenseMatrix,
        other: &DenseMatrix,
        gamma: &'a [f64],
        lambda: f64,
        element: &'a ElementPrior,
    ) -> Result<Self> {
        Ok(Self {
            yw: y.matmul(other)?,
            gram: other.gram(),
            y_norm_sq: y.frobenius_norm_sq(),
            lambda,
            gamma,
            element,
        })
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let k = self.gamma.len();
        let mut quad = 0.0;
        let mut prior = 0.0;
        for (xi, ywi) in x.chunks_exact(k).zip(self.yw.as_slice().chunks_exact(k)) {
            for a in 0..k {
                let mut xg = 0.0;
                for b in 0..k {
                    xg += xi[b] * self.gram.get(b, a);
                }
                quad += xi[a] * (xg - 2.0 * ywi[a]);
                prior += self.element.neg_ln_kernel(xi[a] / self.gamma[a]);
            }
        }
        self.lambda * (self.y_norm_sq + quad) + prior
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let k = self.gamma.len();
        for ((xi, ywi), gi) in x
            .chunks_exact(k)
            .zip(self.yw.as_slice().chunks_exact(k))
            .zip(out.chunks_exact_mut(k))
        {
            for a in 0..k {
                let mut xg = 0.0;
                for b in 0..k {
                    xg += xi[b] * self.gram.get(b, a);
                }
                let g = self.gamma[a];
                gi[a] = 2.0 * self.lambda * (xg - ywi[a]) + self.element.neg_ln_kernel_deriv(xi[a] / g) / g;
            }
        }
    }
}

/// Result of one projected-gradient block solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Last accepted step, useful as the next starting step.
    pub step: f64,
}

/// Projected gradient descent on the non-negative orthant:
/// `x ← max(0, x - step·∇)`, with the step shrunk by `cfg.backtrack` until
/// the sufficient-decrease test passes and grown again after each accepted
/// step. Stops after `cfg.max_inner` iterations, when the relative decrease
/// falls below `cfg.tol_obj`, or when the projected gradient vanishes.
///
/// # Panics
/// Panics if `x0` has a negative entry.
pub fn projected_gradient_block<F, G>(objective: F, gradient: G, x0: &[f64], cfg: &MapConfig) -> BlockOutcome
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    projected_gradient_from(objective, gradient, x0, cfg.step0, cfg)
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 80;

fn projected_gradient_from<F, G>(objective: F, gradient: G, x0: &[f64], step0: f64, cfg: &MapConfig) -> BlockOutcome
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    assert!(x0.iter().all(|&v| v >= 0.0), "block start must be non-negative");
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut f = objective(&x);
    let mut g = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut step = step0;
    let mut iterations = 0;

    while iterations < cfg.max_inner {
        gradient(&x, &mut g);
        let pg_norm = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| {
                let d = xi - (xi - gi).max(0.0);
                d * d
            })
            .sum::<f64>()
            .sqrt();
        if pg_norm <= cfg.tol_grad {
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut slope = 0.0;
            for i in 0..n {
                trial[i] = (x[i] - step * g[i]).max(0.0);
                slope += g[i] * (trial[i] - x[i]);
            }
            if slope >= 0.0 {
                break;
            }
            let f_trial = objective(&trial);
            if f_trial <= f + ARMIJO * slope {
                accepted = Some(f_trial);
                break;
            }
            step *= cfg.backtrack;
        }
        let Some(f_new) = accepted else { break };
        iterations += 1;
        let decrease = f - f_new;
        std::mem::swap(&mut x, &mut trial);
        f = f_new;
        step /= cfg.backtrack;
        if decrease <= cfg.tol_obj * f.abs().max(1.0) {
            break;
        }
    }
    BlockOutcome { x, objective: f, iterations, step }
}

/// Closed-form γ update: each γ_ℓ is the mode of its conjugate full
/// conditional (for the truncated Gaussian prior, the square root of the
/// mode of the γ² conditional), floored at `gamma_floor`.
pub fn update_gamma_mode(priors: &Priors, u: &DenseMatrix, v: &DenseMatrix, gamma_floor: f64) -> Result<Vec<f64>> {
    (0..u.cols())
        .map(|l| {
            let cond = scale_conditional(priors, u, v, l)?;
            let t = match cond {
                // a zero column: the conditional increases towards the origin
                ScaleConditional::Prior { .. } => 0.0,
                _ => cond.mode(),
            };
            let g = if priors.scale_on_square() { t.sqrt() } else { t };
            Ok(g.max(gamma_floor))
        })
        .collect()
}

/// Negative log conditional of one scale, up to constants.
fn scale_objective(priors: &Priors, column: &[f64], m1: usize, m2: usize, g: f64) -> f64 {
    let p = &priors.element;
    let mut s = -priors.scale_log_density(m1, m2, g);
    for &x in column {
        s -= p.ln_scaled(g, x);
    }
    s
}

/// One-dimensional minimization of the scale objective over `[floor, 1e12]`
/// in log-space: grid search followed by golden-section refinement. The
/// current value is kept unless the search finds a strictly better one.
fn numeric_gamma_update(priors: &Priors, u: &DenseMatrix, v: &DenseMatrix, current: &[f64], floor: f64) -> Vec<f64> {
    let (m1, m2) = (u.rows(), v.rows());
    let lo = floor.ln();
    let hi = 1e12f64.ln().max(lo + 1.0);
    const GRID: usize = 400;
    (0..u.cols())
        .map(|l| {
            let mut column = u.column(l);
            column.extend(v.column(l));
            let phi = |s: f64| scale_objective(priors, &column, m1, m2, s.exp());
            let h = (hi - lo) / GRID as f64;
            let best = (0..=GRID)
                .map(|i| (i, phi(lo + h * i as f64)))
                .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
                .0;
            let (mut a, mut b) = (lo + h * best.saturating_sub(1) as f64, lo + h * (best + 1).min(GRID) as f64);
            let ratio = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = b - ratio * (b - a);
            let mut d = a + ratio * (b - a);
            let (mut fc, mut fd) = (phi(c), phi(d));
            while b - a > 1e-12 {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - ratio * (b - a);
                    fc = phi(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + ratio * (b - a);
                    fd = phi(d);
                }
            }
            let cand = (0.5 * (a + b)).exp().max(floor);
            let old = current[l].max(floor);
            if phi(cand.ln()) < phi(old.ln()) {
                cand
            } else {
                old
            }
        })
        .collect()
}

fn has_conjugate_scale(priors: &Priors) -> bool {
    use crate::priors::ElementKind;
    match priors.element.kind() {
        ElementKind::Exponential => true,
        ElementKind::TruncatedGaussian { a } => a == 0.0,
        ElementKind::HeavyTail { .. } => false,
    }
}

/// Runs block coordinate descent from `init`, or from the default
/// initialization seeded by `mc.seed`.
pub fn run_map(
    y: &DenseMatrix,
    config: &ModelConfig,
    mc: &MapConfig,
    priors: &Priors,
    init: Option<&Factorization>,
) -> Result<MapOutput> {
    mc.validate()?;
    let fac = match init {
        Some(f) => {
            if f.k() != config.k {
                return Err(Error::Shape(format!("init has K = {}, config has K = {}", f.k(), config.k)));
            }
            f.clone()
        }
        None => default_init(y, config.k, &mut ChaCha8Rng::seed_from_u64(mc.seed))?,
    };
    if y.shape() != (fac.m1(), fac.m2()) {
        return Err(Error::Shape(format!("data is {:?}, init gives {}x{}", y.shape(), fac.m1(), fac.m2())));
    }
    let (mut u, mut v, mut gamma) = fac.into_parts();
    for g in gamma.iter_mut() {
        *g = g.max(mc.gamma_floor);
    }
    let yt = y.transpose();
    let conjugate = has_conjugate_scale(priors);
    let objective_of = |u: &DenseMatrix, v: &DenseMatrix, gamma: &[f64]| -> Result<f64> {
        let fac = Factorization::new(u.clone(), v.clone(), gamma.to_vec())?;
        map_objective(y, &fac, config, priors)
    };

    let initial_objective = objective_of(&u, &v, &gamma)?;
    let mut prev = initial_objective;
    let mut records = Vec::new();
    let mut converged = false;
    let (mut step_u, mut step_v) = (mc.step0, mc.step0);

    for outer in 1..=mc.max_outer {
        let block = FactorBlock::new(y, &v, &gamma, config.lambda, &priors.element)?;
        let out = projected_gradient_from(|x| block.objective(x), |x, g| block.gradient(x, g), u.as_slice(), step_u, mc);
        step_u = out.step;
        u = DenseMatrix::new(u.rows(), u.cols(), out.x)?;
        let after_u = objective_of(&u, &v, &gamma)?;

        let block = FactorBlock::new(&yt, &u, &gamma, config.lambda, &priors.element)?;
        let out = projected_gradient_from(|x| block.objective(x), |x, g| block.gradient(x, g), v.as_slice(), step_v, mc);
        step_v = out.step;
        v = DenseMatrix::new(v.rows(), v.cols(), out.x)?;
        let after_v = objective_of(&u, &v, &gamma)?;

        gamma = if conjugate {
            update_gamma_mode(priors, &u, &v, mc.gamma_floor)?
        } else {
            numeric_gamma_update(priors, &u, &v, &gamma, mc.gamma_floor)
        };
        let objective = objective_of(&u, &v, &gamma)?;
        records.push(MapRecord { outer, after_u, after_v, objective, gamma: gamma.clone() });

        if prev - objective <= mc.tol_obj * prev.abs().max(1.0) {
            converged = true;
            break;
        }
        prev = objective;
    }
    Ok(MapOutput { fac: Factorization::new(u, v, gamma)?, trace: MapTrace { initial_objective, records }, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::ScaleHyperprior;

    #[test]
    fn block_converges_to_interior_optimum() {
        let out = projected_gradient_block(|x| (x[0] - 3.0).powi(2), |x, g| g[0] = 2.0 * (x[0] - 3.0), &[0.0], &MapConfig::default());
        assert!((out.x[0] - 3.0).abs() < 1e-6, "{:?}", out);
    }

    #[test]
    fn block_respects_active_constraint() {
        let out = projected_gradient_block(|x| (x[0] + 3.0).powi(2), |x, g| g[0] = 2.0 * (x[0] + 3.0), &[1.0], &MapConfig::default());
        assert_eq!(out.x[0], 0.0);
        assert!(out.objective <= 16.0);
    }

    #[test]
    fn inverse_gamma_mode_for_empty_column() {
        let priors = Priors::new(ElementPrior::exponential(), ScaleHyperprior::inverse_gamma(1.0, 1.0).unwrap());
        let z = DenseMatrix::zeros(1, 2);
        let g = update_gamma_mode(&priors, &z, &z, 1e-8).unwrap();
        assert_eq!(g, vec![0.25, 0.25]);
    }

    #[test]
    fn heavy_tail_has_no_closed_form() {
        let priors = Priors::new(ElementPrior::heavy_tail(4.0).unwrap(), ScaleHyperprior::gamma(1.0).unwrap());
        let z = DenseMatrix::zeros(2, 2);
        assert!(matches!(update_gamma_mode(&priors, &z, &z, 1e-8), Err(Error::Unsupported(_))));
    }

    #[test]
    fn config_validation() {
        assert!(MapConfig::default().validate().is_ok());
        assert!(MapConfig { backtrack: 1.0, ..MapConfig::default() }.validate().is_err());
        assert!(MapConfig { max_inner: 0, ..MapConfig::default() }.validate().is_err());
    }
}
