//! Full conditionals of the quasi-posterior.
//!
//! Row conditionals are written in precision form. As a function of one row
//! `u` of U the log target is
//!
//! ```text
//! -λ‖y - u Vᵀ‖² + Σ_ℓ ln g_{γ_ℓ}(u_ℓ)
//!   = -λ u VᵀV uᵀ + 2λ u Vᵀyᵀ + (prior terms) + const
//! ```
//!
//! Exponential prior: precision `P = 2λ VᵀV`, linear term `2λ Vᵀyᵀ - γ⁻¹`.
//! Truncated Gaussian prior: `P = 2λ VᵀV + 2 Diag(γ)⁻²`, linear term
//! `2λ Vᵀyᵀ + 2a γ⁻¹`. In both cases mean = `P⁻¹ · linear`, covariance = `P⁻¹`,
//! so the exponential covariance is `Σ_U / (2λ)` with `Σ_U = (VᵀV)⁻¹`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::priors::{ElementKind, ElementPrior, Priors, ScaleHyperprior};

use super::univariate::{sample_gamma, sample_inverse_gamma, sample_inverse_gaussian, sample_univariate_truncnorm};

/// Gaussian on the non-negative orthant, described by its untruncated mean,
/// covariance and precision.
#[derive(Debug, Clone, PartialEq)]
pub struct RowConditional {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub precision: DMatrix<f64>,
}

impl RowConditional {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `-½ (x - μ)ᵀ P (x - μ)`.
    pub fn ln_density_unnormalized(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.mean;
        -0.5 * d.dot(&(&self.precision * &d))
    }
}

/// Precision and linear term shared by all rows of one factor block.
pub(crate) struct RowBlock {
    precision: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `2λ Y W + c`, one row per factor row.
    linear: DenseMatrix,
}

impl RowBlock {
    /// `y` is the data with one row per factor row (Y for U, Yᵀ for V);
    /// `other` is the fixed factor. `jitter` is relative to `max(trace(WᵀW)/K, 1)`.
    pub(crate) fn new(
        y: &DenseMatrix,
        other: &DenseMatrix,
        gamma: &[f64],
        lambda: f64,
        element: &ElementPrior,
        jitter: f64,
    ) -> Result<Self> {
        let precision = block_precision(other, gamma, lambda, element, jitter)?;
        let chol = Cholesky::new(precision.clone())
            .ok_or_else(|| Error::Numerical("row conditional precision is not positive definite".into()))?;
        let shift = linear_shift(gamma, element)?;
        let mut linear = y.matmul(other)?;
        for i in 0..linear.rows() {
            for (l, v) in linear.row_mut(i).iter_mut().enumerate() {
                *v = 2.0 * lambda * *v + shift[l];
            }
        }
        Ok(Self { precision, chol, linear })
    }

    pub(crate) fn mean(&self, i: usize) -> DVector<f64> {
        self.chol.solve(&DVector::from_column_slice(self.linear.row(i)))
    }

    pub(crate) fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
}

fn block_precision(
    other: &DenseMatrix,
    gamma: &[f64],
    lambda: f64,
    element: &ElementPrior,
    jitter: f64,
) -> Result<DMatrix<f64>> {
    let k = other.cols();
    if gamma.len() != k {
        return Err(Error::Shape(format!("{k} factor columns but {} scales", gamma.len())));
    }
    let gram = other.gram();
    let trace: f64 = (0..k).map(|l| gram.get(l, l)).sum();
    // floor keeps an all-zero factor (trace 0) from making the precision singular
    let ridge = jitter * (trace / k as f64).max(1.0);
    let mut p = DMatrix::from_fn(k, k, |a, b| 2.0 * lambda * gram.get(a, b));
    for l in 0..k {
        p[(l, l)] += 2.0 * lambda * ridge;
    }
    match element.kind() {
        ElementKind::Exponential => {}
        ElementKind::TruncatedGaussian { .. } => {
            for (l, g) in gamma.iter().enumerate() {
                p[(l, l)] += 2.0 / (g * g);
            }
        }
        ElementKind::HeavyTail { .. } => return Err(heavy_tail_unsupported()),
    }
    Ok(p)
}

fn linear_shift(gamma: &[f64], element: &ElementPrior) -> Result<Vec<f64>> {
    match element.kind() {
        ElementKind::Exponential => Ok(gamma.iter().map(|g| -1.0 / g).collect()),
        ElementKind::TruncatedGaussian { a } => Ok(gamma.iter().map(|g| 2.0 * a / g).collect()),
        ElementKind::HeavyTail { .. } => Err(heavy_tail_unsupported()),
    }
}

fn heavy_tail_unsupported() -> Error {
    Error::Unsupported("the heavy-tail prior has no Gaussian row conditional; use the MAP optimizer".into())
}

fn single_row(
    y: &DenseMatrix,
    other: &DenseMatrix,
    gamma: &[f64],
    i: usize,
    lambda: f64,
    element: &ElementPrior,
) -> Result<RowConditional> {
    if y.cols() != other.rows() {
        return Err(Error::Shape(format!(
            "data has {} columns but the fixed factor has {} rows",
            y.cols(),
            other.rows()
        )));
    }
    if i >= y.rows() {
        return Err(Error::Shape(format!("row {i} out of range for {} rows", y.rows())));
    }
    if gamma.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Domain("scales must be positive".into()));
    }
    let precision = block_precision(other, gamma, lambda, element, 0.0)?;
    let chol = Cholesky::new(precision.clone())
        .ok_or_else(|| Error::Numerical("singular Gram matrix in row conditional".into()))?;
    let shift = linear_shift(gamma, element)?;
    let yi = y.row(i);
    let linear = DVector::from_fn(other.cols(), |l, _| {
        2.0 * lambda * (0..other.rows()).map(|j| yi[j] * other.get(j, l)).sum::<f64>() + shift[l]
    });
    let mean = chol.solve(&linear);
    let covariance = chol.inverse();
    Ok(RowConditional { mean, covariance, precision })
}

/// Conditional of row `i` of U given V and γ under the exponential prior.
/// For a row of V pass `Yᵀ` and `U`.
pub fn row_conditional_exponential(
    y: &DenseMatrix,
    v: &DenseMatrix,
    gamma: &[f64],
    i: usize,
    lambda: f64,
) -> Result<RowConditional> {
    single_row(y, v, gamma, i, lambda, &ElementPrior::exponential())
}

/// Conditional of row `i` of U given V and γ under the truncated Gaussian prior with parameter `a`.
pub fn row_conditional_truncgauss(
    y: &DenseMatrix,
    v: &DenseMatrix,
    gamma: &[f64],
    i: usize,
    lambda: f64,
    a: f64,
) -> Result<RowConditional> {
    single_row(y, v, gamma, i, lambda, &ElementPrior::truncated_gaussian(a)?)
}

/// One approximate draw from `rc` restricted to the non-negative orthant:
/// `sweeps` passes of coordinate-wise Gibbs, each coordinate drawn exactly
/// from its univariate truncated normal conditional.
pub fn sample_truncated_mvn<R: Rng + ?Sized>(
    rc: &RowConditional,
    sweeps: usize,
    start: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if start.len() != rc.dim() {
        return Err(Error::Shape(format!("start has length {}, expected {}", start.len(), rc.dim())));
    }
    if start.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::Domain("start must lie in the non-negative orthant".into()));
    }
    if Cholesky::new(rc.precision.clone()).is_none() {
        return Err(Error::Numerical("covariance is not positive definite".into()));
    }
    let mut x = start.to_vec();
    coordinate_sweeps(&rc.precision, rc.mean.as_slice(), &mut x, sweeps, rng);
    Ok(x)
}

/// In-place coordinate Gibbs on `N(mean, precision⁻¹)` truncated to `x ≥ 0`.
pub(crate) fn coordinate_sweeps<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    mean: &[f64],
    x: &mut [f64],
    sweeps: usize,
    rng: &mut R,
) {
    let k = mean.len();
    for _ in 0..sweeps {
        for c in 0..k {
            let pcc = precision[(c, c)];
            let mut shift = 0.0;
            for j in 0..k {
                if j != c {
                    shift += precision[(c, j)] * (x[j] - mean[j]);
                }
            }
            x[c] = sample_univariate_truncnorm(mean[c] - shift / pcc, 1.0 / pcc, rng);
        }
    }
}

/// Full conditional of one column scale (of γ², for the truncated Gaussian prior).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleConditional {
    /// Density ∝ t^{-shape-1} e^{-scale/t}.
    InverseGamma { shape: f64, scale: f64 },
    /// Density ∝ t^{-3/2} exp(-ν/2 (t/μ² + 1/t)).
    InverseGaussian { mu: f64, nu: f64 },
    /// The column is identically zero under a Gamma hyperprior: the
    /// likelihood terms vanish and the scale is redrawn from its prior.
    Prior { shape: f64, rate: f64 },
}

impl ScaleConditional {
    /// Normalized log density at `t > 0`.
    pub fn ln_pdf(&self, t: f64) -> f64 {
        use statrs::function::gamma::ln_gamma;
        match *self {
            Self::InverseGamma { shape, scale } => {
                shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * t.ln() - scale / t
            }
            Self::InverseGaussian { mu, nu } => {
                0.5 * (nu / (2.0 * std::f64::consts::PI)).ln() - 1.5 * t.ln()
                    - nu * (t - mu) * (t - mu) / (2.0 * mu * mu * t)
            }
            Self::Prior { shape, rate } => shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * t.ln() - rate * t,
        }
    }

    /// Mode of the density; `0` when it is unbounded at the origin.
    pub fn mode(&self) -> f64 {
        match *self {
            Self::InverseGamma { shape, scale } => scale / (shape + 1.0),
            Self::InverseGaussian { mu, nu } => inverse_gaussian_mode(mu, nu),
            Self::Prior { shape, rate } => ((shape - 1.0) / rate).max(0.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            Self::InverseGamma { shape, scale } => sample_inverse_gamma(shape, scale, rng),
            Self::InverseGaussian { mu, nu } => Ok(sample_inverse_gaussian(mu, nu, rng)),
            Self::Prior { shape, rate } => sample_gamma(shape, rate, rng),
        }
    }
}

/// Mode of IG(μ, ν): `μ [√(1 + 9μ²/(4ν²)) - 3μ/(2ν)]`.
pub fn inverse_gaussian_mode(mu: f64, nu: f64) -> f64 {
    let r = 1.5 * mu / nu;
    // √(1 + r²) - r = 1 / (√(1 + r²) + r)
    mu / ((1.0 + r * r).sqrt() + r)
}

/// Conditional of the scale variable of column `ell` given U and V.
///
/// The variable is γ for the exponential prior and γ² for the truncated
/// Gaussian prior with `a = 0`; other element priors have no conjugate form.
pub fn scale_conditional(
    priors: &Priors,
    u: &DenseMatrix,
    v: &DenseMatrix,
    ell: usize,
) -> Result<ScaleConditional> {
    if u.cols() != v.cols() || ell >= u.cols() {
        return Err(Error::Shape(format!("column {ell} invalid for widths {} and {}", u.cols(), v.cols())));
    }
    let (m1, m2) = (u.rows(), v.rows());
    let n = (m1 + m2) as f64;
    let (stat, shape_shift) = match priors.element.kind() {
        ElementKind::Exponential => {
            let s: f64 = (0..m1).map(|i| u.get(i, ell)).sum::<f64>() + (0..m2).map(|j| v.get(j, ell)).sum::<f64>();
            (s, n)
        }
        ElementKind::TruncatedGaussian { a } if a == 0.0 => {
            let s: f64 = (0..m1).map(|i| u.get(i, ell).powi(2)).sum::<f64>()
                + (0..m2).map(|j| v.get(j, ell).powi(2)).sum::<f64>();
            (s, n / 2.0)
        }
        ElementKind::TruncatedGaussian { a } => {
            return Err(Error::Unsupported(format!(
                "no conjugate scale conditional for the truncated Gaussian prior with a = {a} != 0"
            )))
        }
        ElementKind::HeavyTail { .. } => {
            return Err(Error::Unsupported("no conjugate scale conditional for the heavy-tail prior".into()))
        }
    };
    Ok(match priors.hyper {
        ScaleHyperprior::InverseGamma { a, b } => ScaleConditional::InverseGamma { shape: a + shape_shift, scale: b + stat },
        ScaleHyperprior::Gamma { b } => {
            if stat > 0.0 {
                ScaleConditional::InverseGaussian { mu: (stat / b).sqrt(), nu: 2.0 * stat }
            } else {
                ScaleConditional::Prior { shape: priors.gamma_shape(m1, m2), rate: b }
            }
        }
    })
}

/// Draw γ_ℓ from its full conditional.
pub fn sample_gamma_conditional<R: Rng + ?Sized>(
    priors: &Priors,
    u: &DenseMatrix,
    v: &DenseMatrix,
    ell: usize,
    rng: &mut R,
) -> Result<f64> {
    let t = scale_conditional(priors, u, v, ell)?.sample(rng)?;
    let g = if priors.scale_on_square() { t.sqrt() } else { t };
    Ok(g.max(f64::MIN_POSITIVE))
}
