//! Factorization state, model configuration and error metrics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};

/// Non-negative factors `U` (m1×K), `V` (m2×K) and the per-column scales `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    u: DenseMatrix,
    v: DenseMatrix,
    gamma: Vec<f64>,
}

impl Factorization {
    pub fn new(u: DenseMatrix, v: DenseMatrix, gamma: Vec<f64>) -> Result<Self> {
        if u.cols() != v.cols() || u.cols() != gamma.len() {
            return Err(Error::Shape(format!(
                "U has {} columns, V has {}, gamma has {}",
                u.cols(),
                v.cols(),
                gamma.len()
            )));
        }
        if u.min() < 0.0 || v.min() < 0.0 {
            return Err(Error::Domain("factor entries must be non-negative".into()));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::Domain(format!("scale {g} is not a positive finite number")));
        }
        Ok(Self { u, v, gamma })
    }

    #[inline]
    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    #[inline]
    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    #[inline]
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.gamma.len()
    }

    #[inline]
    pub fn m1(&self) -> usize {
        self.u.rows()
    }

    #[inline]
    pub fn m2(&self) -> usize {
        self.v.rows()
    }

    pub fn into_parts(self) -> (DenseMatrix, DenseMatrix, Vec<f64>) {
        (self.u, self.v, self.gamma)
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut DenseMatrix, &mut DenseMatrix, &mut Vec<f64>) {
        (&mut self.u, &mut self.v, &mut self.gamma)
    }

    /// `U Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.u.matmul_t(&self.v).expect("factor widths validated at construction")
    }
}

/// Noise level, inverse temperature and factorization width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Noise variance bound σ².
    pub sigma2: f64,
    /// Inverse temperature λ of the quasi-likelihood `exp(-λ‖Y - UVᵀ‖²)`.
    pub lambda: f64,
    /// Number of columns K.
    pub k: usize,
}

impl ModelConfig {
    /// Config with the theorem-mode temperature λ = 1/(4σ²).
    pub fn new(sigma2: f64, k: usize) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(Self { sigma2, lambda: 1.0 / (4.0 * sigma2), k })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Checks `2 <= K <= min(m1, m2)`.
    pub fn validate_dims(&self, m1: usize, m2: usize) -> Result<()> {
        if self.k < 2 || self.k > m1.min(m2) {
            return Err(Error::Config(format!(
                "K = {} must satisfy 2 <= K <= min({m1}, {m2})",
                self.k
            )));
        }
        Ok(())
    }

    /// The oracle inequality only holds for λ ≤ 1/(4σ²).
    pub fn validate_theorem_mode(&self) -> Result<()> {
        let limit = 1.0 / (4.0 * self.sigma2);
        if self.lambda > limit * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "lambda = {} exceeds 1/(4 sigma2) = {limit}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Computes `U Vᵀ`; the factors must have the same width.
pub fn reconstruct(fac: &Factorization) -> DenseMatrix {
    fac.reconstruct()
}

/// `‖A - B‖²_F`.
pub fn frobenius_sq(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// Mean squared error `‖M - M̂‖²_F / (m1 m2)`.
pub fn mse(m: &DenseMatrix, m_hat: &DenseMatrix) -> Result<f64> {
    Ok(frobenius_sq(m, m_hat)? / (m.rows() * m.cols()) as f64)
}

/// Number of scales strictly above `tau`.
pub fn effective_rank(fac: &Factorization, tau: f64) -> usize {
    count_above(fac.gamma(), tau)
}

pub(crate) fn count_above(gamma: &[f64], tau: f64) -> usize {
    gamma.iter().filter(|&&g| g > tau).count()
}

/// `‖Y - U Vᵀ‖²_F` without materialising the product.
pub fn residual_sq(y: &DenseMatrix, u: &DenseMatrix, v: &DenseMatrix) -> f64 {
    let mut acc = 0.0;
    for i in 0..y.rows() {
        let ui = u.row(i);
        for (j, &yij) in y.row(i).iter().enumerate() {
            let r = yij - dot(ui, v.row(j));
            acc += r * r;
        }
    }
    acc
}

/// Random starting point: factor entries i.i.d. uniform on `[0, sqrt(mean(max(Y, 0)) / K))`,
/// all scales equal to one.
pub fn default_init<R: Rng + ?Sized>(y: &DenseMatrix, k: usize, rng: &mut R) -> Result<Factorization> {
    if k == 0 {
        return Err(Error::Config("K must be positive".into()));
    }
    let pos_mean = y.as_slice().iter().map(|v| v.max(0.0)).sum::<f64>() / y.as_slice().len() as f64;
    // An all-non-positive Y would give an empty range.
    let upper = (pos_mean / k as f64).sqrt().max(1e-3);
    let u = DenseMatrix::from_fn(y.rows(), k, |_, _| rng.random::<f64>() * upper);
    let v = DenseMatrix::from_fn(y.cols(), k, |_, _| rng.random::<f64>() * upper);
    Factorization::new(u, v, vec![1.0; k])
}
