//! Numeric evaluation of the oracle inequality for the posterior mean.
//!
//! With λ = 1/(4σ²), for any `r ≤ K` and non-negative `(U⁰, V⁰)` whose
//! columns beyond `r` vanish,
//!
//! ```text
//! E‖M̂_λ - M‖²_F ≤ ‖U⁰V⁰ᵀ - M‖²_F
//!   + 8σ²(m1∨m2) r ln( √(2(m1∨m2)/r) (‖U⁰‖_F + ‖V⁰‖_F + √(σKr))² / (σ C_f) )
//!   + 4σ² Σ_{i, ℓ≤r} ln(1/f̃(U⁰_{iℓ} + √σ)) + 4σ² Σ_{j, ℓ≤r} ln(1/f̃(V⁰_{jℓ} + √σ))
//!   + 4σ² β K ln( 2 S_f √(m1 m2) (‖U⁰‖_F + ‖V⁰‖_F + √(σKr))² / (rσ) )
//!   + 8σ² r + 4σ² K ln(1/α) + 4σ² ln 4
//! ```
//!
//! Here σ = √σ². The functions below evaluate the right-hand side for given
//! candidates; they do not search over all of 𝓜_r.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::model::{frobenius_sq, ModelConfig};
use crate::priors::PriorConstants;

/// A comparison factorization `(U⁰, V⁰)` of rank at most `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    u0: DenseMatrix,
    v0: DenseMatrix,
    r: usize,
    l: Option<f64>,
}

impl BoundQuery {
    /// `u0` and `v0` may carry exactly `r` columns or be zero-padded wider;
    /// columns past `r` must be zero.
    pub fn new(u0: DenseMatrix, v0: DenseMatrix, r: usize, l: Option<f64>) -> Result<Self> {
        if u0.cols() != v0.cols() {
            return Err(Error::Shape(format!("U0 has {} columns, V0 has {}", u0.cols(), v0.cols())));
        }
        if r == 0 || r > u0.cols() {
            return Err(Error::Domain(format!("rank r = {r} must lie in 1..={}", u0.cols())));
        }
        if u0.min() < 0.0 || v0.min() < 0.0 {
            return Err(Error::Domain("U0 and V0 must be entrywise non-negative".into()));
        }
        for m in [&u0, &v0] {
            for i in 0..m.rows() {
                if m.row(i)[r..].iter().any(|&x| x != 0.0) {
                    return Err(Error::Domain(format!("columns beyond r = {r} must be zero")));
                }
            }
        }
        if let Some(l) = l {
            if !(l > 0.0) {
                return Err(Error::Domain(format!("entry bound L must be positive, got {l}")));
            }
            if u0.max() > l || v0.max() > l {
                return Err(Error::Domain(format!("entries exceed the bound L = {l}")));
            }
        }
        Ok(Self { u0, v0, r, l })
    }

    pub fn u0(&self) -> &DenseMatrix {
        &self.u0
    }

    pub fn v0(&self) -> &DenseMatrix {
        &self.v0
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn l(&self) -> Option<f64> {
        self.l
    }
}

/// The summands of the bound, isolated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundBreakdown {
    /// `‖U⁰V⁰ᵀ - M‖²_F`.
    pub approx_error: f64,
    /// The `8σ²(m1∨m2) r ln(...)` term.
    pub complexity_term: f64,
    pub u_tail_term: f64,
    pub v_tail_term: f64,
    /// The `4σ²βK ln(...)` term.
    pub beta_term: f64,
    /// `8σ²r + 4σ²K ln(1/α) + 4σ² ln 4`.
    pub residual_terms: f64,
    pub total: f64,
}

impl BoundBreakdown {
    fn assemble(
        approx_error: f64,
        complexity_term: f64,
        u_tail_term: f64,
        v_tail_term: f64,
        beta_term: f64,
        residual_terms: f64,
    ) -> Self {
        let total = approx_error + complexity_term + u_tail_term + v_tail_term + beta_term + residual_terms;
        Self { approx_error, complexity_term, u_tail_term, v_tail_term, beta_term, residual_terms, total }
    }
}

fn residual_terms(sigma2: f64, r: usize, k: usize, pc: &PriorConstants) -> f64 {
    8.0 * sigma2 * r as f64 - 4.0 * sigma2 * k as f64 * pc.ln_alpha + 4.0 * sigma2 * 4f64.ln()
}

/// `4σ² Σ_{rows, ℓ≤r} -ln f̃(x + √σ)`; `+∞` when f̃ vanishes.
fn tail_term(m: &DenseMatrix, r: usize, sigma2: f64, pc: &PriorConstants) -> f64 {
    let shift = sigma2.sqrt().sqrt();
    let mut s = 0.0;
    for i in 0..m.rows() {
        for &x in &m.row(i)[..r] {
            s -= pc.f_tilde.ln_eval(x + shift);
        }
    }
    4.0 * sigma2 * s
}

/// Right-hand side of the oracle inequality at one candidate.
pub fn theorem_bound(q: &BoundQuery, m: &DenseMatrix, config: &ModelConfig, pc: &PriorConstants) -> Result<BoundBreakdown> {
    let (m1, m2) = m.shape();
    if q.u0.rows() != m1 || q.v0.rows() != m2 {
        return Err(Error::Shape(format!(
            "U0 is {:?}, V0 is {:?}, M is {m1}x{m2}",
            q.u0.shape(),
            q.v0.shape()
        )));
    }
    let k = config.k;
    if q.r > k {
        return Err(Error::Domain(format!("r = {} exceeds K = {k}", q.r)));
    }
    let sigma2 = config.sigma2;
    let sigma = sigma2.sqrt();
    let r = q.r as f64;
    let m_max = m1.max(m2) as f64;

    let approx_error = frobenius_sq(&q.u0.matmul_t(&q.v0)?, m)?;
    let norm_term = (q.u0.frobenius_norm() + q.v0.frobenius_norm() + (sigma * k as f64 * r).sqrt()).powi(2);
    let complexity_term =
        8.0 * sigma2 * m_max * r * ((2.0 * m_max / r).sqrt() * norm_term / (sigma * pc.c_f)).ln();
    let u_tail_term = tail_term(&q.u0, q.r, sigma2, pc);
    let v_tail_term = tail_term(&q.v0, q.r, sigma2, pc);
    let beta_term = if pc.beta == 0.0 {
        0.0
    } else {
        4.0 * sigma2 * pc.beta * k as f64
            * (2.0 * pc.s_f * ((m1 * m2) as f64).sqrt() * norm_term / (r * sigma)).ln()
    };
    Ok(BoundBreakdown::assemble(
        approx_error,
        complexity_term,
        u_tail_term,
        v_tail_term,
        beta_term,
        residual_terms(sigma2, q.r, k, pc),
    ))
}

/// The entry-bounded version of the bound, without the data-dependent
/// `‖U⁰V⁰ᵀ - M‖²_F` term (the caller adds it).
pub fn corollary_bound(
    r: usize,
    l: f64,
    k: usize,
    m1: usize,
    m2: usize,
    config: &ModelConfig,
    pc: &PriorConstants,
) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::Domain(format!("L must be positive, got {l}")));
    }
    if r == 0 || r > k {
        return Err(Error::Domain(format!("r = {r} must lie in 1..={k}")));
    }
    let sigma2 = config.sigma2;
    let sigma = sigma2.sqrt();
    let ln_dims = 3.0 * ((m1 * m2) as f64).ln();
    let ln_spread = (l * l + sigma).ln();
    let complexity = 8.0 * sigma2 * m1.max(m2) as f64 * r as f64
        * (2f64.ln() + ln_spread + ln_dims - sigma.ln() - pc.c_f.ln() - pc.f_tilde.ln_eval(l + sigma.sqrt()));
    let beta_term = if pc.beta == 0.0 {
        0.0
    } else {
        4.0 * sigma2 * pc.beta * k as f64 * ((2.0 * pc.s_f).ln() + ln_spread + ln_dims - sigma.ln())
    };
    Ok(complexity + beta_term + residual_terms(sigma2, r, k, pc))
}

/// Smallest bound among `candidates`; ties go to the lowest index.
pub fn best_bound_over_grid(
    m: &DenseMatrix,
    config: &ModelConfig,
    pc: &PriorConstants,
    candidates: &[BoundQuery],
) -> Result<(BoundBreakdown, usize)> {
    let mut best: Option<(BoundBreakdown, usize)> = None;
    for (i, q) in candidates.iter().enumerate() {
        let b = theorem_bound(q, m, config, pc)?;
        if best.as_ref().is_none_or(|(cur, _)| b.total < cur.total) {
            best = Some((b, i));
        }
    }
    best.ok_or_else(|| Error::Config("no bound candidates supplied".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_validation() {
        let u = DenseMatrix::from_rows(&[[1.0, 0.0], [2.0, 0.0]]).unwrap();
        let v = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(BoundQuery::new(u.clone(), v.clone(), 1, None).is_ok());
        assert!(BoundQuery::new(u.clone(), v.clone(), 0, None).is_err());
        assert!(BoundQuery::new(u.clone(), v.clone(), 1, Some(1.5)).is_err());
        let bad = DenseMatrix::from_rows(&[[1.0, 1.0], [2.0, 0.0]]).unwrap();
        assert!(BoundQuery::new(bad, v, 1, None).is_err());
    }
}
