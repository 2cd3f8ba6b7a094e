//! Special functions not covered directly by `statrs`.

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_ur, ln_gamma};

pub(crate) const LN_SQRT_PI_OVER_2: f64 = -0.120_782_237_635_245_22; // ln(√π / 2)

/// Standard normal upper tail `1 - Φ(x)`.
#[inline]
pub(crate) fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
#[inline]
pub(crate) fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

#[inline]
pub(crate) fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `ln P(s, x)`, the log of the regularized lower incomplete gamma function.
///
/// Uses the power series for `x < s + 1`, which stays accurate when `P` is far
/// below the smallest representable double, and `ln(1 - Q)` otherwise.
pub fn ln_gamma_lr(s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x < s + 1.0 {
        // γ(s,x) = x^s e^{-x} Σ_n x^n / (s (s+1) ... (s+n))
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut n = 1.0;
        while n < 10_000.0 {
            term *= x / (s + n);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            n += 1.0;
        }
        s * x.ln() - x - ln_gamma(s) + sum.ln()
    } else {
        (-gamma_ur(s, x)).ln_1p()
    }
}
