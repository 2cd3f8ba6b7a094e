//! Exact univariate samplers used by the Gibbs conditionals.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::special::{normal_quantile, normal_sf};

/// Standardized truncation point above which the exponential-proposal
/// rejection sampler replaces inversion.
const TAIL_SWITCH: f64 = 5.0;

/// Draw from `N(mu, var)` conditioned on `[0, ∞)`.
///
/// Inversion of the upper tail for moderate truncation; exponential rejection
/// (Robert, 1995) once the truncation point is more than five standard
/// deviations above the mean.
pub fn sample_univariate_truncnorm<R: Rng + ?Sized>(mu: f64, var: f64, rng: &mut R) -> f64 {
    debug_assert!(var > 0.0);
    let sd = var.sqrt();
    let lower = -mu / sd;
    let z = if lower > TAIL_SWITCH {
        robert_tail(lower, rng)
    } else if lower < -8.0 {
        // truncation removes less than 1e-15 of the mass
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= lower {
                break z;
            }
        }
    } else {
        // z = -Φ⁻¹(p) with p uniform on (0, Φ(-lower)] gives z ≥ lower
        let mass = normal_sf(lower);
        let u: f64 = rng.random();
        -normal_quantile((1.0 - u) * mass)
    };
    (mu + sd * z).max(0.0)
}

/// Standard normal restricted to `[lower, ∞)` for large `lower`.
fn robert_tail<R: Rng + ?Sized>(lower: f64, rng: &mut R) -> f64 {
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = lower + e / rate;
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - rate) * (z - rate)).exp() {
            return z;
        }
    }
}

/// Inverse Gaussian draw with mean `mu` and shape `nu`
/// (density ∝ x^{-3/2} exp(-ν/2 (x/μ² + 1/x))), by the Michael–Schucany–Haas
/// transformation.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mu: f64, nu: f64, rng: &mut R) -> f64 {
    debug_assert!(mu > 0.0 && nu > 0.0);
    let n: f64 = StandardNormal.sample(rng);
    let w = mu * n * n / (2.0 * nu);
    // smaller root of the chi-square transform, written without cancellation
    let x = mu / (1.0 + w + (w * (2.0 + w)).sqrt());
    let u: f64 = rng.random();
    let out = if u * (mu + x) <= mu { x } else { mu * mu / x };
    out.max(f64::MIN_POSITIVE)
}

/// Inverse gamma draw, density ∝ x^{-shape-1} e^{-scale/x}.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::Numerical(format!("inverse gamma({shape}, {scale}): {e}")))?;
    let x: f64 = g.sample(rng);
    Ok((1.0 / x).min(f64::MAX))
}

/// Gamma draw with the given shape and rate.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numerical(format!("gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn truncnorm_far_from_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..10_000).map(|_| sample_univariate_truncnorm(10.0, 1.0, &mut rng)).collect();
        let (mean, var) = moments(&xs);
        assert!((mean - 10.0).abs() < 4.0 * (var / 1e4).sqrt());
    }

    #[test]
    fn truncnorm_half_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let xs: Vec<f64> = (0..10_000).map(|_| sample_univariate_truncnorm(0.0, 1.0, &mut rng)).collect();
        let (mean, var) = moments(&xs);
        let want = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - want).abs() < 4.0 * (var / 1e4).sqrt());
        assert!(xs.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn truncnorm_deep_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let xs: Vec<f64> = (0..10_000).map(|_| sample_univariate_truncnorm(-20.0, 1.0, &mut rng)).collect();
        assert!(xs.iter().all(|x| x.is_finite() && *x >= 0.0));
        let (mean, _) = moments(&xs);
        assert!((mean - 0.05).abs() < 0.2 * 0.05, "mean {mean}");
    }

    #[test]
    fn truncnorm_near_switch_point_is_continuous() {
        // Mean of the standardized tail is φ(c)/(1-Φ(c)); both branches must agree with it.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for c in [4.9, 5.1] {
            let xs: Vec<f64> = (0..20_000).map(|_| sample_univariate_truncnorm(-c, 1.0, &mut rng)).collect();
            let (mean, var) = moments(&xs);
            let want = crate::special::normal_pdf(c) / normal_sf(c) - c;
            assert!((mean - want).abs() < 4.0 * (var / 2e4).sqrt(), "c={c}: {mean} vs {want}");
        }
    }

    #[test]
    fn inverse_gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for &(mu, nu) in &[(1.0, 1.0), (2.0, 8.0)] {
            let xs: Vec<f64> = (0..100_000).map(|_| sample_inverse_gaussian(mu, nu, &mut rng)).collect();
            assert!(xs.iter().all(|&x| x > 0.0));
            let (mean, var) = moments(&xs);
            let true_var: f64 = mu * mu * mu / nu;
            assert!((mean - mu).abs() < 4.0 * (true_var / 1e5).sqrt(), "mean {mean}");
            assert!((var - true_var).abs() < 0.1 * true_var, "var {var}");
        }
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let (shape, scale) = (6.0, 10.0);
        let xs: Vec<f64> = (0..10_000).map(|_| sample_inverse_gamma(shape, scale, &mut rng).unwrap()).collect();
        let (mean, var) = moments(&xs);
        assert!((mean - scale / (shape - 1.0)).abs() < 4.0 * (var / 1e4).sqrt());
        assert!(sample_inverse_gamma(-1.0, 1.0, &mut rng).is_err());
    }
}
