//! Synthetic data: `Y = U Vᵀ + E` with uniform factors.

use bnmf_core::{DenseMatrix, Factorization};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Uniform on `[-c, c]` with `c = √(2σ²)`, so that `σ² = c²/2`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub m1: usize,
    pub m2: usize,
    pub r_true: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub entry_upper: f64,
    pub sigma2: f64,
    pub seed: u64,
    pub noise: NoiseKind,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { m1: 100, m2: 100, r_true: 2, k: 5, entry_upper: 3.0, sigma2: 0.01, seed: 0, noise: NoiseKind::Gaussian }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> CliResult<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return Err(CliError::usage("m1", "matrix dimensions must be positive"));
        }
        if self.r_true == 0 || self.r_true > self.k {
            return Err(CliError::usage("rank", format!("need 1 <= rank <= K, got rank={} K={}", self.r_true, self.k)));
        }
        if self.k > self.m1.min(self.m2) {
            return Err(CliError::usage("K", format!("K={} exceeds min(m1, m2)={}", self.k, self.m1.min(self.m2))));
        }
        if !(self.entry_upper > 0.0 && self.entry_upper.is_finite()) {
            return Err(CliError::usage("entry_upper", format!("must be positive, got {}", self.entry_upper)));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(CliError::usage("sigma2", format!("must be non-negative, got {}", self.sigma2)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub y: DenseMatrix,
    pub m: DenseMatrix,
    /// True factors zero-padded to width K, unit scales.
    pub truth: Factorization,
}

/// Draws factors, then noise, from one stream seeded by `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> CliResult<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let entries = Uniform::new(0.0, spec.entry_upper).map_err(|e| CliError::usage("entry_upper", e.to_string()))?;
    let draw_factor = |rows: usize, rng: &mut ChaCha8Rng| {
        let mut data = vec![0.0; rows * spec.k];
        for i in 0..rows {
            for l in 0..spec.r_true {
                data[i * spec.k + l] = entries.sample(rng);
            }
        }
        DenseMatrix::new(rows, spec.k, data)
    };
    let u = draw_factor(spec.m1, &mut rng)?;
    let v = draw_factor(spec.m2, &mut rng)?;
    let m = u.matmul_t(&v)?;
    let noise = draw_noise(spec, &mut rng)?;
    let y = DenseMatrix::new(
        spec.m1,
        spec.m2,
        m.as_slice().iter().zip(&noise).map(|(a, e)| a + e).collect(),
    )?;
    let truth = Factorization::new(u, v, vec![1.0; spec.k])?;
    Ok(SyntheticData { y, m, truth })
}

fn draw_noise<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> CliResult<Vec<f64>> {
    let n = spec.m1 * spec.m2;
    if spec.sigma2 == 0.0 {
        return Ok(vec![0.0; n]);
    }
    Ok(match spec.noise {
        NoiseKind::Gaussian => {
            let d = Normal::new(0.0, spec.sigma2.sqrt()).map_err(|e| CliError::usage("sigma2", e.to_string()))?;
            (0..n).map(|_| d.sample(rng)).collect()
        }
        NoiseKind::Uniform => {
            let c = (2.0 * spec.sigma2).sqrt();
            let d = Uniform::new_inclusive(-c, c).map_err(|e| CliError::usage("sigma2", e.to_string()))?;
            (0..n).map(|_| d.sample(rng)).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_gives_exact_signal() {
        let spec = SyntheticSpec { m1: 6, m2: 5, r_true: 2, k: 3, sigma2: 0.0, ..SyntheticSpec::default() };
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.y, d.m);
        assert!(d.truth.u().column(2).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn default_design_shapes() {
        let d = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(d.y.shape(), (100, 100));
        assert_eq!(d.truth.u().shape(), (100, 5));
        assert!(d.truth.u().max() <= 3.0 && d.truth.u().min() >= 0.0);
    }

    #[test]
    fn invalid_rank_names_field() {
        let spec = SyntheticSpec { r_true: 6, ..SyntheticSpec::default() };
        let err = generate_synthetic(&spec).unwrap_err().to_string();
        assert!(err.contains("rank"), "{err}");
    }
}
