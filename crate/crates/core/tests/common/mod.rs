#![allow(dead_code)]

use bnmf_core::DenseMatrix;
use rand::Rng;

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

fn gl_panel<F: Fn(f64) -> f64>(f: &F, rule: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * rule.iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>()
}

/// Adaptive Gauss–Legendre on `[a, b]`; panels are bisected until the two
/// halves agree with the whole to `tol` relative (absolute below magnitude 1e-300).
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let rule = gauss_legendre(20);
    let whole = gl_panel(f, &rule, a, b);
    refine(f, &rule, a, b, whole, tol, 24)
}

fn refine<F: Fn(f64) -> f64>(f: &F, rule: &[(f64, f64)], a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gl_panel(f, rule, a, m);
    let right = gl_panel(f, rule, m, b);
    let sum = left + right;
    if depth == 0 || (sum - whole).abs() <= tol * sum.abs().max(1e-300) {
        return sum;
    }
    refine(f, rule, a, m, left, tol, depth - 1) + refine(f, rule, m, b, right, tol, depth - 1)
}

/// `∫₀^∞ f`, through `x = t/(1-t)`. `f` must be finite on `[0, ∞)` and
/// decay at infinity.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: &F, tol: f64) -> f64 {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let x = t / (1.0 - t);
        let v = f(x) / ((1.0 - t) * (1.0 - t));
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    // split so the adaptive rule sees the bulk of the mass near small x
    let cuts = [0.0, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1.0];
    cuts.windows(2).map(|w| integrate(&g, w[0], w[1], tol)).sum()
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, hi: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * hi)
}

/// `Y = U Vᵀ + N(0, σ²)` with U, V uniform on `[0, upper)`, rank `r`, plus the signal.
pub fn synthetic<R: Rng>(rng: &mut R, m1: usize, m2: usize, r: usize, upper: f64, sigma2: f64) -> (DenseMatrix, DenseMatrix) {
    use rand_distr::{Distribution, Normal};
    let u = random_matrix(rng, m1, r, upper);
    let v = random_matrix(rng, m2, r, upper);
    let m = u.matmul_t(&v).unwrap();
    let noise = Normal::new(0.0, sigma2.sqrt()).unwrap();
    let y = DenseMatrix::from_fn(m1, m2, |i, j| m.get(i, j) + if sigma2 > 0.0 { noise.sample(rng) } else { 0.0 });
    (y, m)
}

/// `|a - b| ≤ tol · max(1, |a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
