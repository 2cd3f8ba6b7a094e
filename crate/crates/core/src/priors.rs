//! Element priors `f`, their scaled versions `g_γ(x) = f(x/γ)/γ`, scale
//! hyperpriors `h`, and the constants the oracle bound needs.
//!
//! With a truncated-Gaussian element prior the hyperprior is placed on `γ²`
//! rather than on `γ`; this is the parameterization under which the scale
//! conditionals are conjugate. Everywhere else it is placed on `γ`.

use std::fmt;
use std::str::FromStr;

use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::model::{Factorization, ModelConfig};
use crate::special::{ln_gamma_lr, normal_pdf, normal_sf, LN_SQRT_PI_OVER_2};

/// The three element prior families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementKind {
    /// `f(x) = exp(-x)`.
    Exponential,
    /// `f(x) ∝ exp(2ax - x²)`.
    TruncatedGaussian { a: f64 },
    /// `f(x) = (ζ - 1)(1 + x)^{-ζ}`, ζ > 1.
    HeavyTail { zeta: f64 },
}

/// A normalized element density on `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementPrior {
    kind: ElementKind,
    ln_norm: f64,
}

impl ElementPrior {
    pub fn exponential() -> Self {
        Self { kind: ElementKind::Exponential, ln_norm: 0.0 }
    }

    pub fn truncated_gaussian(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Domain(format!("truncated Gaussian needs finite a, got {a}")));
        }
        // ∫₀^∞ exp(2ax - x²) dx = e^{a²} (√π/2) erfc(-a)
        let ln_z = a * a + LN_SQRT_PI_OVER_2 + erfc(-a).ln();
        if !ln_z.is_finite() {
            return Err(Error::Domain(format!("truncated Gaussian normalizer underflows for a = {a}")));
        }
        Ok(Self { kind: ElementKind::TruncatedGaussian { a }, ln_norm: -ln_z })
    }

    pub fn heavy_tail(zeta: f64) -> Result<Self> {
        if !(zeta > 1.0 && zeta.is_finite()) {
            return Err(Error::Domain(format!("heavy-tail prior needs zeta > 1, got {zeta}")));
        }
        Ok(Self { kind: ElementKind::HeavyTail { zeta }, ln_norm: (zeta - 1.0).ln() })
    }

    #[inline]
    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    /// `ln f(x)`, normalizing constant included.
    pub fn log_density(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("element density is supported on x >= 0, got {x}")));
        }
        Ok(self.ln_pdf(x))
    }

    #[inline]
    pub(crate) fn ln_pdf(&self, x: f64) -> f64 {
        self.ln_norm - self.neg_ln_kernel(x)
    }

    /// `-ln f(x)` up to the additive normalizer.
    #[inline]
    pub(crate) fn neg_ln_kernel(&self, x: f64) -> f64 {
        match self.kind {
            ElementKind::Exponential => x,
            ElementKind::TruncatedGaussian { a } => x * x - 2.0 * a * x,
            ElementKind::HeavyTail { zeta } => zeta * x.ln_1p(),
        }
    }

    /// Derivative of `-ln f` at `x`.
    #[inline]
    pub(crate) fn neg_ln_kernel_deriv(&self, x: f64) -> f64 {
        match self.kind {
            ElementKind::Exponential => 1.0,
            ElementKind::TruncatedGaussian { a } => 2.0 * x - 2.0 * a,
            ElementKind::HeavyTail { zeta } => zeta / (1.0 + x),
        }
    }

    /// `ln g_γ(x) = ln f(x/γ) - ln γ`, unchecked.
    #[inline]
    pub(crate) fn ln_scaled(&self, gamma: f64, x: f64) -> f64 {
        self.ln_pdf(x / gamma) - gamma.ln()
    }

    /// `S_f = ∫ x² f(x) dx`.
    pub fn second_moment(&self) -> Result<f64> {
        match self.kind {
            ElementKind::Exponential => Ok(2.0),
            ElementKind::TruncatedGaussian { a } => {
                // N(a, 1/2) restricted to [0, ∞): E[X²] = a² + s² + s·a·φ(α)/(1 - Φ(α)), α = -a/s
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let alpha = -a / s;
                let mills = normal_pdf(alpha) / normal_sf(alpha);
                Ok(a * a + 0.5 + s * a * mills)
            }
            ElementKind::HeavyTail { zeta } => {
                if zeta <= 3.0 {
                    return Err(Error::Unavailable(format!(
                        "second moment of the heavy-tail prior diverges for zeta = {zeta} <= 3"
                    )));
                }
                // (ζ-1)·B(3, ζ-3)
                Ok(2.0 / ((zeta - 2.0) * (zeta - 3.0)))
            }
        }
    }

    /// A non-increasing density `f̃` and constant `C_f` with `f ≥ C_f f̃` on `[0, ∞)`.
    pub fn lower_envelope(&self) -> (f64, FTilde) {
        match self.kind {
            ElementKind::TruncatedGaussian { a } if a > 0.0 => {
                // f̃(x) ∝ f(x + a) is the half-normal density (2/√π) e^{-x²};
                // f/f̃ = (√π/2) e^{2ax} / Z_a is smallest at x = 0.
                let c_f = (LN_SQRT_PI_OVER_2 + self.ln_norm).exp();
                (c_f, FTilde::HalfNormal)
            }
            _ => (1.0, FTilde::Element(*self)),
        }
    }
}

impl fmt::Display for ElementPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ElementKind::Exponential => write!(f, "exponential"),
            ElementKind::TruncatedGaussian { a } => write!(f, "trunc-gauss:a={a}"),
            ElementKind::HeavyTail { zeta } => write!(f, "heavy-tail:zeta={zeta}"),
        }
    }
}

impl FromStr for ElementPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = split_spec(s)?;
        match name {
            "exponential" => {
                expect_params(s, &params, &[])?;
                Ok(Self::exponential())
            }
            "trunc-gauss" => {
                expect_params(s, &params, &["a"])?;
                Self::truncated_gaussian(param(s, &params, "a")?)
            }
            "heavy-tail" => {
                expect_params(s, &params, &["zeta"])?;
                Self::heavy_tail(param(s, &params, "zeta")?)
            }
            _ => Err(Error::Config(format!("unknown element prior '{s}'"))),
        }
    }
}

/// Non-increasing minorant density used by the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FTilde {
    /// `f̃ = f`.
    Element(ElementPrior),
    /// `f̃(x) = (2/√π) e^{-x²}`.
    HalfNormal,
}

impl FTilde {
    pub fn ln_eval(&self, x: f64) -> f64 {
        match self {
            FTilde::Element(p) => p.ln_pdf(x),
            FTilde::HalfNormal => -LN_SQRT_PI_OVER_2 - x * x,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.ln_eval(x).exp()
    }
}

/// `ln f(x)`.
pub fn element_log_density(p: &ElementPrior, x: f64) -> Result<f64> {
    p.log_density(x)
}

/// `ln g_α(x) = ln f(x/α) - ln α`.
pub fn scaled_log_density(p: &ElementPrior, alpha_scale: f64, x: f64) -> Result<f64> {
    if !(alpha_scale > 0.0) {
        return Err(Error::Domain(format!("scale must be positive, got {alpha_scale}")));
    }
    Ok(p.log_density(x / alpha_scale)? - alpha_scale.ln())
}

/// Prior on the column scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleHyperprior {
    /// `h(x) = bᵃ/Γ(a) x^{-a-1} e^{-b/x}`.
    InverseGamma { a: f64, b: f64 },
    /// Gamma with rate `b` and the conjugate shape fixed by the matrix dimensions:
    /// `m1 + m2 - 1/2` on γ, `(m1 + m2 - 1)/2` on γ².
    Gamma { b: f64 },
}

impl ScaleHyperprior {
    pub fn inverse_gamma(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!("inverse gamma needs a, b > 0, got a={a}, b={b}")));
        }
        Ok(Self::InverseGamma { a, b })
    }

    pub fn gamma(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Domain(format!("gamma rate must be positive, got {b}")));
        }
        Ok(Self::Gamma { b })
    }

    /// Same family with `b` replaced.
    pub fn with_b(&self, b: f64) -> Result<Self> {
        match *self {
            Self::InverseGamma { a, .. } => Self::inverse_gamma(a, b),
            Self::Gamma { .. } => Self::gamma(b),
        }
    }

    pub fn b(&self) -> f64 {
        match *self {
            Self::InverseGamma { b, .. } | Self::Gamma { b } => b,
        }
    }

    /// Log density at `x` with the Gamma shape given explicitly.
    pub(crate) fn ln_pdf_with_shape(&self, shape: f64, x: f64) -> f64 {
        match *self {
            Self::InverseGamma { a, b } => a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x,
            Self::Gamma { b } => shape * b.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - b * x,
        }
    }
}

impl fmt::Display for ScaleHyperprior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InverseGamma { a, b } => write!(f, "inv-gamma:a={a},b={b}"),
            Self::Gamma { b } => write!(f, "gamma:b={b}"),
        }
    }
}

impl FromStr for ScaleHyperprior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = split_spec(s)?;
        match name {
            "inv-gamma" => {
                expect_params(s, &params, &["a", "b"])?;
                Self::inverse_gamma(param(s, &params, "a")?, param(s, &params, "b")?)
            }
            "gamma" => {
                expect_params(s, &params, &["b"])?;
                Self::gamma(param(s, &params, "b")?)
            }
            _ => Err(Error::Config(format!("unknown scale hyperprior '{s}'"))),
        }
    }
}

fn split_spec(s: &str) -> Result<(&str, Vec<(&str, &str)>)> {
    let s = s.trim();
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n, r),
        None => (s, ""),
    };
    let mut params = Vec::new();
    for kv in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("malformed parameter '{kv}' in '{s}'")))?;
        params.push((k.trim(), v.trim()));
    }
    Ok((name.trim(), params))
}

fn expect_params(s: &str, params: &[(&str, &str)], allowed: &[&str]) -> Result<()> {
    for (k, _) in params {
        if !allowed.contains(k) {
            return Err(Error::Config(format!("unexpected parameter '{k}' in '{s}'")));
        }
    }
    Ok(())
}

fn param(s: &str, params: &[(&str, &str)], key: &str) -> Result<f64> {
    let raw = params
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Config(format!("missing parameter '{key}' in '{s}'")))?;
    raw.parse::<f64>()
        .map_err(|_| Error::Config(format!("parameter '{key}' in '{s}' is not a number")))
}

/// `ln h(x)` with the Gamma shape `m1 + m2 - 1/2`.
pub fn hyper_log_density(h: &ScaleHyperprior, m1: usize, m2: usize, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("scale density is supported on x > 0, got {x}")));
    }
    Ok(h.ln_pdf_with_shape((m1 + m2) as f64 - 0.5, x))
}

/// Element prior together with the scale hyperprior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub element: ElementPrior,
    pub hyper: ScaleHyperprior,
}

impl Priors {
    pub fn new(element: ElementPrior, hyper: ScaleHyperprior) -> Self {
        Self { element, hyper }
    }

    /// True when the hyperprior is a density for γ² instead of γ.
    #[inline]
    pub fn scale_on_square(&self) -> bool {
        matches!(self.element.kind(), ElementKind::TruncatedGaussian { .. })
    }

    /// Gamma shape used for the given dimensions.
    pub fn gamma_shape(&self, m1: usize, m2: usize) -> f64 {
        let n = (m1 + m2) as f64;
        if self.scale_on_square() {
            (n - 1.0) / 2.0
        } else {
            n - 0.5
        }
    }

    /// The hyperprior term contributed by one column scale.
    #[inline]
    pub fn scale_log_density(&self, m1: usize, m2: usize, gamma: f64) -> f64 {
        let t = if self.scale_on_square() { gamma * gamma } else { gamma };
        self.hyper.ln_pdf_with_shape(self.gamma_shape(m1, m2), t)
    }

    /// `ln P(γ ≤ ε)` under the hyperprior.
    pub fn ln_scale_mass_below(&self, m1: usize, m2: usize, eps: f64) -> f64 {
        let t = if self.scale_on_square() { eps * eps } else { eps };
        match self.hyper {
            ScaleHyperprior::Gamma { b } => ln_gamma_lr(self.gamma_shape(m1, m2), b * t),
            ScaleHyperprior::InverseGamma { a, b } => gamma_ur(a, b / t).ln(),
        }
    }
}

impl fmt::Display for Priors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {}", self.element, self.hyper)
    }
}

/// `ln π(U, V, γ)`.
pub fn log_prior(fac: &Factorization, priors: &Priors) -> Result<f64> {
    let (m1, m2) = (fac.m1(), fac.m2());
    let mut total = 0.0;
    for (l, &g) in fac.gamma().iter().enumerate() {
        if !(g > 0.0) {
            return Err(Error::Domain(format!("scale {l} is {g}, must be positive")));
        }
        total += column_log_prior(fac, priors, l, g, m1, m2);
    }
    Ok(total)
}

pub(crate) fn column_log_prior(
    fac: &Factorization,
    priors: &Priors,
    l: usize,
    g: f64,
    m1: usize,
    m2: usize,
) -> f64 {
    let p = &priors.element;
    let mut s = priors.scale_log_density(m1, m2, g);
    for i in 0..m1 {
        s += p.ln_scaled(g, fac.u().get(i, l));
    }
    for j in 0..m2 {
        s += p.ln_scaled(g, fac.v().get(j, l));
    }
    s
}

/// Constants entering the oracle bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConstants {
    /// Second moment of the element prior.
    pub s_f: f64,
    /// Minorization constant, `f ≥ C_f f̃`.
    pub c_f: f64,
    /// Mass-near-zero constants: `∫₀^ε h ≥ α ε^β` for `0 < ε ≤ eps_max`.
    pub alpha: f64,
    /// `ln α`; α itself underflows for large matrices.
    pub ln_alpha: f64,
    pub beta: f64,
    /// Upper end of the ε-range, `σ² / (√2 S_f K²)`.
    pub eps_max: f64,
    pub f_tilde: FTilde,
}

const ALPHA_CAP: f64 = 1.0 - 1e-9;

/// Constants for the given priors, noise level and matrix size.
pub fn prior_constants(priors: &Priors, config: &ModelConfig, m1: usize, m2: usize) -> Result<PriorConstants> {
    let s_f = priors.element.second_moment()?;
    let (c_f, f_tilde) = priors.element.lower_envelope();
    let k = config.k as f64;
    let eps_max = config.sigma2 / (std::f64::consts::SQRT_2 * s_f * k * k);

    let beta = match priors.hyper {
        ScaleHyperprior::InverseGamma { .. } => {
            return Err(Error::Unavailable(
                "inverse-gamma scale prior has mass exp(-b/ε) near zero; no (alpha, beta) pair exists".into(),
            ));
        }
        // ∫₀^ε h ~ c·ε^shape on γ, c·ε^{2·shape} on γ²
        ScaleHyperprior::Gamma { .. } => {
            let shape = priors.gamma_shape(m1, m2);
            if priors.scale_on_square() {
                2.0 * shape
            } else {
                shape
            }
        }
    };

    // With β equal to the leading power, ln H(ε) - β ln ε is decreasing in ε;
    // scan a log-grid anyway and keep the minimum.
    let mut ln_alpha = f64::INFINITY;
    for step in 0..=200 {
        let eps = eps_max * 10f64.powf(-6.0 * step as f64 / 200.0);
        ln_alpha = ln_alpha.min(priors.ln_scale_mass_below(m1, m2, eps) - beta * eps.ln());
    }
    if !ln_alpha.is_finite() {
        return Err(Error::Numerical("could not evaluate the scale prior mass near zero".into()));
    }
    let ln_alpha = ln_alpha.min(ALPHA_CAP.ln());
    Ok(PriorConstants { s_f, c_f, alpha: ln_alpha.exp(), ln_alpha, beta, eps_max, f_tilde })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;

    #[test]
    fn exponential_log_density() {
        let p = ElementPrior::exponential();
        assert_eq!(element_log_density(&p, 0.0).unwrap(), 0.0);
        assert_eq!(element_log_density(&p, 1.0).unwrap(), -1.0);
        assert!(matches!(element_log_density(&p, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn heavy_tail_log_density() {
        let p = ElementPrior::heavy_tail(2.0).unwrap();
        assert!((element_log_density(&p, 1.0).unwrap() - 0.25f64.ln()).abs() < 1e-15);
        assert!(ElementPrior::heavy_tail(1.0).is_err());
    }

    #[test]
    fn scaled_density_cases() {
        let p = ElementPrior::exponential();
        let got = scaled_log_density(&p, 2.0, 2.0).unwrap();
        assert!((got - (-1.0 - 2f64.ln())).abs() < 1e-15);
        for x in [0.0, 0.3, 2.0, 17.0] {
            assert_eq!(scaled_log_density(&p, 1.0, x).unwrap(), element_log_density(&p, x).unwrap());
        }
        assert!(matches!(scaled_log_density(&p, 0.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn hyper_log_density_cases() {
        let ig = ScaleHyperprior::inverse_gamma(1.0, 1.0).unwrap();
        assert!((hyper_log_density(&ig, 3, 4, 1.0).unwrap() + 1.0).abs() < 1e-15);
        let g = ScaleHyperprior::gamma(1.0).unwrap();
        let want = -ln_gamma(1.5) - 1.0;
        assert!((hyper_log_density(&g, 1, 1, 1.0).unwrap() - want).abs() < 1e-14);
        assert!(matches!(hyper_log_density(&g, 1, 1, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn log_prior_single_entry() {
        let fac = Factorization::new(DenseMatrix::zeros(1, 1), DenseMatrix::zeros(1, 1), vec![1.0]).unwrap();
        let priors = Priors::new(ElementPrior::exponential(), ScaleHyperprior::inverse_gamma(1.0, 1.0).unwrap());
        assert!((log_prior(&fac, &priors).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn prior_strings_round_trip() {
        for s in ["exponential", "trunc-gauss:a=0", "trunc-gauss:a=-1.5", "heavy-tail:zeta=4"] {
            let p: ElementPrior = s.parse().unwrap();
            assert_eq!(p.to_string().parse::<ElementPrior>().unwrap(), p);
        }
        for s in ["inv-gamma:a=1,b=2", "gamma:b=1000000"] {
            let h: ScaleHyperprior = s.parse().unwrap();
            assert_eq!(h.to_string().parse::<ScaleHyperprior>().unwrap(), h);
        }
        assert!("laplace".parse::<ElementPrior>().is_err());
        assert!("heavy-tail:zeta=0.5".parse::<ElementPrior>().is_err());
        assert!("gamma:a=1".parse::<ScaleHyperprior>().is_err());
        assert!("inv-gamma:a=1".parse::<ScaleHyperprior>().is_err());
        assert!("gamma:b=x".parse::<ScaleHyperprior>().is_err());
    }

    #[test]
    fn exponential_constants() {
        let priors = Priors::new(ElementPrior::exponential(), ScaleHyperprior::gamma(1.0).unwrap());
        let pc = prior_constants(&priors, &ModelConfig::new(0.01, 2).unwrap(), 5, 5).unwrap();
        assert_eq!(pc.s_f, 2.0);
        assert_eq!(pc.c_f, 1.0);
        assert_eq!(pc.beta, 9.5);
        assert!(pc.alpha > 0.0 && pc.alpha < 1.0);
    }

    #[test]
    fn divergent_and_unavailable_constants() {
        let cfg = ModelConfig::new(0.01, 2).unwrap();
        let heavy = Priors::new(ElementPrior::heavy_tail(3.0).unwrap(), ScaleHyperprior::gamma(1.0).unwrap());
        assert!(matches!(prior_constants(&heavy, &cfg, 5, 5), Err(Error::Unavailable(_))));
        let ig = Priors::new(ElementPrior::exponential(), ScaleHyperprior::inverse_gamma(1.0, 1.0).unwrap());
        assert!(matches!(prior_constants(&ig, &cfg, 5, 5), Err(Error::Unavailable(_))));
    }

    #[test]
    fn positive_a_envelope() {
        let p = ElementPrior::truncated_gaussian(1.0).unwrap();
        let (c_f, ft) = p.lower_envelope();
        assert_eq!(ft, FTilde::HalfNormal);
        // e^{-a²} / erfc(-a)
        assert!((c_f - (-1.0f64).exp() / erfc(-1.0)).abs() < 1e-14);
    }
}
