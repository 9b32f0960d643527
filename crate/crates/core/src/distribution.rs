//! Single and mixture (log)-location-scale failure-time distributions.
//!
//! Each family is the law of a positive random variable whose logarithm
//! follows a standard location-scale kernel:
//!
//! | family        | kernel   | `location` (μ)        | `scale` (σ)        |
//! |---------------|----------|-----------------------|--------------------|
//! | `LogNormal`   | normal   | mean of `ln Y`, any ℝ | sd of `ln Y`, > 0  |
//! | `Weibull`     | SEV      | shape, > 0            | scale, > 0         |
//! | `LogLogistic` | logistic | scale, > 0            | shape, > 0         |
//!
//! **Parameter roles are not uniform across families.** For `Weibull` the
//! location slot carries the shape and the scale slot the characteristic life;
//! for `LogLogistic` it is the other way round (location = scale, scale =
//! shape). The mean of a log-logistic component only exists for σ > 1.
//!
//! All functions are pure.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Lower bound applied to scale parameters on training paths, where
/// activations can underflow to exactly zero.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Tolerance on `|Σλ − 1|` accepted by [`validate`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    LogNormal,
    Weibull,
    LogLogistic,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::LogNormal => "lognormal",
            Family::Weibull => "weibull",
            Family::LogLogistic => "loglogistic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "lognormal" | "ln" => Some(Family::LogNormal),
            "weibull" | "w" => Some(Family::Weibull),
            "loglogistic" | "ll" => Some(Family::LogLogistic),
            _ => None,
        }
    }

    /// Whether `location` may take any real value (otherwise it must be > 0).
    pub fn location_is_real(self) -> bool {
        matches!(self, Family::LogNormal)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which closed form is used for the Weibull component mean.
///
/// `Standard` is `σ·Γ(1 + 1/μ)`. `SquaredScale` reproduces the alternative
/// printed form `σ²·Γ(1 + 1/μ)` and exists only for comparison runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeibullMeanVariant {
    #[default]
    Standard,
    SquaredScale,
}

/// Standard kernels `ln h(z)` of the underlying location-scale laws.
mod kernel {
    use super::LN_SQRT_2PI;

    pub fn ln_normal(z: f64) -> f64 {
        -0.5 * z * z - LN_SQRT_2PI
    }

    pub fn ln_sev(z: f64) -> f64 {
        z - z.exp()
    }

    pub fn ln_logistic(z: f64) -> f64 {
        z - 2.0 * softplus(z)
    }

    pub fn softplus(z: f64) -> f64 {
        if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        }
    }

    pub fn sigmoid(z: f64) -> f64 {
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub family: Family,
    pub location: f64,
    pub scale: f64,
}

impl Component {
    pub fn new(family: Family, location: f64, scale: f64) -> Self {
        Self {
            family,
            location,
            scale,
        }
    }

    pub fn lognormal(location: f64, scale: f64) -> Self {
        Self::new(Family::LogNormal, location, scale)
    }

    pub fn weibull(shape: f64, scale: f64) -> Self {
        Self::new(Family::Weibull, shape, scale)
    }

    /// Log-logistic with scale `alpha` (location slot) and shape `beta` (scale slot).
    pub fn loglogistic(alpha: f64, beta: f64) -> Self {
        Self::new(Family::LogLogistic, alpha, beta)
    }

    /// Density-domain check; does not require the mean to exist.
    pub fn check(&self) -> std::result::Result<(), Violation> {
        let bad = |param: &'static str, value: f64| Violation::ParameterDomain {
            component: 0,
            family: self.family,
            param,
            value,
        };
        if !self.location.is_finite() {
            return Err(bad("location", self.location));
        }
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(bad("scale", self.scale));
        }
        if !self.family.location_is_real() && self.location <= 0.0 {
            return Err(bad("location", self.location));
        }
        Ok(())
    }

    /// `ln f(y)`.
    pub fn log_pdf(&self, y: f64) -> Result<f64> {
        check_time(y)?;
        self.check().map_err(|v| Error::Domain(v.to_string()))?;
        Ok(self.log_pdf_unchecked(y))
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        self.log_pdf(y).map(f64::exp)
    }

    pub(crate) fn log_pdf_unchecked(&self, y: f64) -> f64 {
        let ln_y = y.ln();
        let (mu, sigma) = (self.location, self.scale);
        match self.family {
            Family::LogNormal => {
                let z = (ln_y - mu) / sigma;
                kernel::ln_normal(z) - ln_y - sigma.ln()
            }
            Family::Weibull => {
                let z = mu * (ln_y - sigma.ln());
                mu.ln() - ln_y + kernel::ln_sev(z)
            }
            Family::LogLogistic => {
                let z = sigma * (ln_y - mu.ln());
                sigma.ln() - ln_y + kernel::ln_logistic(z)
            }
        }
    }

    /// `(ln f(y), ∂ ln f/∂μ, ∂ ln f/∂σ)` without domain checks.
    pub fn log_pdf_grad(&self, y: f64) -> (f64, f64, f64) {
        let ln_y = y.ln();
        let (mu, sigma) = (self.location, self.scale);
        match self.family {
            Family::LogNormal => {
                let z = (ln_y - mu) / sigma;
                let lp = kernel::ln_normal(z) - ln_y - sigma.ln();
                (lp, z / sigma, (z * z - 1.0) / sigma)
            }
            Family::Weibull => {
                let u = ln_y - sigma.ln();
                let z = mu * u;
                let w = z.exp();
                let lp = mu.ln() - ln_y + z - w;
                (lp, 1.0 / mu + u * (1.0 - w), mu * (w - 1.0) / sigma)
            }
            Family::LogLogistic => {
                let v = ln_y - mu.ln();
                let z = sigma * v;
                let s = kernel::sigmoid(z);
                let lp = sigma.ln() - ln_y + kernel::ln_logistic(z);
                (lp, sigma * (2.0 * s - 1.0) / mu, 1.0 / sigma + v * (1.0 - 2.0 * s))
            }
        }
    }

    pub fn mean(&self, variant: WeibullMeanVariant) -> Result<f64> {
        self.check().map_err(|v| Error::Domain(v.to_string()))?;
        let (mu, sigma) = (self.location, self.scale);
        match self.family {
            Family::LogNormal => Ok((mu + 0.5 * sigma * sigma).exp()),
            Family::Weibull => {
                let g = gamma(1.0 + 1.0 / mu);
                match variant {
                    WeibullMeanVariant::Standard => Ok(sigma * g),
                    WeibullMeanVariant::SquaredScale => Ok(sigma * sigma * g),
                }
            }
            Family::LogLogistic => {
                if sigma <= 1.0 {
                    return Err(Error::Domain(format!(
                        "log-logistic mean undefined for shape {sigma} <= 1 (scale {mu})"
                    )));
                }
                let b = PI / sigma;
                Ok(mu * b / b.sin())
            }
        }
    }
}

fn check_time(y: f64) -> Result<()> {
    if y > 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("failure time must be positive and finite, got {y}")))
    }
}

/// `ln f(y)` for a single component.
pub fn log_pdf(y: f64, c: &Component) -> Result<f64> {
    c.log_pdf(y)
}

pub fn pdf(y: f64, c: &Component) -> Result<f64> {
    c.pdf(y)
}

/// Ordered family composition of a K-component mixture. Component labels are positional.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureSpec {
    families: Vec<Family>,
}

impl MixtureSpec {
    pub fn new(families: Vec<Family>) -> Result<Self> {
        if families.is_empty() {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        Ok(Self { families })
    }

    pub fn uniform(family: Family, k: usize) -> Result<Self> {
        Self::new(vec![family; k])
    }

    /// `k1` log-normal components followed by `k2` Weibull components.
    pub fn lognormal_weibull(k1: usize, k2: usize) -> Result<Self> {
        let mut f = vec![Family::LogNormal; k1];
        f.extend(std::iter::repeat_n(Family::Weibull, k2));
        Self::new(f)
    }

    pub fn k(&self) -> usize {
        self.families.len()
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn family(&self, k: usize) -> Family {
        self.families[k]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub components: Vec<Component>,
    pub weights: Vec<f64>,
}

impl Mixture {
    pub fn new(components: Vec<Component>, weights: Vec<f64>) -> Self {
        Self {
            components,
            weights,
        }
    }

    pub fn single(c: Component) -> Self {
        Self::new(vec![c], vec![1.0])
    }

    /// Builds a mixture from unnormalized non-negative weights.
    pub fn from_raw_weights(components: Vec<Component>, raw: &[f64]) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numeric(format!("cannot normalize mixture weights {raw:?}")));
        }
        Ok(Self::new(components, raw.iter().map(|w| w / total).collect()))
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }
}

/// First violated mixture invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Empty,
    LengthMismatch { components: usize, weights: usize },
    NegativeWeight { component: usize, value: f64 },
    WeightSum { sum: f64 },
    ParameterDomain {
        component: usize,
        family: Family,
        param: &'static str,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "mixture has no components"),
            Violation::LengthMismatch {
                components,
                weights,
            } => write!(f, "{components} components but {weights} weights"),
            Violation::NegativeWeight { component, value } => {
                write!(f, "weight {component} is negative or non-finite ({value})")
            }
            Violation::WeightSum { sum } => write!(f, "weights sum to {sum}, expected 1"),
            Violation::ParameterDomain {
                component,
                family,
                param,
                value,
            } => write!(f, "component {component} ({family}): {param} = {value} outside parameter domain"),
        }
    }
}

impl std::error::Error for Violation {}

pub fn validate(p: &Mixture) -> std::result::Result<(), Violation> {
    if p.components.is_empty() {
        return Err(Violation::Empty);
    }
    if p.components.len() != p.weights.len() {
        return Err(Violation::LengthMismatch {
            components: p.components.len(),
            weights: p.weights.len(),
        });
    }
    for (i, &w) in p.weights.iter().enumerate() {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Violation::NegativeWeight {
                component: i,
                value: w,
            });
        }
    }
    let sum: f64 = p.weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Violation::WeightSum { sum });
    }
    for (i, c) in p.components.iter().enumerate() {
        if let Err(Violation::ParameterDomain {
            family,
            param,
            value,
            ..
        }) = c.check()
        {
            return Err(Violation::ParameterDomain {
                component: i,
                family,
                param,
                value,
            });
        }
    }
    Ok(())
}

fn validated(p: &Mixture) -> Result<()> {
    validate(p).map_err(|v| Error::Domain(v.to_string()))
}

pub fn mixture_pdf(y: f64, p: &Mixture) -> Result<f64> {
    check_time(y)?;
    validated(p)?;
    Ok(p
        .components
        .iter()
        .zip(&p.weights)
        .map(|(c, w)| w * c.log_pdf_unchecked(y).exp())
        .sum())
}

/// `ln Σ λ_k f_k(y)` via max-shifted log-sum-exp.
pub fn mixture_log_pdf(y: f64, p: &Mixture) -> Result<f64> {
    check_time(y)?;
    validated(p)?;
    Ok(log_sum_exp(
        p.components
            .iter()
            .zip(&p.weights)
            .map(|(c, &w)| w.ln() + c.log_pdf_unchecked(y)),
    ))
}

pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

pub fn mixture_mean(p: &Mixture, variant: WeibullMeanVariant) -> Result<f64> {
    validated(p)?;
    let mut total = 0.0;
    for (c, w) in p.components.iter().zip(&p.weights) {
        total += w * c.mean(variant)?;
    }
    Ok(total)
}

/// Mean-reduced negative log-likelihood `−(1/n) Σ ln g(yᵢ; pᵢ)`.
pub fn nll(targets: &[f64], params: &[Mixture]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Domain("negative log-likelihood of an empty sample".into()));
    }
    if targets.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} targets but {} parameter sets",
            targets.len(),
            params.len()
        )));
    }
    let mut total = 0.0;
    for (&y, p) in targets.iter().zip(params) {
        total -= mixture_log_pdf(y, p)?;
    }
    Ok(total / targets.len() as f64)
}
