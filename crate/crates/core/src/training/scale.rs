//! Maximum-likelihood updates of fleet-wide scale parameters given fixed
//! per-sample locations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROOT_TOLERANCE: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 100;
const BISECTION_MAX_ITER: usize = 400;
const MAX_HALVINGS: usize = 60;
pub const BRACKET_LOW: f64 = 1e-6;
/// The upper end of the bracket is this multiple of the largest target.
pub const BRACKET_HIGH_FACTOR: f64 = 10.0;
/// Log-logistic shapes at or below 1 have no finite mean; roots there are
/// projected to this value.
pub const LOGLOGISTIC_MIN_SHAPE: f64 = 1.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootMethod {
    Newton,
    Bisection,
    /// The bracket shrank to adjacent floating-point values before the
    /// residual met the tolerance.
    BracketCollapse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootReport {
    pub root: f64,
    pub residual: f64,
    pub iterations: usize,
    pub method: RootMethod,
    /// True when a log-logistic root ≤ 1 was replaced by [`LOGLOGISTIC_MIN_SHAPE`].
    pub projected: bool,
}

fn check_inputs(name: &str, targets: &[f64], params: &[f64], weights: Option<&[f64]>) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::Domain(format!("{name}: no observations")));
    }
    if targets.len() != params.len() || weights.is_some_and(|w| w.len() != targets.len()) {
        return Err(Error::Shape(format!("{name}: targets, locations and weights differ in length")));
    }
    if let Some(i) = targets.iter().position(|y| !(*y > 0.0) || !y.is_finite()) {
        return Err(Error::Domain(format!("{name}: target {i} is {} (must be > 0)", targets[i])));
    }
    if let Some(w) = weights {
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || !(w.iter().sum::<f64>() > 0.0) {
            return Err(Error::Domain(format!("{name}: weights must be non-negative with positive sum")));
        }
    }
    Ok(())
}

fn weight(weights: Option<&[f64]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i])
}

/// `√(Σ (ln ỹᵢ − μᵢ)² / n)`.
pub fn mle_sigma_lognormal(targets: &[f64], locations: &[f64]) -> Result<f64> {
    mle_sigma_lognormal_weighted(targets, locations, None)
}

/// Weighted form `√(Σ wᵢ (ln ỹᵢ − μᵢ)² / Σ wᵢ)`.
pub fn mle_sigma_lognormal_weighted(targets: &[f64], locations: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    check_inputs("log-normal scale", targets, locations, weights)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (&y, &mu)) in targets.iter().zip(locations).enumerate() {
        let w = weight(weights, i);
        let r = y.ln() - mu;
        num += w * r * r;
        den += w;
    }
    Ok((num / den).sqrt())
}

/// `h(σ) = Σ wᵢ μᵢ (σ^μᵢ − ỹᵢ^μᵢ) / σ^(μᵢ+1)` and `h'(σ)`.
pub fn weibull_scale_residual(sigma: f64, targets: &[f64], shapes: &[f64], weights: Option<&[f64]>) -> (f64, f64) {
    let mut h = 0.0;
    let mut dh = 0.0;
    for (i, (&y, &m)) in targets.iter().zip(shapes).enumerate() {
        let wt = weight(weights, i);
        let w = (m * (y.ln() - sigma.ln())).exp();
        h += wt * m * (1.0 - w) / sigma;
        dh += wt * m * ((1.0 + m) * w - 1.0) / (sigma * sigma);
    }
    (h, dh)
}

/// `s(σ) = Σ wᵢ ln(ỹᵢ/μᵢ) [1 − 2 (ỹᵢ/μᵢ)^σ / (1 + (ỹᵢ/μᵢ)^σ)] + Σwᵢ/σ` and `s'(σ)`.
pub fn loglogistic_scale_residual(sigma: f64, targets: &[f64], scales: &[f64], weights: Option<&[f64]>) -> (f64, f64) {
    let mut s = 0.0;
    let mut ds = 0.0;
    for (i, (&y, &a)) in targets.iter().zip(scales).enumerate() {
        let wt = weight(weights, i);
        let v = y.ln() - a.ln();
        let p = crate::network::sigmoid(sigma * v);
        s += wt * (v * (1.0 - 2.0 * p) + 1.0 / sigma);
        ds -= wt * (2.0 * v * v * p * (1.0 - p) + 1.0 / (sigma * sigma));
    }
    (s, ds)
}

/// Solves `h(σ) = 0` for the Weibull scale given per-sample shapes.
pub fn solve_sigma_weibull(targets: &[f64], shapes: &[f64], init: f64) -> Result<RootReport> {
    solve_sigma_weibull_weighted(targets, shapes, None, init)
}

pub fn solve_sigma_weibull_weighted(
    targets: &[f64],
    shapes: &[f64],
    weights: Option<&[f64]>,
    init: f64,
) -> Result<RootReport> {
    check_inputs("Weibull scale", targets, shapes, weights)?;
    if let Some(i) = shapes.iter().position(|m| !(*m > 0.0) || !m.is_finite()) {
        return Err(Error::Domain(format!("Weibull scale: shape {i} is {}", shapes[i])));
    }
    let hi = BRACKET_HIGH_FACTOR * targets.iter().copied().fold(0.0, f64::max);
    find_root(
        "Weibull scale",
        |s| weibull_scale_residual(s, targets, shapes, weights),
        BRACKET_LOW,
        hi,
        init,
    )
}

/// Solves `s(σ) = 0` for the log-logistic shape given per-sample scales.
pub fn solve_sigma_loglogistic(targets: &[f64], scales: &[f64], init: f64) -> Result<RootReport> {
    solve_sigma_loglogistic_weighted(targets, scales, None, init)
}

pub fn solve_sigma_loglogistic_weighted(
    targets: &[f64],
    scales: &[f64],
    weights: Option<&[f64]>,
    init: f64,
) -> Result<RootReport> {
    check_inputs("log-logistic shape", targets, scales, weights)?;
    if let Some(i) = scales.iter().position(|m| !(*m > 0.0) || !m.is_finite()) {
        return Err(Error::Domain(format!("log-logistic shape: scale {i} is {}", scales[i])));
    }
    let hi = BRACKET_HIGH_FACTOR * targets.iter().copied().fold(0.0, f64::max);
    let mut report = find_root(
        "log-logistic shape",
        |s| loglogistic_scale_residual(s, targets, scales, weights),
        BRACKET_LOW,
        hi,
        init,
    )?;
    if report.root <= 1.0 {
        log::warn!(
            "log-logistic shape root {} has no finite mean; using {LOGLOGISTIC_MIN_SHAPE}",
            report.root
        );
        report.root = LOGLOGISTIC_MIN_SHAPE;
        report.projected = true;
    }
    Ok(report)
}

/// Damped Newton iteration on `f` inside a sign-changing bracket, falling
/// back to bisection when Newton stalls or after [`NEWTON_MAX_ITER`] steps.
pub fn find_root(
    name: &str,
    f: impl Fn(f64) -> (f64, f64),
    lo: f64,
    hi: f64,
    init: f64,
) -> Result<RootReport> {
    let (mut a, mut b) = (lo, hi);
    let fa = f(a).0;
    let fb = f(b).0;
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::Solver(format!(
            "{name}: no sign change on [{a:e}, {b:e}] (f(lo) = {fa:e}, f(hi) = {fb:e})"
        )));
    }
    let sign_a = fa.signum();
    let mut x = if init > a && init < b { init } else { 0.5 * (a + b) };
    let mut iterations = 0;
    let mut used_bisection = false;
    loop {
        let (fx, dfx) = f(x);
        if fx.abs() < ROOT_TOLERANCE {
            let method = if used_bisection {
                RootMethod::Bisection
            } else {
                RootMethod::Newton
            };
            return Ok(report(x, fx, iterations, method));
        }
        if fx.signum() == sign_a {
            a = x;
        } else {
            b = x;
        }
        if b - a <= 4.0 * f64::EPSILON * b.abs() {
            return Ok(report(x, fx, iterations, RootMethod::BracketCollapse));
        }
        if iterations >= NEWTON_MAX_ITER + BISECTION_MAX_ITER {
            return Err(Error::Solver(format!(
                "{name}: no convergence after {iterations} iterations (x = {x:e}, f = {fx:e}, bracket [{a:e}, {b:e}])"
            )));
        }
        iterations += 1;
        let newton = if iterations <= NEWTON_MAX_ITER && fx.is_finite() && dfx.is_finite() && dfx != 0.0 {
            damped_newton(&f, x, fx, -fx / dfx, a, b)
        } else {
            None
        };
        x = match newton {
            Some(next) => next,
            None => {
                used_bisection = true;
                0.5 * (a + b)
            }
        };
    }
}

fn damped_newton(f: &impl Fn(f64) -> (f64, f64), x: f64, fx: f64, step: f64, a: f64, b: f64) -> Option<f64> {
    let mut step = step;
    for _ in 0..MAX_HALVINGS {
        let next = x + step;
        if next > a && next < b {
            let fn_ = f(next).0;
            if fn_.is_finite() && fn_.abs() < fx.abs() {
                return Some(next);
            }
        }
        step *= 0.5;
    }
    None
}

fn report(root: f64, residual: f64, iterations: usize, method: RootMethod) -> RootReport {
    RootReport {
        root,
        residual,
        iterations,
        method,
        projected: false,
    }
}
