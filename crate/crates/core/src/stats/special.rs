use statrs::function::gamma;

use super::numeric::solve_monotone;
use crate::{Error, Result};

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// Log of the multivariate gamma function Γ_p(a).
pub fn ln_mvgamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    let mut acc = 0.25 * pf * (pf - 1.0) * std::f64::consts::PI.ln();
    for j in 0..p {
        acc += ln_gamma(a - 0.5 * j as f64);
    }
    acc
}

/// CDF of Gamma(shape, rate) at `x`, i.e. the regularized lower incomplete
/// gamma function P(shape, rate·x).
pub fn gamma_cdf(x: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) {
        return Err(Error::Domain(format!(
            "gamma_cdf requires shape, rate > 0 (got {shape}, {rate})"
        )));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!(
            "gamma_cdf requires x >= 0 (got {x})"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let v = gamma::checked_gamma_lr(shape, rate * x)
        .map_err(|e| Error::Numerical(format!("incomplete gamma: {e}")))?;
    Ok(v.clamp(0.0, 1.0))
}

/// Quantile of Gamma(shape, rate).
pub fn gamma_quantile(prob: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!(
            "probability must lie in (0,1), got {prob}"
        )));
    }
    if !(shape > 0.0 && rate > 0.0) {
        return Err(Error::Domain(format!(
            "gamma_quantile requires shape, rate > 0 (got {shape}, {rate})"
        )));
    }
    // work on the unit-rate scale, then rescale
    let mut hi = shape + 10.0 * shape.sqrt() + 10.0;
    while gamma_cdf(hi, shape, 1.0)? < prob {
        hi *= 2.0;
    }
    let q = solve_monotone(
        |x| gamma_cdf(x, shape, 1.0).unwrap_or(f64::NAN),
        prob,
        (0.0, hi),
    )?;
    Ok(q / rate)
}

/// Quantile of the chi-square distribution with `dof` degrees of freedom.
pub fn chi2_quantile(prob: f64, dof: f64) -> Result<f64> {
    gamma_quantile(prob, 0.5 * dof, 0.5)
}
