//! Default prior dispersion from a tail probability on component separation.

use crate::stats::{chi2_quantile, gamma_cdf, gamma_quantile, solve_monotone};
use crate::{Error, Result};

/// Bracket searched for `g`.
pub const G_BRACKET: (f64, f64) = (1e-3, 1e6);

/// The `g` for which the separation `κ ~ Gamma(p/2 + 1, rate 1/(4g))` puts
/// mass `tail_prob` below `kappa_threshold`.
pub fn elicit_g(p: usize, tail_prob: f64, kappa_threshold: f64) -> Result<f64> {
    if p == 0 {
        return Err(Error::Domain("p must be positive".into()));
    }
    if !(tail_prob > 0.0 && tail_prob < 1.0) {
        return Err(Error::Domain(format!(
            "tail probability must lie in (0, 1), got {tail_prob}"
        )));
    }
    if !(kappa_threshold > 0.0) {
        return Err(Error::Domain(format!(
            "threshold must be positive, got {kappa_threshold}"
        )));
    }
    let shape = p as f64 / 2.0 + 1.0;
    // the cdf can only fail on invalid arguments, which are excluded above
    solve_monotone(
        |g: f64| gamma_cdf(kappa_threshold, shape, 1.0 / (4.0 * g)).unwrap_or(f64::NAN),
        tail_prob,
        G_BRACKET,
    )
}

/// Dispersion of the local comparison prior. Under it `κ ~ 2 gᴸ χ²_p`; `gᴸ`
/// makes the `percentile` quantile of that law equal the one of
/// `Gamma(p/2 + 1, rate 1/(4 g_nlp))`.
pub fn elicit_g_local(p: usize, g_nlp: f64, percentile: f64) -> Result<f64> {
    if p == 0 || !(g_nlp > 0.0) {
        return Err(Error::Domain(format!(
            "need p >= 1 and g > 0, got p = {p}, g = {g_nlp}"
        )));
    }
    let q_nlp = gamma_quantile(percentile, p as f64 / 2.0 + 1.0, 1.0 / (4.0 * g_nlp))?;
    Ok(q_nlp / (2.0 * chi2_quantile(percentile, p as f64)?))
}
