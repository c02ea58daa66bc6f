//! Expectation-maximization for three targets: the maximum-likelihood
//! estimate, the posterior mode under the local prior and the posterior mode
//! under the non-local prior.
//!
//! Every run tracks the observed-data objective `ln p(y | ϑ) + ln π(ϑ)`
//! (no prior term for the MLE). The covariance prior enters the modes through
//! the density of the precision matrix, which is what makes the closed-form
//! updates
//!
//! ```text
//! Σ_j = [Ψ + W_j(μ_j) + μ_j μ_j' / g] / (ν − p + n_j)
//! ```
//!
//! exact maximizers. Non-local updates are first-order approximations; a
//! candidate that fails to raise the expected complete-data objective `ξ` is
//! replaced by a backtracking gradient step.

use rand::Rng;

use crate::model::ComponentStats;
use crate::prior::{pairwise_separations, CovTerms, MomPrior};
use crate::stats::linalg::{is_spd, symmetrize, trace_of_product};
use crate::stats::RandomStream;
use crate::{CovStructure, Dataset, Error, Matrix, MixtureParams, ModelSpec, Result, Vector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_RESTARTS: usize = 10;

/// Added to `d_ij` so that coincident means stay finite inside the updates.
const SEPARATION_GUARD: f64 = 1e-12;
/// Smallest covariance eigenvalue tolerated by the MLE.
const COLLAPSE_THRESHOLD: f64 = 1e-8;
const MAX_HALVINGS: usize = 60;
const EMPTY_COUNT: f64 = 1e-8;

/// Which objective EM maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EmMode {
    Mle,
    LpMap,
    NlpMap,
}

/// How a run is started.
#[derive(Clone, Debug)]
pub enum EmInit {
    /// Start from the best of the configured number of MLE restarts.
    FromMle,
    Given(MixtureParams),
    /// Each restart runs once from a random allocation and once from means at
    /// random observations; the best run is returned.
    RandomRestarts(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct EmConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Restarts used by [`EmInit::FromMle`].
    pub mle_restarts: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            mle_restarts: DEFAULT_RESTARTS,
        }
    }
}

/// Posterior allocation probabilities `z̄_ij`, stored row-major as `n × k`.
#[derive(Clone, Debug)]
pub struct Responsibilities {
    pub zbar: Vec<f64>,
    pub counts: Vec<f64>,
    /// Mixture log-likelihood at the parameters used to compute them.
    pub log_lik: f64,
}

impl Responsibilities {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> usize {
        if self.counts.is_empty() {
            0
        } else {
            self.zbar.len() / self.counts.len()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.k();
        &self.zbar[i * k..(i + 1) * k]
    }
}

#[derive(Clone, Debug)]
pub struct EmResult {
    pub mode: EmMode,
    pub params: MixtureParams,
    /// Observed-data objective after each iteration, starting at the initial point.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub fallback_count: usize,
    pub stall_count: usize,
    pub log_lik: f64,
}

impl EmResult {
    pub fn objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("trace holds the initial value")
    }
}

/// Result of one M-step.
#[derive(Clone, Debug)]
pub struct MStep {
    pub params: MixtureParams,
    pub fallbacks: usize,
    pub stalls: usize,
}

/// Outcome of [`gradient_fallback`].
#[derive(Clone, Debug)]
pub struct FallbackResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub stalled: bool,
}

/// `z̄_ij ∝ η_j N(y_i; μ_j, Σ_j)`, normalized in log space.
pub fn e_step(
    params: &MixtureParams,
    data: &Dataset,
    spec: &ModelSpec,
) -> Result<Responsibilities> {
    params.check_spec(spec)?;
    let kernels = params.kernels()?;
    let (n, k) = (data.n(), spec.k);
    let log_eta: Vec<f64> = params.eta.iter().map(|e| e.ln()).collect();
    let mut zbar = vec![0.0; n * k];
    let mut counts = vec![0.0; k];
    let mut log_lik = 0.0;
    for i in 0..n {
        let y = data.obs(i);
        let row = &mut zbar[i * k..(i + 1) * k];
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            row[j] = log_eta[j] + kernels[j].ln_pdf(y);
            max = max.max(row[j]);
        }
        if !max.is_finite() {
            return Err(Error::Numerical(format!(
                "observation {i} has no finite component density"
            )));
        }
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for (v, c) in row.iter_mut().zip(counts.iter_mut()) {
            *v /= total;
            *c += *v;
        }
        log_lik += max + total.ln();
    }
    Ok(Responsibilities {
        zbar,
        counts,
        log_lik,
    })
}

fn require_prior<'a>(
    mode: EmMode,
    prior: Option<&'a MomPrior>,
    spec: &ModelSpec,
) -> Result<Option<&'a MomPrior>> {
    match (mode, prior) {
        (EmMode::Mle, _) => Ok(None),
        (_, None) => Err(Error::Domain(format!("{mode:?} needs prior settings"))),
        (_, Some(pr)) if pr.spec() != spec => Err(Error::Shape(format!(
            "prior built for {}, model is {}",
            pr.spec().label(),
            spec.label()
        ))),
        (_, Some(pr)) => Ok(Some(pr)),
    }
}

/// Log prior of the mode, with the covariance prior taken as a density on
/// the precision matrix.
fn prior_term(
    params: &MixtureParams,
    cov: &CovTerms,
    mode: EmMode,
    prior: Option<&MomPrior>,
) -> f64 {
    let Some(pr) = prior else { return 0.0 };
    let jac = (params.p() as f64 + 1.0) * cov.log_det.iter().sum::<f64>();
    match mode {
        EmMode::Mle => 0.0,
        EmMode::LpMap => pr.lp_log_prior_with(params, cov) + jac,
        EmMode::NlpMap => pr.nlp_log_prior_with(params, cov) + jac,
    }
}

fn xi_with(
    params: &MixtureParams,
    cov: &CovTerms,
    stats: &ComponentStats,
    mode: EmMode,
    prior: Option<&MomPrior>,
) -> f64 {
    let p = params.p() as f64;
    let mut xi = 0.0;
    for j in 0..params.k() {
        let n = stats.counts[j];
        if n <= 0.0 {
            continue;
        }
        let s = stats.scatter_about(j, &params.mu[j]);
        xi += n * params.eta[j].ln()
            - 0.5 * n * (p * LN_2PI + cov.log_det_j(j))
            - 0.5 * trace_of_product(cov.inv_j(j), &s);
    }
    let pt = prior_term(params, cov, mode, prior);
    if pt == f64::NEG_INFINITY {
        return pt;
    }
    xi + pt
}

fn xi_or_neg_inf(
    params: &MixtureParams,
    stats: &ComponentStats,
    mode: EmMode,
    prior: Option<&MomPrior>,
) -> f64 {
    match CovTerms::new(params) {
        Ok(cov) => {
            let v = xi_with(params, &cov, stats, mode, prior);
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        }
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Expected complete-data log posterior
/// `Σ_j n_j ln η_j + Σ_ij z̄_ij ln N(y_i; μ_j, Σ_j) + ln π(ϑ)`.
pub fn objective_xi(
    params: &MixtureParams,
    resp: &Responsibilities,
    data: &Dataset,
    spec: &ModelSpec,
    prior: Option<&MomPrior>,
    mode: EmMode,
) -> Result<f64> {
    params.check_spec(spec)?;
    let prior = require_prior(mode, prior, spec)?;
    let stats = ComponentStats::from_weights(data, &resp.zbar, spec.k);
    let cov = CovTerms::new(params)?;
    Ok(xi_with(params, &cov, &stats, mode, prior))
}

/// Observed-data objective tracked by [`run_em`].
pub fn observed_objective(
    params: &MixtureParams,
    data: &Dataset,
    spec: &ModelSpec,
    prior: Option<&MomPrior>,
    mode: EmMode,
) -> Result<f64> {
    let prior = require_prior(mode, prior, spec)?;
    let resp = e_step(params, data, spec)?;
    let cov = CovTerms::new(params)?;
    Ok(resp.log_lik + prior_term(params, &cov, mode, prior))
}

fn grad_mu_with(
    params: &MixtureParams,
    cov: &CovTerms,
    stats: &ComponentStats,
    mode: EmMode,
    prior: Option<&MomPrior>,
) -> Vec<Vector> {
    let k = params.k();
    let d = match mode {
        EmMode::NlpMap => pairwise_separations(&params.mu, &cov.a_inv),
        _ => Vec::new(),
    };
    let g = prior.map_or(1.0, |pr| pr.settings().g);
    (0..k)
        .map(|j| {
            let mu = &params.mu[j];
            let mut out = cov.inv_j(j) * ((&stats.means[j] - mu) * stats.counts[j]);
            match mode {
                EmMode::Mle => {}
                EmMode::LpMap => out -= cov.inv_j(j) * mu / g,
                EmMode::NlpMap => {
                    let mut pull = mu / g;
                    for i in (0..k).filter(|&i| i != j) {
                        pull -= (mu - &params.mu[i]) * (2.0 / d[pair_index(i.min(j), i.max(j), k)]);
                    }
                    out -= &cov.a_inv * pull;
                }
            }
            out
        })
        .collect()
}

/// `∇_μ ξ`, one vector per component.
pub fn objective_gradient_mu(
    params: &MixtureParams,
    resp: &Responsibilities,
    data: &Dataset,
    spec: &ModelSpec,
    prior: Option<&MomPrior>,
    mode: EmMode,
) -> Result<Vec<Vector>> {
    params.check_spec(spec)?;
    let prior = require_prior(mode, prior, spec)?;
    let stats = ComponentStats::from_weights(data, &resp.zbar, spec.k);
    let cov = CovTerms::new(params)?;
    Ok(grad_mu_with(params, &cov, &stats, mode, prior))
}

/// Position of pair `(i, j)`, `i < j`, in the lexicographic pair order.
fn pair_index(i: usize, j: usize, k: usize) -> usize {
    i * (2 * k - i - 1) / 2 + (j - i - 1)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Backtracking ascent along `grad` from `start`. The first trial step is
/// `k̄ ∇` with `k̄ = sqrt(‖proposal − start‖ / ‖∇‖)`, or `1/‖∇‖` without a
/// usable proposal; it is halved until the target strictly increases.
pub fn gradient_fallback<F>(
    mut target: F,
    grad: &[f64],
    start: &[f64],
    start_value: f64,
    proposal: Option<&[f64]>,
) -> FallbackResult
where
    F: FnMut(&[f64]) -> f64,
{
    let stay = |stalled| FallbackResult {
        point: start.to_vec(),
        value: start_value,
        stalled,
    };
    let gn = norm(grad);
    if gn == 0.0 {
        return stay(false);
    }
    if !gn.is_finite() {
        return stay(true);
    }
    let dist = proposal
        .map(|p| norm(&p.iter().zip(start).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .filter(|d| d.is_finite() && *d > 0.0);
    let mut step = match dist {
        Some(d) => (d / gn).sqrt(),
        None => 1.0 / gn,
    };
    let mut x = vec![0.0; start.len()];
    for _ in 0..=MAX_HALVINGS {
        for ((xi, s), gi) in x.iter_mut().zip(start).zip(grad) {
            *xi = s + step * gi;
        }
        let v = target(&x);
        if v > start_value {
            return FallbackResult {
                point: x,
                value: v,
                stalled: false,
            };
        }
        step *= 0.5;
    }
    stay(true)
}

fn flatten(vs: &[Vector]) -> Vec<f64> {
    vs.iter().flat_map(|v| v.iter().copied()).collect()
}

fn unflatten(x: &[f64], p: usize) -> Vec<Vector> {
    x.chunks(p).map(Vector::from_column_slice).collect()
}

fn chol_flatten(sigma: &[Matrix]) -> Option<Vec<f64>> {
    let mut out = Vec::new();
    for s in sigma {
        let l = s.clone().cholesky()?.l();
        for a in 0..l.nrows() {
            for b in 0..=a {
                out.push(l[(a, b)]);
            }
        }
    }
    Some(out)
}

fn chol_unflatten(x: &[f64], p: usize) -> Vec<Matrix> {
    let m = p * (p + 1) / 2;
    x.chunks(m)
        .map(|c| {
            let mut l = Matrix::zeros(p, p);
            let mut t = 0;
            for a in 0..p {
                for b in 0..=a {
                    l[(a, b)] = c[t];
                    t += 1;
                }
            }
            let mut s = &l * l.transpose();
            symmetrize(&mut s);
            s
        })
        .collect()
}

fn numeric_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn map_eta(counts: &[f64], q: f64) -> Vec<f64> {
    let k = counts.len();
    if k == 1 {
        return vec![1.0];
    }
    let n: f64 = counts.iter().sum();
    counts
        .iter()
        .map(|c| (c + q - 1.0) / (n + k as f64 * (q - 1.0)))
        .collect()
}

fn lp_mu(stats: &ComponentStats, g: f64) -> Vec<Vector> {
    (0..stats.k())
        .map(|j| {
            let n = stats.counts[j];
            &stats.means[j] * (g * n / (1.0 + g * n))
        })
        .collect()
}

/// Proximal linearization of the penalty at the current means, with `d_ij`
/// frozen; a fixed point solves `∇_μ ξ = 0`.
fn nlp_mu_candidate(
    current: &MixtureParams,
    cov: &CovTerms,
    stats: &ComponentStats,
    g: f64,
) -> Option<Vec<Vector>> {
    let k = current.k();
    let d = pairwise_separations(&current.mu, &cov.a_inv);
    (0..k)
        .map(|j| {
            let n = stats.counts[j];
            let mut coef = 1.0 / g;
            let mut rhs_pen = Vector::zeros(current.p());
            for i in (0..k).filter(|&i| i != j) {
                let dij = d[pair_index(i.min(j), i.max(j), k)] + SEPARATION_GUARD;
                coef += 2.0 / dij;
                rhs_pen += (&current.mu[j] * 4.0 - &current.mu[i] * 2.0) / dij;
            }
            let lhs = cov.inv_j(j) * n + &cov.a_inv * coef;
            let rhs = cov.inv_j(j) * (&stats.means[j] * n) + &cov.a_inv * rhs_pen;
            lhs.cholesky().map(|c| c.solve(&rhs))
        })
        .collect()
}

fn lp_sigma(mu: &[Vector], stats: &ComponentStats, spec: &ModelSpec, pr: &MomPrior) -> Vec<Matrix> {
    let s = pr.settings();
    let (p, psi) = (spec.p as f64, s.psi());
    let term = |j: usize| stats.scatter_about(j, &mu[j]) + &mu[j] * mu[j].transpose() / s.g;
    match spec.cov {
        CovStructure::Equal => {
            let n: f64 = stats.counts.iter().sum();
            let sum = (0..spec.k).fold(psi, |acc, j| acc + term(j));
            vec![sum / (s.nu - p - 1.0 + n + spec.k as f64)]
        }
        CovStructure::Unequal => (0..spec.k)
            .map(|j| (&psi + term(j)) / (s.nu - p + stats.counts[j]))
            .collect(),
    }
}

fn nlp_sigma_candidate(
    mu: &[Vector],
    a_inv: &Matrix,
    stats: &ComponentStats,
    spec: &ModelSpec,
    pr: &MomPrior,
) -> Vec<Matrix> {
    let s = pr.settings();
    let (k, p, psi) = (spec.k, spec.p as f64, s.psi());
    let d = pairwise_separations(mu, a_inv);
    let outer = |i: usize, j: usize| {
        let c = &mu[i] - &mu[j];
        &c * c.transpose() / (d[pair_index(i.min(j), i.max(j), k)] + SEPARATION_GUARD)
    };
    match spec.cov {
        CovStructure::Equal => {
            let n: f64 = stats.counts.iter().sum();
            let mut m = psi;
            for j in 0..k {
                m += stats.scatter_about(j, &mu[j]) + &mu[j] * mu[j].transpose() / s.g;
                for i in j + 1..k {
                    m -= outer(i, j) * 2.0;
                }
            }
            vec![m / (s.nu - p - 1.0 + n + k as f64)]
        }
        CovStructure::Unequal => (0..k)
            .map(|j| {
                let mut m = &psi
                    + &mu[j] * mu[j].transpose() / (k as f64 * s.g)
                    + stats.scatter_about(j, &mu[j]);
                for i in (0..k).filter(|&i| i != j) {
                    m -= outer(i, j) * (2.0 / k as f64);
                }
                m / (s.nu - p + stats.counts[j])
            })
            .collect(),
    }
}

fn mle_sigma(stats: &ComponentStats, spec: &ModelSpec) -> Vec<Matrix> {
    match spec.cov {
        CovStructure::Equal => {
            let n: f64 = stats.counts.iter().sum();
            let w = stats
                .scatter
                .iter()
                .fold(Matrix::zeros(spec.p, spec.p), |acc, s| acc + s);
            vec![w / n]
        }
        CovStructure::Unequal => (0..spec.k)
            .map(|j| &stats.scatter[j] / stats.counts[j].max(f64::MIN_POSITIVE))
            .collect(),
    }
}

fn check_collapse(sigma: &[Matrix]) -> Result<()> {
    for (c, s) in sigma.iter().enumerate() {
        let min = s
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(min >= COLLAPSE_THRESHOLD) {
            return Err(Error::Numerical(format!(
                "covariance {c} collapsed (smallest eigenvalue {min:e})"
            )));
        }
    }
    Ok(())
}

/// Sample covariance of all rows plus a small ridge.
fn ridge_covariance(data: &Dataset) -> Matrix {
    let stats = ComponentStats::from_allocation(data, &vec![0u16; data.n()], 1);
    let n = data.n().max(2) as f64;
    &stats.scatter[0] / (n - 1.0) + Matrix::identity(data.p(), data.p()) * 1e-6
}

fn mle_step(
    stats: &ComponentStats,
    current: &MixtureParams,
    data: &Dataset,
    spec: &ModelSpec,
    rng: &mut RandomStream,
) -> Result<MixtureParams> {
    let n: f64 = stats.counts.iter().sum();
    let k = spec.k;
    let mut eta: Vec<f64> = stats.counts.iter().map(|c| c / n).collect();
    let mut mu: Vec<Vector> = (0..k)
        .map(|j| {
            if stats.counts[j] > EMPTY_COUNT {
                stats.means[j].clone()
            } else {
                current.mu[j].clone()
            }
        })
        .collect();
    let mut sigma = mle_sigma(stats, spec);
    let empty: Vec<usize> = (0..k)
        .filter(|&j| stats.counts[j] <= EMPTY_COUNT && current.eta[j] > 0.0)
        .collect();
    for &j in &empty {
        if spec.cov == CovStructure::Unequal {
            sigma[j] = current.sigma[j].clone();
        }
    }
    check_collapse(&sigma)?;
    for j in 0..k {
        if stats.counts[j] <= EMPTY_COUNT {
            eta[j] = 0.0;
        }
    }
    for j in empty {
        let dead = normalized(MixtureParams {
            eta: eta.clone(),
            mu: mu.clone(),
            sigma: sigma.clone(),
        });
        let mut revived = dead.clone();
        revived.mu[j] = Vector::from_column_slice(data.obs(rng.random_range(0..data.n())));
        if spec.cov == CovStructure::Unequal {
            revived.sigma[j] = ridge_covariance(data);
        }
        revived.eta[j] = 1.0 / n;
        revived = normalized(revived);
        let keep_revived = match (
            crate::model::log_likelihood(&revived, data, spec),
            crate::model::log_likelihood(&dead, data, spec),
        ) {
            (Ok(a), Ok(b)) => a >= b,
            _ => false,
        };
        log::debug!(
            "{}: component {j} emptied, reinitialized = {keep_revived}",
            spec.label()
        );
        let chosen = if keep_revived { revived } else { dead };
        eta = chosen.eta;
        mu = chosen.mu;
        sigma = chosen.sigma;
    }
    Ok(normalized(MixtureParams { eta, mu, sigma }))
}

fn normalized(mut p: MixtureParams) -> MixtureParams {
    let total: f64 = p.eta.iter().sum();
    for e in &mut p.eta {
        *e /= total;
    }
    p
}

/// One M-step. Non-local candidates that do not raise `ξ` are replaced by a
/// gradient step; `rng` is only used to revive empty MLE components.
pub fn m_step(
    resp: &Responsibilities,
    current: &MixtureParams,
    data: &Dataset,
    spec: &ModelSpec,
    prior: Option<&MomPrior>,
    mode: EmMode,
    rng: &mut RandomStream,
) -> Result<MStep> {
    current.check_spec(spec)?;
    let prior = require_prior(mode, prior, spec)?;
    let stats = ComponentStats::from_weights(data, &resp.zbar, spec.k);
    m_step_stats(&stats, current, data, spec, prior, mode, rng)
}

fn m_step_stats(
    stats: &ComponentStats,
    current: &MixtureParams,
    data: &Dataset,
    spec: &ModelSpec,
    prior: Option<&MomPrior>,
    mode: EmMode,
    rng: &mut RandomStream,
) -> Result<MStep> {
    let pr = match (mode, prior) {
        (EmMode::Mle, _) => {
            return Ok(MStep {
                params: mle_step(stats, current, data, spec, rng)?,
                fallbacks: 0,
                stalls: 0,
            })
        }
        (_, Some(pr)) => pr,
        (_, None) => unreachable!("checked by require_prior"),
    };
    let settings = pr.settings();
    let eta = map_eta(&stats.counts, settings.q);
    if mode == EmMode::LpMap {
        let mu = lp_mu(stats, settings.g);
        let sigma = lp_sigma(&mu, stats, spec, pr);
        return Ok(MStep {
            params: MixtureParams { eta, mu, sigma },
            fallbacks: 0,
            stalls: 0,
        });
    }

    let (mut fallbacks, mut stalls) = (0, 0);
    let p = spec.p;
    let mut params = MixtureParams {
        eta,
        mu: current.mu.clone(),
        sigma: current.sigma.clone(),
    };
    let cov = CovTerms::new(&params)?;
    let mut xi = xi_with(&params, &cov, stats, mode, prior);

    // means
    let cand = nlp_mu_candidate(&params, &cov, stats, settings.g);
    let cand_xi = cand.as_ref().map_or(f64::NEG_INFINITY, |mu| {
        xi_or_neg_inf(
            &MixtureParams {
                mu: mu.clone(),
                ..params.clone()
            },
            stats,
            mode,
            prior,
        )
    });
    if cand_xi > xi {
        params.mu = cand.expect("finite objective implies a candidate");
        xi = cand_xi;
    } else {
        fallbacks += 1;
        let grad = flatten(&grad_mu_with(&params, &cov, stats, mode, prior));
        let start = flatten(&params.mu);
        let proposal = cand.as_ref().map(|c| flatten(c));
        let base = params.clone();
        let out = gradient_fallback(
            |x| {
                xi_or_neg_inf(
                    &MixtureParams {
                        mu: unflatten(x, p),
                        ..base.clone()
                    },
                    stats,
                    mode,
                    prior,
                )
            },
            &grad,
            &start,
            xi,
            proposal.as_deref(),
        );
        stalls += out.stalled as usize;
        params.mu = unflatten(&out.point, p);
        xi = out.value;
    }

    // covariances
    let a_inv = CovTerms::new(&params)?.a_inv;
    let cand = nlp_sigma_candidate(&params.mu, &a_inv, stats, spec, pr);
    let cand_ok = cand.iter().all(is_spd);
    let cand_xi = if cand_ok {
        xi_or_neg_inf(
            &MixtureParams {
                sigma: cand.clone(),
                ..params.clone()
            },
            stats,
            mode,
            prior,
        )
    } else {
        f64::NEG_INFINITY
    };
    if cand_xi > xi {
        params.sigma = cand;
    } else if let Some(start) = chol_flatten(&params.sigma) {
        fallbacks += 1;
        let base = params.clone();
        let mut f = |x: &[f64]| {
            let sigma = chol_unflatten(x, p);
            if !sigma.iter().all(is_spd) {
                return f64::NEG_INFINITY;
            }
            xi_or_neg_inf(
                &MixtureParams {
                    sigma,
                    ..base.clone()
                },
                stats,
                mode,
                prior,
            )
        };
        let grad = numeric_gradient(&mut f, &start);
        let proposal = if cand_ok { chol_flatten(&cand) } else { None };
        let out = gradient_fallback(&mut f, &grad, &start, xi, proposal.as_deref());
        stalls += out.stalled as usize;
        params.sigma = chol_unflatten(&out.point, p);
    }
    Ok(MStep {
        params,
        fallbacks,
        stalls,
    })
}

/// Uniformly random allocation followed by a maximum-likelihood M-step, with
/// the covariance of every component replaced by a ridge-guarded pooled one.
fn random_start(data: &Dataset, spec: &ModelSpec, rng: &mut RandomStream) -> MixtureParams {
    let k = spec.k;
    let z: Vec<u16> = (0..data.n())
        .map(|_| rng.random_range(0..k) as u16)
        .collect();
    let stats = ComponentStats::from_allocation(data, &z, k);
    let n = data.n() as f64;
    let ridge = ridge_covariance(data);
    let overall = ComponentStats::from_allocation(data, &vec![0u16; data.n()], 1).means[0].clone();
    let eta = stats
        .counts
        .iter()
        .map(|c| (c + 1.0) / (n + k as f64))
        .collect();
    let mu = (0..k)
        .map(|j| {
            if stats.counts[j] > 0.0 {
                stats.means[j].clone()
            } else {
                overall.clone()
            }
        })
        .collect();
    let sigma = vec![ridge; spec.n_cov()];
    MixtureParams { eta, mu, sigma }
}

/// Means at `k` distinct random observations, equal weights and the
/// ridge-guarded pooled covariance.
fn point_start(data: &Dataset, spec: &ModelSpec, rng: &mut RandomStream) -> MixtureParams {
    let k = spec.k;
    let rows = rand::seq::index::sample(rng, data.n(), k.min(data.n()));
    let mu: Vec<Vector> = (0..k)
        .map(|j| Vector::from_row_slice(data.obs(rows.index(j % rows.len()))))
        .collect();
    MixtureParams {
        eta: vec![1.0 / k as f64; k],
        mu,
        sigma: vec![ridge_covariance(data); spec.n_cov()],
    }
}

fn iterate(
    data: &Dataset,
    spec: &ModelSpec,
    prior: Option<&MomPrior>,
    mode: EmMode,
    start: MixtureParams,
    config: &EmConfig,
    rng: &mut RandomStream,
) -> Result<EmResult> {
    let mut params = start;
    let mut resp = e_step(&params, data, spec)?;
    let mut value = resp.log_lik + prior_term(&params, &CovTerms::new(&params)?, mode, prior);
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "{mode:?} objective is not finite at the start"
        )));
    }
    let mut out = EmResult {
        mode,
        params: params.clone(),
        objective_trace: vec![value],
        converged: false,
        iterations: 0,
        fallback_count: 0,
        stall_count: 0,
        log_lik: resp.log_lik,
    };
    let stats_of = |r: &Responsibilities| ComponentStats::from_weights(data, &r.zbar, spec.k);
    for it in 1..=config.max_iters {
        out.iterations = it;
        let step = m_step_stats(&stats_of(&resp), &params, data, spec, prior, mode, rng)?;
        out.fallback_count += step.fallbacks;
        out.stall_count += step.stalls;
        let next_resp = e_step(&step.params, data, spec)?;
        let next = next_resp.log_lik
            + prior_term(&step.params, &CovTerms::new(&step.params)?, mode, prior);
        if !(next >= value) {
            // rounding at the optimum, or a stalled ascent
            out.converged = value - next < config.tol;
            break;
        }
        out.objective_trace.push(next);
        params = step.params;
        resp = next_resp;
        let delta = next - value;
        value = next;
        if delta < config.tol {
            out.converged = true;
            break;
        }
    }
    if !out.converged {
        log::warn!(
            "{} {mode:?}: EM stopped after {} iterations",
            spec.label(),
            out.iterations
        );
    }
    out.log_lik = resp.log_lik;
    out.params = params;
    Ok(out)
}

/// Runs EM to convergence (`|Δ| < tol`) or `max_iters`.
pub fn run_em(
    data: &Dataset,
    spec: &ModelSpec,
    prior: Option<&MomPrior>,
    mode: EmMode,
    init: &EmInit,
    config: &EmConfig,
    rng: &mut RandomStream,
) -> Result<EmResult> {
    let prior = require_prior(mode, prior, spec)?;
    if data.p() != spec.p {
        return Err(Error::Shape(format!(
            "data have {} columns, model has p = {}",
            data.p(),
            spec.p
        )));
    }
    if data.n() <= spec.k {
        log::warn!("{}: n = {} does not exceed k", spec.label(), data.n());
    }
    if data.n() == 0 {
        return Err(Error::Domain("EM needs at least one observation".into()));
    }
    match init {
        EmInit::Given(p) => {
            p.check_spec(spec)?;
            iterate(data, spec, prior, mode, p.clone(), config, rng)
        }
        EmInit::FromMle => {
            let mle = run_em(
                data,
                spec,
                None,
                EmMode::Mle,
                &EmInit::RandomRestarts(config.mle_restarts),
                config,
                rng,
            )?;
            if mode == EmMode::Mle {
                return Ok(mle);
            }
            iterate(data, spec, prior, mode, mle.params, config, rng)
        }
        EmInit::RandomRestarts(r) => {
            let mut best: Option<EmResult> = None;
            let mut last_err = None;
            // each restart runs from allocation averaging and from observation-seeded means
            for attempt in 0..2 * (*r).max(1) {
                let start = if attempt % 2 == 0 {
                    random_start(data, spec, rng)
                } else {
                    point_start(data, spec, rng)
                };
                match iterate(data, spec, prior, mode, start, config, rng) {
                    Ok(res) => {
                        if best
                            .as_ref()
                            .is_none_or(|b| res.objective() > b.objective())
                        {
                            best = Some(res);
                        }
                    }
                    Err(e) => {
                        log::debug!(
                            "{} {mode:?}: restart {attempt} discarded: {e}",
                            spec.label()
                        );
                        last_err = Some(e);
                    }
                }
            }
            best.ok_or_else(|| {
                Error::Numerical(format!(
                    "{} {mode:?}: every restart failed ({})",
                    spec.label(),
                    last_err.map_or_else(String::new, |e| e.to_string())
                ))
            })
        }
    }
}
