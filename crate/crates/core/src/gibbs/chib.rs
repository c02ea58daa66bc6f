//! Chib's estimator with the sum over all `k!` relabelings, the non-local
//! correction and the non-empty-component diagnostic.

use super::{lse_or_neg_inf, ChainOutput};
use crate::model::{log_likelihood, ComponentStats};
use crate::prior::{CovTerms, MomPrior};
use crate::stats::linalg::{cholesky, log_det_from_chol, quad_form};
use crate::stats::{batch_means_se, ln_gamma, ln_mvgamma, InvWishart, LogSumExp};
use crate::{Allocation, Dataset, Error, Matrix, MixtureParams, PriorSettings, Result, Vector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Batches used for Monte Carlo standard errors.
pub const SE_BATCHES: usize = 20;

/// All permutations of `0..k`, generated once by Heap's algorithm.
#[derive(Clone, Debug)]
pub struct PermutationTable {
    k: usize,
    perms: Vec<Vec<usize>>,
}

impl PermutationTable {
    pub fn new(k: usize) -> Self {
        let mut a: Vec<usize> = (0..k).collect();
        let mut perms = vec![a.clone()];
        let mut c = vec![0usize; k];
        let mut i = 1;
        while i < k {
            if c[i] < i {
                if i % 2 == 0 {
                    a.swap(0, i);
                } else {
                    a.swap(c[i], i);
                }
                perms.push(a.clone());
                c[i] += 1;
                i = 1;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        Self { k, perms }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.perms.iter().map(|p| p.as_slice())
    }
}

/// Quantities of the estimated point that every ordinate reuses.
struct PointCache {
    log_eta: Vec<f64>,
    cov: CovTerms,
}

/// Per-draw terms: `a[j * k + l]` is the contribution of pairing sampler
/// component `j` with estimated component `l`; `constant` collects the rest.
fn ordinate_terms(
    stats: &ComponentStats,
    point: &MixtureParams,
    cache: &PointCache,
    settings: &PriorSettings,
    psi0: &Matrix,
    a: &mut [f64],
) -> Result<f64> {
    let k = stats.k();
    let p = point.p() as f64;
    let (g, q, nu) = (settings.g, settings.q, settings.nu);
    let mut constant = 0.0;
    if k > 1 {
        let total: f64 = stats.counts.iter().map(|n| q + n).sum();
        constant += ln_gamma(total) - stats.counts.iter().map(|n| ln_gamma(q + n)).sum::<f64>();
    }
    let collapsed = |j: usize| {
        let n = stats.counts[j];
        let m = &stats.means[j];
        &stats.scatter[j] + (m * m.transpose()) * (n / (1.0 + g * n))
    };
    let equal = point.sigma.len() == 1;
    let mut iws: Vec<InvWishart> = Vec::new();
    if equal {
        let mut psi = psi0.clone();
        for j in 0..k {
            psi += collapsed(j);
        }
        let n: f64 = stats.counts.iter().sum();
        let iw = InvWishart::from_inverse_scale(nu + n, psi)?;
        constant += iw.ln_pdf_parts(cache.cov.log_det[0], &cache.cov.inv[0]);
    } else {
        for j in 0..k {
            iws.push(InvWishart::from_inverse_scale(
                nu + stats.counts[j],
                psi0 + collapsed(j),
            )?);
        }
    }
    for j in 0..k {
        let n = stats.counts[j];
        let shrink = g / (1.0 + g * n);
        let centre: Vector = &stats.means[j] * (g * n / (1.0 + g * n));
        let log_shrink = shrink.ln();
        for l in 0..k {
            let mut v = if k > 1 {
                (q + n - 1.0) * cache.log_eta[l]
            } else {
                0.0
            };
            if !equal {
                v += iws[j].ln_pdf_parts(cache.cov.log_det[l], &cache.cov.inv[l]);
            }
            let r = &point.mu[l] - &centre;
            v += -0.5 * p * (LN_2PI + log_shrink)
                - 0.5 * cache.cov.log_det_j(l)
                - 0.5 * quad_form(cache.cov.inv_j(l), &r) / shrink;
            a[j * k + l] = v;
        }
    }
    Ok(constant)
}

fn point_cache(point: &MixtureParams) -> Result<PointCache> {
    Ok(PointCache {
        log_eta: point.eta.iter().map(|e| e.ln()).collect(),
        cov: CovTerms::new(point)?,
    })
}

/// `ln p(ϑ̂ | y, z)` under the local prior, factored as the sampler's blocks.
pub fn conditional_ordinate(
    theta_hat: &MixtureParams,
    z: &Allocation,
    data: &Dataset,
    prior: &MomPrior,
) -> Result<f64> {
    let spec = prior.spec();
    theta_hat.check_spec(spec)?;
    let stats = ComponentStats::from_allocation(data, &z.z, spec.k);
    let cache = point_cache(theta_hat)?;
    let mut a = vec![0.0; spec.k * spec.k];
    let c = ordinate_terms(
        &stats,
        theta_hat,
        &cache,
        prior.settings(),
        &prior.settings().psi(),
        &mut a,
    )?;
    Ok(c + (0..spec.k).map(|j| a[j * spec.k + j]).sum::<f64>())
}

/// Output of [`chib_log_marginal`].
#[derive(Clone, Debug)]
pub struct ChibEstimate {
    pub log_marginal: f64,
    pub log_lik: f64,
    pub log_prior: f64,
    /// Estimated `ln p(ϑ̂ | y)`.
    pub log_ordinate: f64,
    /// Standard error of the log marginal (batch means, delta method).
    pub std_err: f64,
    pub theta_hat: MixtureParams,
}

/// `ln p(y | ϑ̂) + ln p(ϑ̂) − ln p̂(ϑ̂ | y)`, where the posterior ordinate
/// averages the conditional ordinate over kept draws and all relabelings
/// of `ϑ̂`.
pub fn chib_log_marginal(
    chain: &ChainOutput,
    theta_hat: &MixtureParams,
    data: &Dataset,
    prior: &MomPrior,
) -> Result<ChibEstimate> {
    let spec = prior.spec();
    theta_hat.check_spec(spec)?;
    if chain.is_empty() {
        return Err(Error::EstimatorDegenerate("chain has no kept draws".into()));
    }
    let k = spec.k;
    let perms = PermutationTable::new(k);
    let cache = point_cache(theta_hat)?;
    let psi0 = prior.settings().psi();
    let mut a = vec![0.0; k * k];
    let mut per_draw = Vec::with_capacity(chain.len());
    for alloc in &chain.allocations {
        let stats = ComponentStats::from_allocation(data, &alloc.z, k);
        let c = ordinate_terms(&stats, theta_hat, &cache, prior.settings(), &psi0, &mut a)?;
        let mut acc = LogSumExp::new();
        for perm in perms.iter() {
            let mut v = c;
            for (j, &l) in perm.iter().enumerate() {
                v += a[j * k + l];
            }
            acc.push(v);
        }
        per_draw.push(acc.value());
    }
    let total = lse_or_neg_inf(&per_draw);
    if total == f64::NEG_INFINITY || total.is_nan() {
        return Err(Error::EstimatorDegenerate(format!(
            "{}: every conditional ordinate vanishes at the supplied point",
            spec.label()
        )));
    }
    let log_ordinate = total - (chain.len() as f64).ln() - ln_gamma(k as f64 + 1.0);
    let log_lik = log_likelihood(theta_hat, data, spec)?;
    let log_prior = prior.lp_log_prior(theta_hat)?;
    let std_err = relative_se(&per_draw);
    Ok(ChibEstimate {
        log_marginal: log_lik + log_prior - log_ordinate,
        log_lik,
        log_prior,
        log_ordinate,
        std_err,
        theta_hat: theta_hat.clone(),
    })
}

/// Standard error of `ln mean(exp(v))` by batch means and the delta method.
fn relative_se(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NAN;
    }
    let xs: Vec<f64> = logs.iter().map(|v| (v - max).exp()).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    batch_means_se(&xs, SE_BATCHES) / mean
}

/// Local and non-local integrated likelihoods of one model.
#[derive(Clone, Debug)]
pub struct MarginalEstimate {
    pub log_marginal_lp: f64,
    pub log_marginal_nlp: f64,
    /// `ln` of the posterior average of `ω`.
    pub log_mean_omega: f64,
    pub mc_std_err_lp: f64,
    pub mc_std_err_omega: f64,
    pub ordinate_at: MixtureParams,
}

/// Adds the log of the posterior mean of `ω` to the local estimate.
pub fn nlp_log_marginal(chain: &ChainOutput, chib: &ChibEstimate) -> MarginalEstimate {
    let t = chain.omega_logs.len() as f64;
    let log_mean_omega = lse_or_neg_inf(&chain.omega_logs) - t.ln();
    if log_mean_omega == f64::NEG_INFINITY {
        log::warn!(
            "{}: every draw has coincident means, the non-local evidence is zero",
            chain.spec.label()
        );
    }
    MarginalEstimate {
        log_marginal_lp: chib.log_marginal,
        log_marginal_nlp: chib.log_marginal + log_mean_omega,
        log_mean_omega,
        mc_std_err_lp: chib.std_err,
        mc_std_err_omega: relative_se(&chain.omega_logs),
        ordinate_at: chib.theta_hat.clone(),
    }
}

/// Exact `ln p(y)` for one Normal component under `N(0, gΣ)` × `IW(ν, S)`:
///
/// ```text
/// −(np/2) ln π − (p/2) ln(1 + g n) + ln Γ_p((ν+n)/2) − ln Γ_p(ν/2)
///     + (ν/2) ln|Ψ_0| − ((ν+n)/2) ln|Ψ_n|
/// ```
///
/// with `Ψ_0 = S⁻¹` and `Ψ_n = Ψ_0 + W + n/(1 + g n) ȳȳ'`.
pub fn conjugate_log_marginal(data: &Dataset, settings: &PriorSettings) -> Result<f64> {
    let (n, p) = (data.n() as f64, data.p());
    let pf = p as f64;
    let stats = ComponentStats::from_allocation(data, &vec![0u16; data.n()], 1);
    let g = settings.g;
    let psi0 = settings.psi();
    let m = &stats.means[0];
    let psi_n = &psi0 + &stats.scatter[0] + (m * m.transpose()) * (n / (1.0 + g * n));
    let ld0 = log_det_from_chol(&cholesky(&psi0)?);
    let ldn = log_det_from_chol(&cholesky(&psi_n)?);
    let nu = settings.nu;
    Ok(
        -0.5 * n * pf * std::f64::consts::PI.ln() - 0.5 * pf * (1.0 + g * n).ln()
            + ln_mvgamma(p, 0.5 * (nu + n))
            - ln_mvgamma(p, 0.5 * nu)
            + 0.5 * nu * ld0
            - 0.5 * (nu + n) * ldn,
    )
}

/// Share of kept sweeps with `m` non-empty components, at index `m − 1`.
pub fn nonempty_distribution(chain: &ChainOutput) -> Vec<f64> {
    let w = vec![1.0; chain.allocations.len()];
    weighted_nonempty(chain, &w)
}

/// As [`nonempty_distribution`], each sweep weighted by its `ω`, which
/// targets the non-local posterior.
pub fn nonempty_distribution_weighted(chain: &ChainOutput) -> Vec<f64> {
    let max = chain
        .omega_logs
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; chain.spec.k];
    }
    let w: Vec<f64> = chain.omega_logs.iter().map(|v| (v - max).exp()).collect();
    weighted_nonempty(chain, &w)
}

fn weighted_nonempty(chain: &ChainOutput, w: &[f64]) -> Vec<f64> {
    let k = chain.spec.k;
    let mut out = vec![0.0; k];
    let mut total = 0.0;
    for (alloc, wt) in chain.allocations.iter().zip(w) {
        let m = alloc.nonempty();
        if m > 0 {
            out[m - 1] += wt;
            total += wt;
        }
    }
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{run_chain, ChainConfig};
    use super::*;
    use crate::stats::{Dirichlet, RandomStream};
    use crate::{simulate, CovStructure, ModelSpec, NormConstTable};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn prior_for(spec: &ModelSpec, settings: &PriorSettings) -> MomPrior {
        let table = NormConstTable::build(spec.k, spec.p, &mut RandomStream::new(0, 0)).unwrap();
        MomPrior::new(settings, spec, &table).unwrap()
    }

    #[test]
    fn heap_permutations() {
        for k in 1..=5 {
            let t = PermutationTable::new(k);
            let mut all: Vec<Vec<usize>> = t.iter().map(|p| p.to_vec()).collect();
            all.sort();
            all.dedup();
            assert_eq!(all.len(), (1..=k).product::<usize>());
        }
    }

    #[test]
    fn ordinate_with_no_data_is_the_prior() {
        let spec = ModelSpec::new(1, CovStructure::Equal, 2).unwrap();
        let settings = PriorSettings::defaults(2, CovStructure::Equal, 0.05).unwrap();
        let prior = prior_for(&spec, &settings);
        let point = MixtureParams::new(
            vec![1.0],
            vec![Vector::from_vec(vec![0.3, -0.2])],
            vec![Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4])],
        )
        .unwrap();
        let z = Allocation::new(vec![], 1).unwrap();
        let v = conditional_ordinate(&point, &z, &Dataset::empty(2), &prior).unwrap();
        assert_abs_diff_eq!(v, prior.lp_log_prior(&point).unwrap(), epsilon = 1e-12);
    }

    /// Term-wise oracle: Dirichlet, inverse Wishart and Normal densities
    /// evaluated through the generic distribution types.
    #[test]
    fn ordinate_termwise_oracle() {
        let mut rng = RandomStream::new(1, 0);
        let data = Dataset::from_standardized(Matrix::from_fn(12, 2, |_, _| {
            rng.random::<f64>() * 2.0 - 1.0
        }))
        .unwrap();
        let z: Vec<u16> = (0..12).map(|i| (i % 3 == 0) as u16).collect();
        let spec = ModelSpec::new(2, CovStructure::Unequal, 2).unwrap();
        let settings = PriorSettings::defaults(2, CovStructure::Unequal, 0.05).unwrap();
        let prior = prior_for(&spec, &settings);
        let point = MixtureParams::new(
            vec![0.6, 0.4],
            vec![
                Vector::from_vec(vec![0.2, -0.1]),
                Vector::from_vec(vec![-0.5, 0.4]),
            ],
            vec![
                Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]),
                Matrix::from_row_slice(2, 2, &[0.7, -0.2, -0.2, 0.6]),
            ],
        )
        .unwrap();
        let alloc = Allocation::new(z.clone(), 2).unwrap();
        let got = conditional_ordinate(&point, &alloc, &data, &prior).unwrap();

        let g = settings.g;
        let mut expect = 0.0;
        let mut alpha = vec![];
        for j in 0..2u16 {
            let rows: Vec<usize> = (0..12).filter(|&i| z[i] == j).collect();
            let n = rows.len() as f64;
            alpha.push(settings.q + n);
            let ybar = rows.iter().fold(Vector::zeros(2), |acc, &i| {
                acc + Vector::from_row_slice(data.obs(i))
            }) / n;
            let w = rows.iter().fold(Matrix::zeros(2, 2), |acc, &i| {
                let r = Vector::from_row_slice(data.obs(i)) - &ybar;
                acc + &r * r.transpose()
            });
            let psi = settings.psi() + w + (&ybar * ybar.transpose()) * (n / (1.0 + g * n));
            let iw = InvWishart::from_inverse_scale(settings.nu + n, psi).unwrap();
            expect += iw.ln_pdf(&point.sigma[j as usize]).unwrap();
            let mvn = crate::stats::Mvn::new(
                &ybar * (g * n / (1.0 + g * n)),
                &point.sigma[j as usize] * (g / (1.0 + g * n)),
            )
            .unwrap();
            expect += mvn.ln_pdf(&point.mu[j as usize]).unwrap();
        }
        expect += Dirichlet::new(alpha).unwrap().ln_pdf(&point.eta).unwrap();
        assert_abs_diff_eq!(got, expect, epsilon = 1e-10);

        // simultaneous relabeling of the point and the allocation
        let swapped = conditional_ordinate(
            &point.permute(&[1, 0]),
            &alloc.permute(&[1, 0]),
            &data,
            &prior,
        )
        .unwrap();
        assert_abs_diff_eq!(got, swapped, epsilon = 1e-10);
    }

    #[test]
    fn exact_at_one_component() {
        let sim = simulate::simulate_case(5, 100, &mut RandomStream::new(2, 0)).unwrap();
        let data = sim.dataset().unwrap();
        let spec = ModelSpec::new(1, CovStructure::Equal, 2).unwrap();
        let settings = PriorSettings::defaults(2, CovStructure::Equal, 0.05).unwrap();
        let prior = prior_for(&spec, &settings);
        let chain = run_chain(
            &data,
            &prior,
            ChainConfig {
                iters: 700,
                burnin: 200,
            },
            None,
            &mut RandomStream::new(3, 0),
        )
        .unwrap();
        let point = chain.draws[10].clone();
        let est = chib_log_marginal(&chain, &point, &data, &prior).unwrap();
        let exact = conjugate_log_marginal(&data, &settings).unwrap();
        // the ordinate is exact for a single component
        assert_abs_diff_eq!(est.log_marginal, exact, epsilon = 1e-8);
        let m = nlp_log_marginal(&chain, &est);
        assert_eq!(m.log_marginal_nlp, m.log_marginal_lp);
    }

    #[test]
    fn relabeling_the_point_changes_nothing() {
        let sim = simulate::simulate_case(4, 120, &mut RandomStream::new(4, 0)).unwrap();
        let data = sim.dataset().unwrap();
        let spec = ModelSpec::new(3, CovStructure::Unequal, 1).unwrap();
        let settings = PriorSettings::defaults(1, CovStructure::Unequal, 0.05).unwrap();
        let prior = prior_for(&spec, &settings);
        let chain = run_chain(
            &data,
            &prior,
            ChainConfig {
                iters: 300,
                burnin: 100,
            },
            None,
            &mut RandomStream::new(5, 0),
        )
        .unwrap();
        let point = chain.draws.last().unwrap().clone();
        let a = chib_log_marginal(&chain, &point, &data, &prior).unwrap();
        let b = chib_log_marginal(&chain, &point.permute(&[2, 0, 1]), &data, &prior).unwrap();
        assert!((a.log_marginal - b.log_marginal).abs() < 1e-10);
    }

    /// Exact `ln p(y)` for p = 1 by summing the collapsed conjugate marginal
    /// over every allocation.
    fn enumerated_log_marginal(y: &[f64], k: usize, cov: CovStructure, s: &PriorSettings) -> f64 {
        use crate::stats::ln_gamma;
        let (a, b, g, q) = (0.5 * s.nu, 0.5 / s.s[(0, 0)], s.g, s.q);
        let n = y.len();
        let group = |m: f64, log_det: f64, quad: f64| {
            -0.5 * m * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det
                + a * b.ln()
                + ln_gamma(a + 0.5 * m)
                - ln_gamma(a)
                - (a + 0.5 * m) * (b + 0.5 * quad).ln()
        };
        let mut terms = Vec::new();
        let mut z = vec![0usize; n];
        loop {
            let mut cnt = vec![0.0; k];
            let mut sum = vec![0.0; k];
            let mut sq = vec![0.0; k];
            for (i, &j) in z.iter().enumerate() {
                cnt[j] += 1.0;
                sum[j] += y[i];
                sq[j] += y[i] * y[i];
            }
            let mut lp = ln_gamma(k as f64 * q) - ln_gamma(k as f64 * q + n as f64);
            let (mut ld, mut qd) = (vec![0.0; k], vec![0.0; k]);
            for j in 0..k {
                lp += ln_gamma(q + cnt[j]) - ln_gamma(q);
                ld[j] = (1.0 + g * cnt[j]).ln();
                qd[j] = sq[j] - g * sum[j] * sum[j] / (1.0 + g * cnt[j]);
            }
            lp += match cov {
                CovStructure::Equal => group(n as f64, ld.iter().sum(), qd.iter().sum()),
                CovStructure::Unequal => (0..k).map(|j| group(cnt[j], ld[j], qd[j])).sum(),
            };
            terms.push(lp);
            let mut i = 0;
            while i < n && z[i] == k - 1 {
                z[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
            z[i] += 1;
        }
        crate::stats::log_sum_exp(&terms).unwrap()
    }

    #[test]
    fn enumeration_oracle_matches_conjugate_form() {
        let y = [0.3, -1.2, 0.8, 1.9, -0.4];
        let settings = PriorSettings::defaults(1, CovStructure::Equal, 0.05).unwrap();
        let data = Dataset::from_standardized(Matrix::from_column_slice(5, 1, &y)).unwrap();
        let exact = conjugate_log_marginal(&data, &settings).unwrap();
        let got = enumerated_log_marginal(&y, 1, CovStructure::Equal, &settings);
        assert_abs_diff_eq!(got, exact, epsilon = 1e-10);
    }

    #[test]
    fn several_components_match_enumeration() {
        let y = [-1.6, -1.3, -1.1, -0.9, -1.4, 0.2, 1.2, 1.5, 0.9, 1.1, 1.4];
        let data = Dataset::from_standardized(Matrix::from_column_slice(y.len(), 1, &y)).unwrap();
        for (k, cov) in [
            (2, CovStructure::Equal),
            (2, CovStructure::Unequal),
            (3, CovStructure::Equal),
            (3, CovStructure::Unequal),
        ] {
            let spec = ModelSpec::new(k, cov, 1).unwrap();
            let settings = PriorSettings::defaults(1, cov, 0.05).unwrap();
            let prior = prior_for(&spec, &settings);
            let chain = run_chain(
                &data,
                &prior,
                ChainConfig {
                    iters: 12000,
                    burnin: 2000,
                },
                None,
                &mut RandomStream::new(11, 0),
            )
            .unwrap();
            let point = chain
                .draws
                .iter()
                .max_by(|a, b| {
                    let f = |t: &MixtureParams| {
                        prior.lp_log_prior(t).unwrap()
                            + crate::model::log_likelihood(t, &data, &spec).unwrap()
                    };
                    f(a).total_cmp(&f(b))
                })
                .unwrap()
                .clone();
            let est = chib_log_marginal(&chain, &point, &data, &prior).unwrap();
            let exact = enumerated_log_marginal(&y, k, cov, &settings);
            assert!(
                (est.log_marginal - exact).abs() < 0.05,
                "k = {k} {cov:?}: chib {} exact {exact}",
                est.log_marginal
            );
        }
    }

    #[test]
    fn omega_identity_and_nonempty() {
        let sim = simulate::simulate_case(1, 40, &mut RandomStream::new(6, 0)).unwrap();
        let data = sim.dataset().unwrap();
        let spec = ModelSpec::new(3, CovStructure::Equal, 1).unwrap();
        let settings = PriorSettings::defaults(1, CovStructure::Equal, 0.05).unwrap();
        let prior = prior_for(&spec, &settings);
        let chain = run_chain(
            &data,
            &prior,
            ChainConfig {
                iters: 400,
                burnin: 100,
            },
            None,
            &mut RandomStream::new(7, 0),
        )
        .unwrap();
        let est = chib_log_marginal(&chain, chain.draws.last().unwrap(), &data, &prior).unwrap();
        let m = nlp_log_marginal(&chain, &est);
        let mean_omega = chain.omega_logs.iter().map(|w| w.exp()).sum::<f64>() / chain.len() as f64;
        let ratio = (m.log_marginal_nlp - m.log_marginal_lp).exp();
        assert!((ratio / mean_omega - 1.0).abs() < 1e-12);
        let d = nonempty_distribution(&chain);
        assert_abs_diff_eq!(d.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let dw = nonempty_distribution_weighted(&chain);
        assert_abs_diff_eq!(dw.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        // fewer observations than components
        let tiny =
            Dataset::from_standardized(Matrix::from_column_slice(2, 1, &[-1.0, 1.0])).unwrap();
        let chain = run_chain(
            &tiny,
            &prior,
            ChainConfig {
                iters: 50,
                burnin: 0,
            },
            None,
            &mut RandomStream::new(8, 0),
        )
        .unwrap();
        let d = nonempty_distribution(&chain);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn degenerate_point_is_reported() {
        let sim = simulate::simulate_case(3, 60, &mut RandomStream::new(9, 0)).unwrap();
        let data = sim.dataset().unwrap();
        let spec = ModelSpec::new(2, CovStructure::Equal, 1).unwrap();
        let settings = PriorSettings::defaults(1, CovStructure::Equal, 0.05).unwrap();
        let prior = prior_for(&spec, &settings);
        let chain = run_chain(
            &data,
            &prior,
            ChainConfig {
                iters: 30,
                burnin: 0,
            },
            None,
            &mut RandomStream::new(10, 0),
        )
        .unwrap();
        let mut point = chain.draws[5].clone();
        point.eta = vec![1.0, 0.0];
        assert!(matches!(
            chib_log_marginal(&chain, &point, &data, &prior),
            Err(Error::EstimatorDegenerate(_))
        ));
    }
}
