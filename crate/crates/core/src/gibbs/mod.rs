//! Blocked Gibbs sampling under the local Normal-IW-Dirichlet prior, the
//! permutation-averaged Chib estimator of the integrated likelihood and the
//! importance correction that turns it into the non-local one.
//!
//! One sweep draws, in order,
//!
//! ```text
//! z_i        ∝ η_j N(y_i | μ_j, Σ_j)
//! η          ~ Dir(q + n_1, …, q + n_k)
//! Σ_j        ~ IW(ν + n_j, Ψ_j),  Ψ_j = S⁻¹ + W_j + n_j/(1 + g n_j) ȳ_j ȳ_j'
//! μ_j | Σ_j  ~ N(g n_j ȳ_j / (1 + g n_j), g/(1 + g n_j) Σ_j)
//! ```
//!
//! where `W_j` is the scatter about `ȳ_j` and `ȳ_j = 0` for empty components.
//! Under a shared covariance the `Ψ_j` terms are pooled and the degrees of
//! freedom become `ν + n`.

mod chib;

pub use chib::{
    chib_log_marginal, conditional_ordinate, conjugate_log_marginal, nlp_log_marginal,
    nonempty_distribution, nonempty_distribution_weighted, ChibEstimate, MarginalEstimate,
    PermutationTable,
};

use rand::Rng;

use crate::model::ComponentStats;
use crate::prior::{CovTerms, MomPrior};
use crate::stats::{log_sum_exp, Dirichlet, InvWishart, RandomStream};
use crate::{
    Allocation, CovStructure, Dataset, Error, Matrix, MixtureParams, ModelSpec, PriorSettings,
    Result, Vector,
};

/// Chain length settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainConfig {
    pub iters: usize,
    pub burnin: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iters: 7500,
            burnin: 2500,
        }
    }
}

impl ChainConfig {
    pub fn kept(&self) -> usize {
        self.iters - self.burnin
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters <= self.burnin {
            return Err(Error::Domain(format!(
                "iters ({}) must exceed burnin ({})",
                self.iters, self.burnin
            )));
        }
        Ok(())
    }
}

/// Kept draws of one chain.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub spec: ModelSpec,
    pub settings: PriorSettings,
    pub config: ChainConfig,
    pub seed: u64,
    pub stream_id: u64,
    pub draws: Vec<MixtureParams>,
    pub allocations: Vec<Allocation>,
    /// `ln ω` at each kept draw.
    pub omega_logs: Vec<f64>,
    /// Mixture log-likelihood at each kept draw.
    pub log_liks: Vec<f64>,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Draws `θ | z`: weights, then covariances with the means integrated out,
/// then means.
fn draw_parameters(
    stats: &ComponentStats,
    spec: &ModelSpec,
    settings: &PriorSettings,
    psi0: &Matrix,
    rng: &mut RandomStream,
) -> Result<MixtureParams> {
    let (k, g) = (spec.k, settings.g);
    let eta = if k == 1 {
        vec![1.0]
    } else {
        Dirichlet::new(stats.counts.iter().map(|n| settings.q + n).collect())?.sample(rng)
    };
    let collapsed = |j: usize| {
        let n = stats.counts[j];
        let m = &stats.means[j];
        &stats.scatter[j] + (m * m.transpose()) * (n / (1.0 + g * n))
    };
    let sigma: Vec<Matrix> = match spec.cov {
        CovStructure::Equal => {
            let mut psi = psi0.clone();
            for j in 0..k {
                psi += collapsed(j);
            }
            let n: f64 = stats.counts.iter().sum();
            vec![draw_iw(settings.nu + n, psi, rng)?]
        }
        CovStructure::Unequal => (0..k)
            .map(|j| draw_iw(settings.nu + stats.counts[j], psi0 + collapsed(j), rng))
            .collect::<Result<_>>()?,
    };
    let mut mu = Vec::with_capacity(k);
    for j in 0..k {
        let n = stats.counts[j];
        let shrink = g / (1.0 + g * n);
        let mean = &stats.means[j] * (g * n / (1.0 + g * n));
        let cov = if sigma.len() == 1 {
            &sigma[0]
        } else {
            &sigma[j]
        } * shrink;
        let kernel = crate::stats::GaussianKernel::new(&mean, &cov)?;
        mu.push(kernel.sample(rng));
    }
    Ok(MixtureParams { eta, mu, sigma })
}

fn draw_iw(dof: f64, psi: Matrix, rng: &mut RandomStream) -> Result<Matrix> {
    let iw = InvWishart::from_inverse_scale(dof, psi)?;
    let s = iw.sample(rng);
    if crate::stats::linalg::is_spd(&s) {
        Ok(s)
    } else {
        Err(Error::SingularMatrix(format!(
            "inverse Wishart draw with {dof} degrees of freedom is not SPD"
        )))
    }
}

/// Draws allocations given parameters and returns the log-likelihood of the
/// parameters, which falls out of the normalization.
fn draw_allocations(
    data: &Dataset,
    params: &MixtureParams,
    z: &mut [u16],
    buf: &mut [f64],
    rng: &mut RandomStream,
) -> Result<f64> {
    let kernels = params.kernels()?;
    let k = params.k();
    let log_eta: Vec<f64> = params.eta.iter().map(|e| e.ln()).collect();
    let mut loglik = 0.0;
    for (i, zi) in z.iter_mut().enumerate() {
        let y = data.obs(i);
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            let v = log_eta[j] + kernels[j].ln_pdf(y);
            buf[j] = v;
            max = max.max(v);
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::Numerical(format!(
                "observation {i} has zero density under every component"
            )));
        }
        let mut total = 0.0;
        for b in buf[..k].iter_mut() {
            *b = (*b - max).exp();
            total += *b;
        }
        loglik += max + total.ln();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = k - 1;
        for (j, b) in buf[..k].iter().enumerate() {
            acc += b;
            if u < acc {
                pick = j;
                break;
            }
        }
        *zi = pick as u16;
    }
    Ok(loglik)
}

fn mixture_log_lik(data: &Dataset, params: &MixtureParams) -> Result<f64> {
    let kernels = params.kernels()?;
    Ok((0..data.n())
        .map(|i| params.ln_density(&kernels, data.obs(i)))
        .sum())
}

/// Runs one chain. `init` seeds the parameters (typically the posterior
/// mode); without it the chain starts from a uniformly random allocation.
pub fn run_chain(
    data: &Dataset,
    prior: &MomPrior,
    config: ChainConfig,
    init: Option<&MixtureParams>,
    rng: &mut RandomStream,
) -> Result<ChainOutput> {
    config.validate()?;
    let spec = *prior.spec();
    let settings = prior.settings().clone();
    if data.p() != spec.p {
        return Err(Error::Shape(format!(
            "data have {} columns, model has p = {}",
            data.p(),
            spec.p
        )));
    }
    if data.n() > 0 && data.n() < spec.k * spec.p {
        log::warn!(
            "{}: n = {} is small relative to k·p",
            spec.label(),
            data.n()
        );
    }
    let k = spec.k;
    let n = data.n();
    let psi0 = settings.psi();
    let mut z = vec![0u16; n];
    let mut buf = vec![0.0; k];
    let mut params = match init {
        Some(p) => {
            p.check_spec(&spec)?;
            p.clone()
        }
        None => {
            for zi in z.iter_mut() {
                *zi = rng.random_range(0..k) as u16;
            }
            let stats = ComponentStats::from_allocation(data, &z, k);
            draw_parameters(&stats, &spec, &settings, &psi0, rng)?
        }
    };
    let kept = config.kept();
    let mut out = ChainOutput {
        spec,
        settings: settings.clone(),
        config,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
        draws: Vec::with_capacity(kept),
        allocations: Vec::with_capacity(kept),
        omega_logs: Vec::with_capacity(kept),
        log_liks: Vec::with_capacity(kept),
    };
    for it in 0..config.iters {
        let loglik = draw_allocations(data, &params, &mut z, &mut buf, rng)?;
        if it > config.burnin {
            // the likelihood of the previous kept draw comes for free
            out.log_liks.push(loglik);
        }
        let stats = ComponentStats::from_allocation(data, &z, k);
        params = draw_parameters(&stats, &spec, &settings, &psi0, rng)?;
        if it >= config.burnin {
            let cov = CovTerms::new(&params)?;
            out.omega_logs
                .push(prior.omega_log_weight_with(&params, &cov));
            out.allocations.push(Allocation { z: z.clone(), k });
            out.draws.push(params.clone());
        }
    }
    out.log_liks.push(mixture_log_lik(data, &params)?);
    Ok(out)
}

/// The posterior mean of `μ` under `k = 1`, `g n ȳ / (1 + g n)`.
pub fn conjugate_posterior_mean(data: &Dataset, g: f64) -> Vector {
    let n = data.n() as f64;
    let stats = ComponentStats::from_allocation(data, &vec![0u16; data.n()], 1);
    &stats.means[0] * (g * n / (1.0 + g * n))
}

/// `ln Σ exp` of a slice, `-inf` for an empty one.
pub(crate) fn lse_or_neg_inf(v: &[f64]) -> f64 {
    log_sum_exp(v).unwrap_or(f64::NEG_INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{simulate, NormConstTable};

    fn prior_for(spec: &ModelSpec, settings: &PriorSettings) -> MomPrior {
        let table = NormConstTable::build(spec.k, spec.p, &mut RandomStream::new(0, 0)).unwrap();
        MomPrior::new(settings, spec, &table).unwrap()
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn empty_data_reproduces_weight_prior() {
        let spec = ModelSpec::new(2, CovStructure::Equal, 1).unwrap();
        let settings =
            PriorSettings::with_values(1, CovStructure::Equal, 2.0, Some(3.0), 0.05).unwrap();
        let prior = prior_for(&spec, &settings);
        let data = Dataset::empty(1);
        let cfg = ChainConfig {
            iters: 10_001,
            burnin: 1,
        };
        let out = run_chain(&data, &prior, cfg, None, &mut RandomStream::new(3, 0)).unwrap();
        let eta1: Vec<f64> = out.draws.iter().map(|d| d.eta[0]).collect();
        let (m, se) = mean_se(&eta1);
        assert!((m - 0.5).abs() < 3.0 * se, "{m} ± {se}");
        assert!(out.log_liks.iter().all(|l| *l == 0.0));
    }

    #[test]
    fn weights_given_counts() {
        // counts (10, 0), q = 3: η ~ Dir(13, 3), E η_1 = 13/16
        let spec = ModelSpec::new(2, CovStructure::Unequal, 1).unwrap();
        let settings =
            PriorSettings::with_values(1, CovStructure::Unequal, 2.0, Some(3.0), 0.05).unwrap();
        let data =
            Dataset::from_standardized(Matrix::from_fn(10, 1, |i, _| i as f64 / 10.0)).unwrap();
        let stats = ComponentStats::from_allocation(&data, &[0; 10], 2);
        let psi0 = settings.psi();
        let mut rng = RandomStream::new(4, 0);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| {
                draw_parameters(&stats, &spec, &settings, &psi0, &mut rng)
                    .unwrap()
                    .eta[0]
            })
            .collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 13.0 / 16.0).abs() < 4.0 * se);
    }

    #[test]
    fn single_component_posterior_mean() {
        let sim = simulate::simulate_case(2, 60, &mut RandomStream::new(5, 0)).unwrap();
        let data = sim.dataset().unwrap();
        let spec = ModelSpec::new(1, CovStructure::Equal, 1).unwrap();
        let settings = PriorSettings::with_values(1, CovStructure::Equal, 0.5, None, 0.05).unwrap();
        let prior = prior_for(&spec, &settings);
        let cfg = ChainConfig {
            iters: 6000,
            burnin: 1000,
        };
        let out = run_chain(&data, &prior, cfg, None, &mut RandomStream::new(6, 0)).unwrap();
        let mus: Vec<f64> = out.draws.iter().map(|d| d.mu[0][0]).collect();
        let (m, se) = mean_se(&mus);
        let target = conjugate_posterior_mean(&data, 0.5)[0];
        assert!((m - target).abs() < 4.0 * se, "{m} vs {target}");
        assert!(out.omega_logs.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn log_likelihoods_are_aligned_with_draws() {
        let sim = simulate::simulate_case(3, 80, &mut RandomStream::new(7, 0)).unwrap();
        let data = sim.dataset().unwrap();
        let spec = ModelSpec::new(2, CovStructure::Unequal, 1).unwrap();
        let settings = PriorSettings::defaults(1, CovStructure::Unequal, 0.05).unwrap();
        let prior = prior_for(&spec, &settings);
        let cfg = ChainConfig {
            iters: 60,
            burnin: 10,
        };
        let out = run_chain(&data, &prior, cfg, None, &mut RandomStream::new(8, 0)).unwrap();
        assert_eq!(out.len(), 50);
        assert_eq!(out.log_liks.len(), 50);
        for t in [0, 17, 49] {
            let direct = crate::model::log_likelihood(&out.draws[t], &data, &spec).unwrap();
            assert!((direct - out.log_liks[t]).abs() < 1e-9);
            let w = prior.omega_log_weight(&out.draws[t]).unwrap();
            assert_eq!(w, out.omega_logs[t]);
        }
    }

    #[test]
    fn chains_are_reproducible() {
        let sim = simulate::simulate_case(6, 50, &mut RandomStream::new(9, 0)).unwrap();
        let data = sim.dataset().unwrap();
        let spec = ModelSpec::new(2, CovStructure::Unequal, 2).unwrap();
        let settings = PriorSettings::defaults(2, CovStructure::Unequal, 0.05).unwrap();
        let prior = prior_for(&spec, &settings);
        let cfg = ChainConfig {
            iters: 40,
            burnin: 5,
        };
        let a = run_chain(&data, &prior, cfg, None, &mut RandomStream::new(10, 2)).unwrap();
        let b = run_chain(&data, &prior, cfg, None, &mut RandomStream::new(10, 2)).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.omega_logs, b.omega_logs);
        let c = run_chain(&data, &prior, cfg, None, &mut RandomStream::new(10, 3)).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn rejects_bad_config() {
        let spec = ModelSpec::new(1, CovStructure::Equal, 1).unwrap();
        let settings = PriorSettings::defaults(1, CovStructure::Equal, 0.05).unwrap();
        let prior = prior_for(&spec, &settings);
        let cfg = ChainConfig {
            iters: 5,
            burnin: 5,
        };
        assert!(run_chain(
            &Dataset::empty(1),
            &prior,
            cfg,
            None,
            &mut RandomStream::new(1, 0)
        )
        .is_err());
    }
}
