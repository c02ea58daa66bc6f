//! The MOM-IW-Dirichlet non-local prior, its local Normal-IW-Dirichlet
//! counterpart and the importance weight linking the two.
//!
//! For `k` components with `A⁻¹ = (1/k) Σ_j Σ_j⁻¹` and
//! `d_ij = (μ_i − μ_j)' A⁻¹ (μ_i − μ_j)`, the non-local prior is
//!
//! ```text
//! p(ϑ) = (1/C_k) Π_{i<j} d_ij / g · Π_j N(μ_j | 0, g A) IW(Σ_j | ν, S) · Dir(η | q)
//! ```
//!
//! and the local one replaces the penalized means by `N(μ_j | 0, g Σ_j)`.

mod elicit;
mod normconst;

pub use elicit::{elicit_g, elicit_g_local, G_BRACKET};
pub use normconst::{
    norm_const_closed_p1, norm_const_closed_p1_exact, norm_const_mc, norm_const_recursive,
    norm_const_recursive_exact, top_invariant, NormConstEntry, NormConstMethod, NormConstTable,
    FALLBACK_MC_DRAWS, MAX_RECURSION_K,
};

use serde::Serialize;

use crate::stats::linalg::{cholesky, log_det_from_chol, quad_form, spd_inverse};
use crate::stats::{Dirichlet, InvWishart};
use crate::{CovStructure, Error, Matrix, MixtureParams, ModelSpec, Result, Vector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Hyperparameters of the prior for one covariance structure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriorSettings {
    pub g: f64,
    pub q: f64,
    pub nu: f64,
    #[serde(serialize_with = "crate::model::serialize_matrix")]
    pub s: Matrix,
    pub kappa_threshold: f64,
    pub tail_prob: f64,
}

/// Separation below which two components are considered to overlap.
pub const DEFAULT_KAPPA_THRESHOLD: f64 = 4.0;
pub const DEFAULT_TAIL_PROB: f64 = 0.05;

impl PriorSettings {
    /// Defaults for dimension `p`: `g` elicited from `tail_prob`, `q` from
    /// the structure, `ν = p + 4` and `S = I/(p + 4)`.
    pub fn defaults(p: usize, cov: CovStructure, tail_prob: f64) -> Result<Self> {
        let g = elicit_g(p, tail_prob, DEFAULT_KAPPA_THRESHOLD)?;
        Self::with_values(p, cov, g, None, tail_prob)
    }

    /// Fixed `g`, optional `q` (structure default when `None`).
    pub fn with_values(
        p: usize,
        cov: CovStructure,
        g: f64,
        q: Option<f64>,
        tail_prob: f64,
    ) -> Result<Self> {
        let nu = p as f64 + 4.0;
        let s = Matrix::identity(p, p) / nu;
        let out = Self {
            g,
            q: q.unwrap_or_else(|| Self::default_q(p, cov)),
            nu,
            s,
            kappa_threshold: DEFAULT_KAPPA_THRESHOLD,
            tail_prob,
        };
        out.validate(p)?;
        Ok(out)
    }

    /// One more than the number of free parameters a component adds:
    /// `p + 1` with a shared covariance, `p + p(p+1)/2 + 1` otherwise.
    pub fn default_q(p: usize, cov: CovStructure) -> f64 {
        match cov {
            CovStructure::Equal => p as f64 + 1.0,
            CovStructure::Unequal => (p + p * (p + 1) / 2 + 1) as f64,
        }
    }

    /// A copy with a different dispersion.
    pub fn with_g(&self, g: f64) -> Self {
        Self { g, ..self.clone() }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.g > 0.0) || !self.g.is_finite() {
            return Err(Error::Domain(format!("g must be positive, got {}", self.g)));
        }
        if !(self.q > 1.0) || !self.q.is_finite() {
            return Err(Error::Domain(format!("q must exceed 1, got {}", self.q)));
        }
        if self.s.shape() != (p, p) {
            return Err(Error::Shape(format!("S must be {p}x{p}")));
        }
        if !(self.nu > p as f64 + 1.0) {
            return Err(Error::Domain(format!(
                "nu must exceed p + 1, got {}",
                self.nu
            )));
        }
        cholesky(&self.s)?;
        Ok(())
    }

    /// Legal but discouraged hyperparameter values, one message each.
    pub fn advisories(&self, p: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.nu < p as f64 + 4.0 {
            out.push(format!(
                "nu = {} is below p + 4; prior moments of the penalty may be unbounded",
                self.nu
            ));
        }
        if !(2.0..=4.0).contains(&self.q) {
            out.push(format!(
                "q = {} lies outside [2, 4], where results are least sensitive to it",
                self.q
            ));
        }
        out
    }

    /// `Ψ = S⁻¹`.
    pub fn psi(&self) -> Matrix {
        spd_inverse(&self.s)
            .map(|(m, _)| m)
            .expect("S validated as SPD")
    }
}

/// Inverses and log-determinants of the covariance matrices, plus `A⁻¹`.
#[derive(Clone, Debug)]
pub struct CovTerms {
    pub inv: Vec<Matrix>,
    pub log_det: Vec<f64>,
    pub a_inv: Matrix,
    pub log_det_a_inv: f64,
}

impl CovTerms {
    pub fn new(params: &MixtureParams) -> Result<Self> {
        let k = params.k();
        let mut inv = Vec::with_capacity(params.sigma.len());
        let mut log_det = Vec::with_capacity(params.sigma.len());
        for s in &params.sigma {
            let (i, ld) = spd_inverse(s)?;
            inv.push(i);
            log_det.push(ld);
        }
        let (a_inv, log_det_a_inv) = if inv.len() == 1 {
            (inv[0].clone(), -log_det[0])
        } else {
            let a = inv
                .iter()
                .fold(Matrix::zeros(params.p(), params.p()), |acc, m| acc + m)
                / k as f64;
            let c = cholesky(&a)?;
            let ld = log_det_from_chol(&c);
            (a, ld)
        };
        Ok(Self {
            inv,
            log_det,
            a_inv,
            log_det_a_inv,
        })
    }

    pub fn inv_j(&self, j: usize) -> &Matrix {
        if self.inv.len() == 1 {
            &self.inv[0]
        } else {
            &self.inv[j]
        }
    }

    pub fn log_det_j(&self, j: usize) -> f64 {
        if self.log_det.len() == 1 {
            self.log_det[0]
        } else {
            self.log_det[j]
        }
    }
}

/// `d_ij` for all pairs `i < j`, in lexicographic order.
pub fn pairwise_separations(mu: &[Vector], a_inv: &Matrix) -> Vec<f64> {
    let k = mu.len();
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            out.push(quad_form(a_inv, &(&mu[i] - &mu[j])));
        }
    }
    out
}

/// The prior of one model, with its normalizing constant resolved.
#[derive(Clone, Debug)]
pub struct MomPrior {
    settings: PriorSettings,
    spec: ModelSpec,
    log_ck: f64,
    iw: InvWishart,
    dir: Option<Dirichlet>,
}

impl MomPrior {
    pub fn new(settings: &PriorSettings, spec: &ModelSpec, table: &NormConstTable) -> Result<Self> {
        settings.validate(spec.p)?;
        let log_ck = table.log_value(spec.k, spec.p)?;
        Self::with_log_ck(settings, spec, log_ck)
    }

    pub fn with_log_ck(settings: &PriorSettings, spec: &ModelSpec, log_ck: f64) -> Result<Self> {
        let iw = InvWishart::new(settings.nu, &settings.s)?;
        let dir = if spec.k >= 2 {
            Some(Dirichlet::new(vec![settings.q; spec.k])?)
        } else {
            None
        };
        Ok(Self {
            settings: settings.clone(),
            spec: *spec,
            log_ck,
            iw,
            dir,
        })
    }

    pub fn settings(&self) -> &PriorSettings {
        &self.settings
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn log_ck(&self) -> f64 {
        self.log_ck
    }

    /// The covariance prior shared by every component.
    pub fn inv_wishart(&self) -> &InvWishart {
        &self.iw
    }

    /// `ln[(1/C_k) Π_{i<j} d_ij / g]`; `-inf` when two means coincide.
    pub fn log_penalty_with(&self, params: &MixtureParams, cov: &CovTerms) -> f64 {
        let g = self.settings.g;
        let mut out = -self.log_ck;
        for d in pairwise_separations(&params.mu, &cov.a_inv) {
            out += (d / g).ln();
        }
        out
    }

    pub fn log_penalty(&self, params: &MixtureParams) -> Result<f64> {
        params.check_spec(&self.spec)?;
        Ok(self.log_penalty_with(params, &CovTerms::new(params)?))
    }

    pub fn penalty_d_theta(&self, params: &MixtureParams) -> Result<f64> {
        self.log_penalty(params).map(f64::exp)
    }

    fn log_normal_a(&self, mu: &Vector, cov: &CovTerms) -> f64 {
        let (p, g) = (mu.len() as f64, self.settings.g);
        -0.5 * p * (LN_2PI + g.ln()) + 0.5 * cov.log_det_a_inv - 0.5 * quad_form(&cov.a_inv, mu) / g
    }

    fn log_normal_sigma(&self, j: usize, mu: &Vector, cov: &CovTerms) -> f64 {
        let (p, g) = (mu.len() as f64, self.settings.g);
        -0.5 * p * (LN_2PI + g.ln())
            - 0.5 * cov.log_det_j(j)
            - 0.5 * quad_form(cov.inv_j(j), mu) / g
    }

    fn log_iw_and_dirichlet(&self, params: &MixtureParams, cov: &CovTerms) -> f64 {
        let iw: f64 = (0..params.sigma.len())
            .map(|c| self.iw.ln_pdf_parts(cov.log_det[c], &cov.inv[c]))
            .sum();
        let dir = self
            .dir
            .as_ref()
            .map_or(0.0, |d| d.ln_pdf_unchecked(&params.eta));
        iw + dir
    }

    pub fn nlp_log_prior_with(&self, params: &MixtureParams, cov: &CovTerms) -> f64 {
        let pen = self.log_penalty_with(params, cov);
        if pen == f64::NEG_INFINITY {
            return pen;
        }
        let normals: f64 = params.mu.iter().map(|m| self.log_normal_a(m, cov)).sum();
        pen + normals + self.log_iw_and_dirichlet(params, cov)
    }

    pub fn lp_log_prior_with(&self, params: &MixtureParams, cov: &CovTerms) -> f64 {
        let normals: f64 = (0..params.k())
            .map(|j| self.log_normal_sigma(j, &params.mu[j], cov))
            .sum();
        normals + self.log_iw_and_dirichlet(params, cov)
    }

    /// `ln ω = ln p_NLP(ϑ) − ln p_LP(ϑ)` at the same hyperparameters.
    pub fn omega_log_weight_with(&self, params: &MixtureParams, cov: &CovTerms) -> f64 {
        let pen = self.log_penalty_with(params, cov);
        if pen == f64::NEG_INFINITY || params.sigma.len() == 1 {
            return pen;
        }
        let diff: f64 = (0..params.k())
            .map(|j| {
                self.log_normal_a(&params.mu[j], cov) - self.log_normal_sigma(j, &params.mu[j], cov)
            })
            .sum();
        pen + diff
    }

    pub fn nlp_log_prior(&self, params: &MixtureParams) -> Result<f64> {
        params.check_spec(&self.spec)?;
        Ok(self.nlp_log_prior_with(params, &CovTerms::new(params)?))
    }

    pub fn lp_log_prior(&self, params: &MixtureParams) -> Result<f64> {
        params.check_spec(&self.spec)?;
        Ok(self.lp_log_prior_with(params, &CovTerms::new(params)?))
    }

    pub fn omega_log_weight(&self, params: &MixtureParams) -> Result<f64> {
        params.check_spec(&self.spec)?;
        Ok(self.omega_log_weight_with(params, &CovTerms::new(params)?))
    }
}

/// `(1/C_k) Π_{i<j} d_ij / g`.
pub fn penalty_d_theta(
    params: &MixtureParams,
    settings: &PriorSettings,
    spec: &ModelSpec,
    table: &NormConstTable,
) -> Result<f64> {
    MomPrior::new(settings, spec, table)?.penalty_d_theta(params)
}

pub fn nlp_log_prior(
    params: &MixtureParams,
    settings: &PriorSettings,
    spec: &ModelSpec,
    table: &NormConstTable,
) -> Result<f64> {
    MomPrior::new(settings, spec, table)?.nlp_log_prior(params)
}

pub fn lp_log_prior(
    params: &MixtureParams,
    settings: &PriorSettings,
    spec: &ModelSpec,
    table: &NormConstTable,
) -> Result<f64> {
    MomPrior::new(settings, spec, table)?.lp_log_prior(params)
}

pub fn omega_log_weight(
    params: &MixtureParams,
    settings: &PriorSettings,
    spec: &ModelSpec,
    table: &NormConstTable,
) -> Result<f64> {
    MomPrior::new(settings, spec, table)?.omega_log_weight(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ln_gamma, ln_mvgamma, RandomStream};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn table(kmax: usize, p: usize) -> NormConstTable {
        NormConstTable::build(kmax, p, &mut RandomStream::new(0, 0)).unwrap()
    }

    fn settings(p: usize, cov: CovStructure, g: f64) -> PriorSettings {
        PriorSettings::with_values(p, cov, g, None, 0.05).unwrap()
    }

    fn params_1d(eta: &[f64], mu: &[f64], var: &[f64]) -> MixtureParams {
        MixtureParams::new(
            eta.to_vec(),
            mu.iter().map(|m| Vector::from_element(1, *m)).collect(),
            var.iter().map(|v| Matrix::from_element(1, 1, *v)).collect(),
        )
        .unwrap()
    }

    fn random_params(rng: &mut RandomStream, k: usize, p: usize, equal: bool) -> MixtureParams {
        let mut eta: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.1).collect();
        let t: f64 = eta.iter().sum();
        eta.iter_mut().for_each(|e| *e /= t);
        let mu = (0..k)
            .map(|_| Vector::from_fn(p, |_, _| rng.random::<f64>() * 4.0 - 2.0))
            .collect();
        let sigma = (0..if equal { 1 } else { k })
            .map(|_| {
                let a = Matrix::from_fn(p, p, |_, _| rng.random::<f64>() - 0.5);
                &a * a.transpose() + Matrix::identity(p, p) * 0.3
            })
            .collect();
        MixtureParams::new(eta, mu, sigma).unwrap()
    }

    #[test]
    fn defaults() {
        let s = PriorSettings::defaults(1, CovStructure::Equal, 0.05).unwrap();
        assert_abs_diff_eq!(s.g, 5.684_299_931_839_039, epsilon = 1e-7);
        assert_eq!(s.q, 2.0);
        assert_eq!(PriorSettings::default_q(1, CovStructure::Unequal), 3.0);
        let s = PriorSettings::defaults(2, CovStructure::Unequal, 0.05).unwrap();
        assert_eq!((s.nu, s.q), (6.0, 6.0));
        assert_abs_diff_eq!(s.s, Matrix::identity(2, 2) / 6.0);
        assert!(PriorSettings::with_values(1, CovStructure::Equal, 1.0, Some(1.0), 0.05).is_err());
    }

    #[test]
    fn penalty_examples() {
        let t = table(2, 1);
        let spec = ModelSpec::new(2, CovStructure::Equal, 1).unwrap();
        let st = settings(1, CovStructure::Equal, 3.0);
        let at_zero = params_1d(&[0.5, 0.5], &[0.0, 0.0], &[1.0]);
        assert_eq!(penalty_d_theta(&at_zero, &st, &spec, &t).unwrap(), 0.0);
        // (μ1 − μ2)² = 2g
        let d = (2.0f64 * 3.0).sqrt();
        let p = params_1d(&[0.5, 0.5], &[0.0, d], &[1.0]);
        assert_abs_diff_eq!(
            penalty_d_theta(&p, &st, &spec, &t).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // k = 1 is the empty product
        let spec1 = ModelSpec::new(1, CovStructure::Equal, 1).unwrap();
        let one = params_1d(&[1.0], &[0.7], &[2.0]);
        assert_eq!(penalty_d_theta(&one, &st, &spec1, &t).unwrap(), 1.0);
    }

    #[test]
    fn penalty_matches_naive_loops() {
        let mut rng = RandomStream::new(7, 0);
        let t = table(3, 2);
        let spec = ModelSpec::new(3, CovStructure::Unequal, 2).unwrap();
        let st = settings(2, CovStructure::Unequal, 2.3);
        let params = random_params(&mut rng, 3, 2, false);
        let mut a_inv = Matrix::zeros(2, 2);
        for s in &params.sigma {
            a_inv += s.clone().try_inverse().unwrap() / 3.0;
        }
        let mut prod = 1.0;
        for i in 0..3 {
            for j in i + 1..3 {
                let d = &params.mu[i] - &params.mu[j];
                prod *= (d.transpose() * &a_inv * &d)[0] / st.g;
            }
        }
        let c3 = norm_const_recursive(3, 2).unwrap();
        let v = penalty_d_theta(&params, &st, &spec, &t).unwrap();
        assert_abs_diff_eq!(v, prod / c3, epsilon = 1e-12 * (prod / c3).max(1.0));
    }

    #[test]
    fn k1_prior_has_only_normal_and_iw_terms() {
        let t = table(1, 1);
        let spec = ModelSpec::new(1, CovStructure::Equal, 1).unwrap();
        let st = settings(1, CovStructure::Equal, 4.0);
        let p = params_1d(&[1.0], &[0.3], &[0.8]);
        let normal = -0.5 * (LN_2PI + (4.0f64 * 0.8).ln()) - 0.09 / (2.0 * 3.2);
        let iw = InvWishart::new(5.0, &Matrix::from_element(1, 1, 0.2)).unwrap();
        let expect = normal + iw.ln_pdf(&Matrix::from_element(1, 1, 0.8)).unwrap();
        assert_abs_diff_eq!(
            nlp_log_prior(&p, &st, &spec, &t).unwrap(),
            expect,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            lp_log_prior(&p, &st, &spec, &t).unwrap(),
            expect,
            epsilon = 1e-12
        );
        assert_eq!(omega_log_weight(&p, &st, &spec, &t).unwrap(), 0.0);
    }

    /// Term-by-term evaluation for `k = 2`, `p = 1`, unequal variances.
    #[test]
    fn termwise_oracle_k2_p1() {
        let t = table(2, 1);
        let spec = ModelSpec::new(2, CovStructure::Unequal, 1).unwrap();
        let st = settings(1, CovStructure::Unequal, 5.0);
        let (m1, m2, v1, v2, e1) = (-0.8f64, 1.4f64, 0.6f64, 1.7f64, 0.35f64);
        let p = params_1d(&[e1, 1.0 - e1], &[m1, m2], &[v1, v2]);
        let g = 5.0;
        let a_inv = 0.5 * (1.0 / v1 + 1.0 / v2);
        let ln_norm = |x: f64, var: f64| -0.5 * (LN_2PI + var.ln()) - x * x / (2.0 * var);
        // IW(ν=5, S=1/5) on a scalar is inverse Gamma(2.5, 2.5)
        let ln_ig = |x: f64| 2.5 * 2.5f64.ln() - ln_gamma(2.5) - 3.5 * x.ln() - 2.5 / x;
        let ln_dir = ln_gamma(6.0) - 2.0 * ln_gamma(3.0) + 2.0 * (e1.ln() + (1.0 - e1).ln());
        let pen = ((m1 - m2).powi(2) * a_inv / g).ln() - 2f64.ln();
        let nlp =
            pen + ln_norm(m1, g / a_inv) + ln_norm(m2, g / a_inv) + ln_ig(v1) + ln_ig(v2) + ln_dir;
        let lp = ln_norm(m1, g * v1) + ln_norm(m2, g * v2) + ln_ig(v1) + ln_ig(v2) + ln_dir;
        assert_abs_diff_eq!(
            nlp_log_prior(&p, &st, &spec, &t).unwrap(),
            nlp,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            lp_log_prior(&p, &st, &spec, &t).unwrap(),
            lp,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            omega_log_weight(&p, &st, &spec, &t).unwrap(),
            nlp - lp,
            epsilon = 1e-10
        );
    }

    #[test]
    fn coincident_means_vanish() {
        let t = table(2, 1);
        let spec = ModelSpec::new(2, CovStructure::Equal, 1).unwrap();
        let st = settings(1, CovStructure::Equal, 5.0);
        let p = params_1d(&[0.5, 0.5], &[1.0, 1.0], &[1.0]);
        assert_eq!(
            nlp_log_prior(&p, &st, &spec, &t).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(
            omega_log_weight(&p, &st, &spec, &t).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(lp_log_prior(&p, &st, &spec, &t).unwrap().is_finite());
    }

    #[test]
    fn inverse_wishart_term_uses_multivariate_gamma() {
        let st = settings(2, CovStructure::Equal, 1.0);
        let iw = InvWishart::new(st.nu, &st.s).unwrap();
        let sig = Matrix::identity(2, 2);
        // (ν/2) ln|Ψ| − νp/2 ln 2 − ln Γ_2(ν/2) − tr(Ψ)/2 with Ψ = 6I
        let expect = 3.0 * (36f64).ln() - 6.0 * 2f64.ln() - ln_mvgamma(2, 3.0) - 6.0;
        assert_abs_diff_eq!(iw.ln_pdf(&sig).unwrap(), expect, epsilon = 1e-12);
    }

    /// The penalty integrates to one against its Normal base measure.
    #[test]
    fn penalty_is_normalized_under_prior_draws() {
        let (k, p) = (3, 2);
        let t = table(k, p);
        let spec = ModelSpec::new(k, CovStructure::Equal, p).unwrap();
        let st = settings(p, CovStructure::Equal, 2.0);
        let prior = MomPrior::new(&st, &spec, &t).unwrap();
        let sigma = Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let base = crate::stats::Mvn::new(Vector::zeros(p), &sigma * st.g).unwrap();
        let mut rng = RandomStream::new(8, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                let mu = (0..k).map(|_| base.sample(&mut rng)).collect();
                let params =
                    MixtureParams::new(vec![1.0 / 3.0; 3], mu, vec![sigma.clone()]).unwrap();
                prior.penalty_d_theta(&params).unwrap()
            })
            .collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let se =
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
        assert!((m - 1.0).abs() < 3.0 * se, "mean {m} se {se}");
    }

    proptest! {
        #[test]
        fn omega_is_prior_ratio(seed in 0u64..500, equal in any::<bool>()) {
            let mut rng = RandomStream::new(seed, 3);
            let t = table(3, 2);
            let cov = if equal { CovStructure::Equal } else { CovStructure::Unequal };
            let spec = ModelSpec::new(3, cov, 2).unwrap();
            let st = settings(2, cov, 1.7);
            let prior = MomPrior::new(&st, &spec, &t).unwrap();
            let params = random_params(&mut rng, 3, 2, equal);
            let w = prior.omega_log_weight(&params).unwrap();
            let r = prior.nlp_log_prior(&params).unwrap() - prior.lp_log_prior(&params).unwrap();
            prop_assert!((w - r).abs() < 1e-10);
            if equal {
                prop_assert_eq!(w, prior.log_penalty(&params).unwrap());
            }
        }

        #[test]
        fn penalty_is_label_and_scale_invariant(seed in 0u64..500, c in 0.2f64..5.0) {
            let mut rng = RandomStream::new(seed, 4);
            let t = table(3, 2);
            let spec = ModelSpec::new(3, CovStructure::Unequal, 2).unwrap();
            let st = settings(2, CovStructure::Unequal, 1.3);
            let prior = MomPrior::new(&st, &spec, &t).unwrap();
            let params = random_params(&mut rng, 3, 2, false);
            let a = prior.log_penalty(&params).unwrap();
            let b = prior.log_penalty(&params.permute(&[1, 2, 0])).unwrap();
            let scaled = MixtureParams {
                eta: params.eta.clone(),
                mu: params.mu.iter().map(|m| m * c).collect(),
                sigma: params.sigma.iter().map(|s| s * (c * c)).collect(),
            };
            let d = prior.log_penalty(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!((a - d).abs() < 1e-9);
        }
    }
}
