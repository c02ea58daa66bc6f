//! The model space, information criteria, posterior model probabilities and
//! the per-model pipeline that feeds them.
//!
//! Each model runs, with its own seed `base_seed + index`:
//!
//! 1. maximum likelihood EM from random restarts, giving BIC and AIC;
//! 2. the local-prior mode at the non-local dispersion `g`, then a Gibbs chain
//!    started there, giving Chib's local evidence and the `ω` average that
//!    converts it into the non-local evidence;
//! 3. the same two steps at the percentile-matched local dispersion `gᴸ`,
//!    giving the local-prior evidence reported for comparison.

use serde::Serialize;

use crate::em::{run_em, EmConfig, EmInit, EmMode, EmResult};
use crate::gibbs::{
    chib_log_marginal, nlp_log_marginal, nonempty_distribution, nonempty_distribution_weighted,
    run_chain, ChainConfig,
};
use crate::model::ParamsRecord;
use crate::prior::{elicit_g, elicit_g_local, MomPrior, NormConstEntry, DEFAULT_KAPPA_THRESHOLD};
use crate::stats::{log_sum_exp, RandomStream};
use crate::{
    CovStructure, Dataset, Error, MixtureParams, ModelSpec, NormConstTable, PriorSettings, Result,
};

/// Percentile at which the local comparison prior matches the non-local one.
pub const LOCAL_G_PERCENTILE: f64 = 0.95;

const STREAM_MLE: u64 = 1;
const STREAM_LP_MODE: u64 = 2;
const STREAM_CHAIN: u64 = 3;
const STREAM_LOCAL_MODE: u64 = 4;
const STREAM_LOCAL_CHAIN: u64 = 5;
const STREAM_NLP_MODE: u64 = 6;

/// Which covariance structures enter the model space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CovChoice {
    Equal,
    Unequal,
    Both,
}

/// `k = 1..kmax` with a shared covariance, then `k = 2..kmax` with
/// component-specific ones (`k = 1` appears once).
pub fn model_space(kmax: usize, p: usize, cov: CovChoice) -> Result<Vec<ModelSpec>> {
    if kmax == 0 {
        return Err(Error::Domain("kmax must be at least 1".into()));
    }
    let mut out = vec![ModelSpec::new(1, CovStructure::Equal, p)?];
    if cov != CovChoice::Unequal {
        for k in 2..=kmax {
            out.push(ModelSpec::new(k, CovStructure::Equal, p)?);
        }
    }
    if cov != CovChoice::Equal {
        for k in 2..=kmax {
            out.push(ModelSpec::new(k, CovStructure::Unequal, p)?);
        }
    }
    Ok(out)
}

/// Prior probabilities over a model list.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelPrior {
    weights: Vec<f64>,
}

impl ModelPrior {
    pub fn uniform(m: usize) -> Self {
        Self {
            weights: vec![1.0 / m as f64; m],
        }
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9
        {
            return Err(Error::Domain(
                "model prior weights must be a probability vector".into(),
            ));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `(BIC, AIC) = (ln L̂ − (p_k/2) ln n, ln L̂ − p_k)` for the standardized
/// data; larger is better. Add `−n · log_jacobian` to both for the original scale.
pub fn bic_aic(data: &Dataset, spec: &ModelSpec, mle: &EmResult) -> (f64, f64) {
    criteria(mle.log_lik, spec.param_count(), data.n())
}

fn criteria(log_lik: f64, p_k: usize, n: usize) -> (f64, f64) {
    let pk = p_k as f64;
    (log_lik - 0.5 * pk * (n as f64).ln(), log_lik - pk)
}

/// Normalized `exp(ln m + ln π)`. Non-finite entries get probability zero.
pub fn posterior_model_probs(log_marginals: &[f64], prior: &ModelPrior) -> Result<Vec<f64>> {
    if log_marginals.len() != prior.weights.len() {
        return Err(Error::Shape(format!(
            "{} log marginals for {} prior weights",
            log_marginals.len(),
            prior.weights.len()
        )));
    }
    let scores: Vec<f64> = log_marginals
        .iter()
        .zip(&prior.weights)
        .map(|(m, w)| {
            let s = m + w.ln();
            if s.is_finite() {
                s
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let finite: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    let total = log_sum_exp(&finite).map_err(|_| Error::DegenerateModelSpace)?;
    Ok(scores
        .iter()
        .map(|s| {
            if s.is_finite() {
                (s - total).exp()
            } else {
                0.0
            }
        })
        .collect())
}

/// Everything `select` needs besides the data.
#[derive(Clone, Debug)]
pub struct SelectionConfig {
    pub kmax: usize,
    pub cov: CovChoice,
    /// Non-local dispersion; elicited from `tail_prob` when `None`.
    pub g: Option<f64>,
    /// Dirichlet parameter; the structure default when `None`.
    pub q: Option<f64>,
    pub tail_prob: f64,
    pub chain: ChainConfig,
    pub em: EmConfig,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            kmax: 6,
            cov: CovChoice::Both,
            g: None,
            q: None,
            tail_prob: crate::prior::DEFAULT_TAIL_PROB,
            chain: ChainConfig::default(),
            em: EmConfig::default(),
            seed: 1,
        }
    }
}

/// Resolved hyperparameters echoed in the report.
#[derive(Clone, Debug, Serialize)]
pub struct SettingsEcho {
    pub g: f64,
    pub g_local: f64,
    pub local_percentile: f64,
    pub q_equal: f64,
    pub q_unequal: f64,
    pub nu: f64,
    pub s_diagonal: f64,
    pub tail_prob: f64,
    pub kappa_threshold: f64,
    pub kmax: usize,
    pub cov: CovChoice,
    pub iters: usize,
    pub burnin: usize,
    pub restarts: usize,
    pub em_max_iters: usize,
    pub em_tol: f64,
    pub seed: u64,
    pub tie_rule: &'static str,
}

/// One row of the report.
#[derive(Clone, Debug, Serialize)]
pub struct ModelRecord {
    pub k: usize,
    pub cov: CovStructure,
    pub p_k: usize,
    pub seed: u64,
    /// `None` when the model failed and was left out of the normalization.
    pub failure: Option<String>,
    /// For the standardized data.
    pub log_lik_mle: Option<f64>,
    pub bic: Option<f64>,
    pub aic: Option<f64>,
    /// Local-prior evidence at `gᴸ`.
    pub log_marginal_lp: f64,
    /// Local-prior evidence at the non-local `g`.
    pub log_marginal_lp_base: f64,
    pub log_mean_omega: f64,
    pub log_marginal_nlp: f64,
    pub se_lp: f64,
    pub se_lp_base: f64,
    pub se_omega: f64,
    pub post_prob_lp: f64,
    pub post_prob_nlp: f64,
    /// Share of sweeps with `m` non-empty components at index `m − 1`.
    pub nonempty_lp: Vec<f64>,
    pub nonempty_nlp: Vec<f64>,
}

impl ModelRecord {
    pub fn spec(&self, p: usize) -> ModelSpec {
        ModelSpec::new(self.k, self.cov, p).expect("record holds a valid spec")
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ModelChoice {
    pub k: usize,
    pub cov: CovStructure,
}

impl From<&ModelSpec> for ModelChoice {
    fn from(s: &ModelSpec) -> Self {
        Self { k: s.k, cov: s.cov }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Chosen {
    pub nlp: Option<ModelChoice>,
    pub lp: Option<ModelChoice>,
    pub bic: Option<ModelChoice>,
    pub aic: Option<ModelChoice>,
}

/// Point estimate reported for a chosen model, on the original data scale.
#[derive(Clone, Debug, Serialize)]
pub struct MapEstimate {
    pub method: String,
    pub estimator: EmMode,
    pub k: usize,
    pub cov: CovStructure,
    pub params: ParamsRecord,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormConstRecord {
    pub k: usize,
    pub p: usize,
    #[serde(flatten)]
    pub entry: NormConstEntry,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectionReport {
    pub n: usize,
    pub p: usize,
    /// Add to any log marginal to express it on the original data scale.
    pub log_jacobian: f64,
    pub settings: SettingsEcho,
    pub models: Vec<ModelRecord>,
    pub chosen: Chosen,
    pub map_estimates: Vec<MapEstimate>,
    pub norm_consts: Vec<NormConstRecord>,
}

impl SelectionReport {
    pub fn record(&self, k: usize, cov: CovStructure) -> Option<&ModelRecord> {
        let cov = if k == 1 { CovStructure::Equal } else { cov };
        self.models.iter().find(|m| m.k == k && m.cov == cov)
    }

    pub fn map_estimate(&self, method: &str) -> Option<&MapEstimate> {
        self.map_estimates.iter().find(|m| m.method == method)
    }
}

struct ModelFit {
    record: ModelRecord,
    mle: Option<MixtureParams>,
    local_mode: Option<MixtureParams>,
}

fn settings_for(spec: &ModelSpec, g: f64, cfg: &SelectionConfig) -> Result<PriorSettings> {
    PriorSettings::with_values(spec.p, spec.cov, g, cfg.q, cfg.tail_prob)
}

fn failed_record(spec: &ModelSpec, seed: u64, msg: String) -> ModelRecord {
    ModelRecord {
        k: spec.k,
        cov: spec.cov,
        p_k: spec.param_count(),
        seed,
        failure: Some(msg),
        log_lik_mle: None,
        bic: None,
        aic: None,
        log_marginal_lp: f64::NAN,
        log_marginal_lp_base: f64::NAN,
        log_mean_omega: f64::NAN,
        log_marginal_nlp: f64::NAN,
        se_lp: f64::NAN,
        se_lp_base: f64::NAN,
        se_omega: f64::NAN,
        post_prob_lp: 0.0,
        post_prob_nlp: 0.0,
        nonempty_lp: Vec::new(),
        nonempty_nlp: Vec::new(),
    }
}

fn fit_model(
    data: &Dataset,
    spec: &ModelSpec,
    seed: u64,
    g: f64,
    g_local: f64,
    table: &NormConstTable,
    cfg: &SelectionConfig,
) -> ModelFit {
    let root = RandomStream::new(seed, 0);
    let restarts = EmInit::RandomRestarts(cfg.em.mle_restarts);
    let mle = run_em(
        data,
        spec,
        None,
        EmMode::Mle,
        &restarts,
        &cfg.em,
        &mut root.derive(STREAM_MLE),
    );
    let mle = match mle {
        Ok(m) => Some(m),
        Err(e) => {
            log::warn!(
                "{}: maximum likelihood failed, BIC and AIC unavailable: {e}",
                spec.label()
            );
            None
        }
    };
    let start = mle
        .as_ref()
        .map_or(restarts.clone(), |m| EmInit::Given(m.params.clone()));

    let evidence = |g: f64, mode_stream: u64, chain_stream: u64| -> Result<_> {
        let prior = MomPrior::new(&settings_for(spec, g, cfg)?, spec, table)?;
        let mode = run_em(
            data,
            spec,
            Some(&prior),
            EmMode::LpMap,
            &start,
            &cfg.em,
            &mut root.derive(mode_stream),
        )?;
        let chain = run_chain(
            data,
            &prior,
            cfg.chain,
            Some(&mode.params),
            &mut root.derive(chain_stream),
        )?;
        let chib = chib_log_marginal(&chain, &mode.params, data, &prior)?;
        Ok((nlp_log_marginal(&chain, &chib), chain, mode.params))
    };
    let run = || -> Result<(ModelRecord, MixtureParams)> {
        let (base, chain, _) = evidence(g, STREAM_LP_MODE, STREAM_CHAIN)?;
        let (local, local_chain, local_mode) =
            evidence(g_local, STREAM_LOCAL_MODE, STREAM_LOCAL_CHAIN)?;
        let mut rec = failed_record(spec, seed, String::new());
        rec.failure = None;
        if let Some(m) = &mle {
            let (bic, aic) = bic_aic(data, spec, m);
            rec.log_lik_mle = Some(m.log_lik);
            rec.bic = Some(bic);
            rec.aic = Some(aic);
        }
        rec.log_marginal_lp = local.log_marginal_lp;
        rec.se_lp = local.mc_std_err_lp;
        rec.log_marginal_lp_base = base.log_marginal_lp;
        rec.se_lp_base = base.mc_std_err_lp;
        rec.log_mean_omega = base.log_mean_omega;
        rec.log_marginal_nlp = base.log_marginal_nlp;
        rec.se_omega = base.mc_std_err_omega;
        rec.nonempty_lp = nonempty_distribution(&local_chain);
        rec.nonempty_nlp = nonempty_distribution_weighted(&chain);
        Ok((rec, local_mode))
    };
    match run() {
        Ok((record, local_mode)) => ModelFit {
            record,
            mle: mle.map(|m| m.params),
            local_mode: Some(local_mode),
        },
        Err(e) => {
            log::warn!(
                "{}: excluded from the model probabilities: {e}",
                spec.label()
            );
            let mut record = failed_record(spec, seed, e.to_string());
            if let Some(m) = &mle {
                let (bic, aic) = bic_aic(data, spec, m);
                record.log_lik_mle = Some(m.log_lik);
                record.bic = Some(bic);
                record.aic = Some(aic);
            }
            ModelFit {
                record,
                mle: mle.map(|m| m.params),
                local_mode: None,
            }
        }
    }
}

/// Index of the best score; exact ties go to the smaller `k`, then to the
/// shared covariance. `None` when no score is finite.
fn argmax_parsimonious(specs: &[ModelSpec], scores: &[Option<f64>]) -> Option<usize> {
    let mut order: Vec<usize> = (0..specs.len()).collect();
    order.sort_by_key(|&i| (specs[i].k, specs[i].cov == CovStructure::Unequal));
    let mut best: Option<(usize, f64)> = None;
    for i in order {
        if let Some(s) = scores[i].filter(|s| s.is_finite()) {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Resolves `g` and `gᴸ` for dimension `p`.
pub fn resolve_dispersions(p: usize, cfg: &SelectionConfig) -> Result<(f64, f64)> {
    let g = match cfg.g {
        Some(g) => g,
        None => elicit_g(p, cfg.tail_prob, DEFAULT_KAPPA_THRESHOLD)?,
    };
    Ok((g, elicit_g_local(p, g, LOCAL_G_PERCENTILE)?))
}

/// Fits every model in the space and assembles the report. `data` should be
/// standardized.
pub fn select(
    data: &Dataset,
    cfg: &SelectionConfig,
    model_prior: Option<&ModelPrior>,
) -> Result<SelectionReport> {
    cfg.chain.validate()?;
    let p = data.p();
    if data.n() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 observations, got {}",
            data.n()
        )));
    }
    if data.has_constant_column() {
        log::warn!("data contain a constant column; it carries no clustering information");
    }
    let specs = model_space(cfg.kmax, p, cfg.cov)?;
    let uniform = ModelPrior::uniform(specs.len());
    let model_prior = model_prior.unwrap_or(&uniform);
    if model_prior.weights.len() != specs.len() {
        return Err(Error::Shape(format!(
            "model prior has {} weights for {} models",
            model_prior.weights.len(),
            specs.len()
        )));
    }
    let (g, g_local) = resolve_dispersions(p, cfg)?;
    let mut advisories: Vec<String> = Vec::new();
    for spec in &specs {
        for msg in settings_for(spec, g, cfg)?.advisories(p) {
            if !advisories.contains(&msg) {
                log::warn!("{msg}");
                advisories.push(msg);
            }
        }
    }
    let table = NormConstTable::build(cfg.kmax, p, &mut RandomStream::new(cfg.seed, u64::MAX))?;

    let fits: Vec<ModelFit> = specs
        .iter()
        .enumerate()
        .map(|(idx, spec)| {
            log::info!("fitting {}", spec.label());
            fit_model(
                data,
                spec,
                cfg.seed.wrapping_add(idx as u64),
                g,
                g_local,
                &table,
                cfg,
            )
        })
        .collect();
    let mut models: Vec<ModelRecord> = fits.iter().map(|f| f.record.clone()).collect();

    let marginals = |f: fn(&ModelRecord) -> f64| -> Vec<f64> {
        models
            .iter()
            .map(|m| if m.is_ok() { f(m) } else { f64::NEG_INFINITY })
            .collect()
    };
    let lp = posterior_model_probs(&marginals(|m| m.log_marginal_lp), model_prior)?;
    let nlp = posterior_model_probs(&marginals(|m| m.log_marginal_nlp), model_prior);
    let nlp = match nlp {
        Ok(v) => v,
        Err(Error::DegenerateModelSpace) => {
            log::warn!("every non-local evidence is zero");
            vec![0.0; specs.len()]
        }
        Err(e) => return Err(e),
    };
    for (m, (a, b)) in models.iter_mut().zip(lp.iter().zip(&nlp)) {
        m.post_prob_lp = *a;
        m.post_prob_nlp = *b;
    }

    let pick = |scores: Vec<Option<f64>>| argmax_parsimonious(&specs, &scores);
    let i_nlp = pick(nlp.iter().map(|v| Some(*v).filter(|v| *v > 0.0)).collect());
    let i_lp = pick(lp.iter().map(|v| Some(*v).filter(|v| *v > 0.0)).collect());
    let i_bic = pick(models.iter().map(|m| m.bic).collect());
    let i_aic = pick(models.iter().map(|m| m.aic).collect());
    let chosen = Chosen {
        nlp: i_nlp.map(|i| (&specs[i]).into()),
        lp: i_lp.map(|i| (&specs[i]).into()),
        bic: i_bic.map(|i| (&specs[i]).into()),
        aic: i_aic.map(|i| (&specs[i]).into()),
    };

    let mut map_estimates = Vec::new();
    let mut push = |method: &str, estimator: EmMode, i: usize, params: &MixtureParams| {
        map_estimates.push(MapEstimate {
            method: method.to_string(),
            estimator,
            k: specs[i].k,
            cov: specs[i].cov,
            params: params.unstandardize(data).to_record(),
        });
    };
    if let Some(i) = i_nlp {
        let spec = &specs[i];
        let root = RandomStream::new(cfg.seed.wrapping_add(i as u64), 0);
        let prior = MomPrior::new(&settings_for(spec, g, cfg)?, spec, &table)?;
        let init = match &fits[i].mle {
            Some(m) => EmInit::Given(m.clone()),
            None => EmInit::RandomRestarts(cfg.em.mle_restarts),
        };
        match run_em(
            data,
            spec,
            Some(&prior),
            EmMode::NlpMap,
            &init,
            &cfg.em,
            &mut root.derive(STREAM_NLP_MODE),
        ) {
            Ok(res) => push("nlp", EmMode::NlpMap, i, &res.params),
            Err(e) => log::warn!("{}: non-local mode failed: {e}", spec.label()),
        }
    }
    if let Some(i) = i_lp {
        if let Some(m) = &fits[i].local_mode {
            push("lp", EmMode::LpMap, i, m);
        }
    }
    for (method, idx) in [("bic", i_bic), ("aic", i_aic)] {
        if let Some(i) = idx {
            if let Some(m) = &fits[i].mle {
                push(method, EmMode::Mle, i, m);
            }
        }
    }

    let norm_consts = table
        .entries()
        .map(|((k, p), entry)| NormConstRecord { k, p, entry })
        .collect();
    let s_diagonal = 1.0 / (p as f64 + 4.0);
    Ok(SelectionReport {
        n: data.n(),
        p,
        log_jacobian: data.log_jacobian(),
        settings: SettingsEcho {
            g,
            g_local,
            local_percentile: LOCAL_G_PERCENTILE,
            q_equal: cfg
                .q
                .unwrap_or_else(|| PriorSettings::default_q(p, CovStructure::Equal)),
            q_unequal: cfg
                .q
                .unwrap_or_else(|| PriorSettings::default_q(p, CovStructure::Unequal)),
            nu: p as f64 + 4.0,
            s_diagonal,
            tail_prob: cfg.tail_prob,
            kappa_threshold: DEFAULT_KAPPA_THRESHOLD,
            kmax: cfg.kmax,
            cov: cfg.cov,
            iters: cfg.chain.iters,
            burnin: cfg.chain.burnin,
            restarts: cfg.em.mle_restarts,
            em_max_iters: cfg.em.max_iters,
            em_tol: cfg.em.tol,
            seed: cfg.seed,
            tie_rule: "smaller k, then shared covariance",
        },
        models: std::mem::take(&mut models),
        chosen,
        map_estimates,
        norm_consts,
    })
}
