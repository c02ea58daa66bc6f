//! Datasets, model specifications, mixture parameters and the mixture
//! likelihood.

use serde::{Deserialize, Serialize};

use crate::stats::{log_sum_exp, GaussianKernel};
use crate::{Error, Matrix, Result, Vector};

/// Whether all components share one covariance matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovStructure {
    Equal,
    Unequal,
}

impl CovStructure {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Equal => "equal",
            Self::Unequal => "unequal",
        }
    }
}

impl std::fmt::Display for CovStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A candidate model. At `k = 1` both structures are the same model and the
/// constructor maps it to [`CovStructure::Equal`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub k: usize,
    pub cov: CovStructure,
    pub p: usize,
}

impl ModelSpec {
    pub fn new(k: usize, cov: CovStructure, p: usize) -> Result<Self> {
        if k == 0 || p == 0 {
            return Err(Error::Domain(format!(
                "need k >= 1 and p >= 1, got k = {k}, p = {p}"
            )));
        }
        if k > u16::MAX as usize {
            return Err(Error::Domain(format!("k = {k} is too large")));
        }
        let cov = if k == 1 { CovStructure::Equal } else { cov };
        Ok(Self { k, cov, p })
    }

    /// Number of distinct covariance matrices.
    pub fn n_cov(&self) -> usize {
        match self.cov {
            CovStructure::Equal => 1,
            CovStructure::Unequal => self.k,
        }
    }

    /// Free parameters: means, covariance entries and weights.
    pub fn param_count(&self) -> usize {
        let (k, p) = (self.k, self.p);
        k * p + self.n_cov() * p * (p + 1) / 2 + (k - 1)
    }

    pub fn label(&self) -> String {
        format!("k={} {}", self.k, self.cov)
    }
}

pub fn param_count(spec: &ModelSpec) -> usize {
    spec.param_count()
}

/// An `n × p` data matrix on the standardized scale together with the
/// per-column location and scale that produced it.
#[derive(Clone, Debug)]
pub struct Dataset {
    y: Matrix,
    rows: Vec<f64>,
    center: Vector,
    scale: Vector,
    constant: Vec<bool>,
}

impl Dataset {
    /// Centers each column by its mean and divides by its sample standard
    /// deviation (`n - 1` denominator). Constant columns keep scale 1 and are
    /// flagged.
    pub fn standardize(raw: &Matrix) -> Result<Self> {
        let (n, p) = raw.shape();
        if n < 2 || p == 0 {
            return Err(Error::Domain(format!(
                "standardization needs n >= 2 and p >= 1, got {n}x{p}"
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("data contain non-finite values".into()));
        }
        let mut center = Vector::zeros(p);
        let mut scale = Vector::from_element(p, 1.0);
        let mut constant = vec![false; p];
        let mut y = raw.clone();
        for j in 0..p {
            let col = raw.column(j);
            let m = col.mean();
            let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
            let sd = (ss / (n as f64 - 1.0)).sqrt();
            center[j] = m;
            if sd > 0.0 && sd > 1e-14 * m.abs() {
                scale[j] = sd;
            } else {
                constant[j] = true;
            }
            for i in 0..n {
                y[(i, j)] = (raw[(i, j)] - m) / scale[j];
            }
        }
        Ok(Self::with_transform(y, center, scale, constant))
    }

    /// Uses the values as given, with an identity transform.
    pub fn from_standardized(y: Matrix) -> Result<Self> {
        if y.ncols() == 0 {
            return Err(Error::Domain("data need at least one column".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("data contain non-finite values".into()));
        }
        let p = y.ncols();
        Ok(Self::with_transform(
            y,
            Vector::zeros(p),
            Vector::from_element(p, 1.0),
            vec![false; p],
        ))
    }

    /// A dataset with no observations, used to simulate from the prior.
    pub fn empty(p: usize) -> Self {
        Self::with_transform(
            Matrix::zeros(0, p),
            Vector::zeros(p),
            Vector::from_element(p, 1.0),
            vec![false; p],
        )
    }

    fn with_transform(y: Matrix, center: Vector, scale: Vector, constant: Vec<bool>) -> Self {
        let (n, p) = y.shape();
        let mut rows = Vec::with_capacity(n * p);
        for i in 0..n {
            for j in 0..p {
                rows.push(y[(i, j)]);
            }
        }
        Self {
            y,
            rows,
            center,
            scale,
            constant,
        }
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    /// Observation `i` as a contiguous slice.
    pub fn obs(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.rows[i * p..(i + 1) * p]
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn scale(&self) -> &Vector {
        &self.scale
    }

    pub fn constant_columns(&self) -> &[bool] {
        &self.constant
    }

    pub fn has_constant_column(&self) -> bool {
        self.constant.iter().any(|c| *c)
    }

    /// `Σ_d ln scale_d`, the per-observation log-Jacobian of the transform.
    pub fn log_jacobian(&self) -> f64 {
        self.scale.iter().map(|s| s.ln()).sum()
    }

    /// Maps a mean from the standardized scale back to the original one.
    pub fn unstandardize_mean(&self, mu: &Vector) -> Vector {
        mu.component_mul(&self.scale) + &self.center
    }

    pub fn unstandardize_cov(&self, sigma: &Matrix) -> Matrix {
        let p = self.p();
        Matrix::from_fn(p, p, |i, j| sigma[(i, j)] * self.scale[i] * self.scale[j])
    }

    /// The data on the original scale.
    pub fn raw(&self) -> Matrix {
        let (n, p) = self.y.shape();
        Matrix::from_fn(n, p, |i, j| self.y[(i, j)] * self.scale[j] + self.center[j])
    }
}

/// Mixture parameters `(η, μ_1..μ_k, Σ)`. Under the equal structure `sigma`
/// holds a single matrix shared by every component.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub eta: Vec<f64>,
    pub mu: Vec<Vector>,
    pub sigma: Vec<Matrix>,
}

impl MixtureParams {
    /// Validates shapes, the simplex (to 1e-9, then renormalized) and SPD
    /// covariances.
    pub fn new(eta: Vec<f64>, mu: Vec<Vector>, sigma: Vec<Matrix>) -> Result<Self> {
        let k = eta.len();
        if k == 0 || mu.len() != k || !(sigma.len() == 1 || sigma.len() == k) {
            return Err(Error::Shape(format!(
                "{} weights, {} means and {} covariances",
                k,
                mu.len(),
                sigma.len()
            )));
        }
        let p = mu[0].len();
        if mu.iter().any(|m| m.len() != p) || sigma.iter().any(|s| s.shape() != (p, p)) {
            return Err(Error::Shape("inconsistent component dimensions".into()));
        }
        let total: f64 = eta.iter().sum();
        if eta.iter().any(|e| !(*e >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "weights {eta:?} are not on the simplex"
            )));
        }
        for s in &sigma {
            if !crate::stats::linalg::is_spd(s) {
                return Err(Error::SingularMatrix("component covariance".into()));
            }
        }
        let eta = eta.into_iter().map(|e| e / total).collect();
        Ok(Self { eta, mu, sigma })
    }

    pub fn k(&self) -> usize {
        self.eta.len()
    }

    pub fn p(&self) -> usize {
        self.mu[0].len()
    }

    pub fn structure(&self) -> CovStructure {
        if self.sigma.len() == 1 {
            CovStructure::Equal
        } else {
            CovStructure::Unequal
        }
    }

    /// Covariance of component `j`.
    pub fn sigma_j(&self, j: usize) -> &Matrix {
        if self.sigma.len() == 1 {
            &self.sigma[0]
        } else {
            &self.sigma[j]
        }
    }

    pub fn check_spec(&self, spec: &ModelSpec) -> Result<()> {
        if self.k() != spec.k || self.p() != spec.p || self.sigma.len() != spec.n_cov() {
            return Err(Error::Shape(format!(
                "parameters (k={}, p={}, {} covariances) do not match {}",
                self.k(),
                self.p(),
                self.sigma.len(),
                spec.label()
            )));
        }
        Ok(())
    }

    /// Relabels components so that new component `j` is old component `perm[j]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let sigma = if self.sigma.len() == 1 {
            self.sigma.clone()
        } else {
            perm.iter().map(|&j| self.sigma[j].clone()).collect()
        };
        Self {
            eta: perm.iter().map(|&j| self.eta[j]).collect(),
            mu: perm.iter().map(|&j| self.mu[j].clone()).collect(),
            sigma,
        }
    }

    /// One Normal kernel per component.
    pub fn kernels(&self) -> Result<Vec<GaussianKernel>> {
        (0..self.k())
            .map(|j| GaussianKernel::new(&self.mu[j], self.sigma_j(j)))
            .collect()
    }

    /// Parameters on the original data scale.
    pub fn unstandardize(&self, data: &Dataset) -> Self {
        Self {
            eta: self.eta.clone(),
            mu: self.mu.iter().map(|m| data.unstandardize_mean(m)).collect(),
            sigma: self
                .sigma
                .iter()
                .map(|s| data.unstandardize_cov(s))
                .collect(),
        }
    }

    /// Plain nested arrays for serialization.
    pub fn to_record(&self) -> ParamsRecord {
        ParamsRecord {
            eta: self.eta.clone(),
            mu: self
                .mu
                .iter()
                .map(|m| m.iter().copied().collect())
                .collect(),
            sigma: self
                .sigma
                .iter()
                .map(|s| s.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
        }
    }

    /// Mixture log-density at one point.
    pub fn ln_density(&self, kernels: &[GaussianKernel], x: &[f64]) -> f64 {
        let mut terms = [0.0f64; 32];
        let k = self.k();
        if k <= 32 {
            for j in 0..k {
                terms[j] = self.eta[j].ln() + kernels[j].ln_pdf(x);
            }
            log_sum_exp(&terms[..k]).unwrap_or(f64::NEG_INFINITY)
        } else {
            let v: Vec<f64> = (0..k)
                .map(|j| self.eta[j].ln() + kernels[j].ln_pdf(x))
                .collect();
            log_sum_exp(&v).unwrap_or(f64::NEG_INFINITY)
        }
    }
}

/// Serializable form of [`MixtureParams`]; `sigma` is a list of row-major
/// matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub eta: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<Vec<f64>>>,
}

impl ParamsRecord {
    pub fn to_params(&self) -> Result<MixtureParams> {
        let p = self.mu.first().map(|m| m.len()).unwrap_or(0);
        let sigma = self
            .sigma
            .iter()
            .map(|rows| {
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(Error::Shape("covariance is not p x p".into()));
                }
                Ok(Matrix::from_fn(p, p, |i, j| rows[i][j]))
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureParams::new(
            self.eta.clone(),
            self.mu
                .iter()
                .map(|m| Vector::from_column_slice(m))
                .collect(),
            sigma,
        )
    }
}

/// Component labels, stored zero-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Allocation {
    pub z: Vec<u16>,
    pub k: usize,
}

impl Allocation {
    pub fn new(z: Vec<u16>, k: usize) -> Result<Self> {
        if z.iter().any(|&v| v as usize >= k) {
            return Err(Error::Domain(format!(
                "allocation labels must lie in 0..{k}"
            )));
        }
        Ok(Self { z, k })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &v in &self.z {
            c[v as usize] += 1;
        }
        c
    }

    /// Number of components with at least one observation.
    pub fn nonempty(&self) -> usize {
        self.counts().iter().filter(|&&c| c > 0).count()
    }

    /// Relabels so that new label `j` is old label `perm[j]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0u16; self.k];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new as u16;
        }
        Self {
            z: self.z.iter().map(|&v| inv[v as usize]).collect(),
            k: self.k,
        }
    }
}

/// `Σ_i log Σ_j η_j N(y_i | μ_j, Σ_j)`.
pub fn log_likelihood(params: &MixtureParams, data: &Dataset, spec: &ModelSpec) -> Result<f64> {
    params.check_spec(spec)?;
    if data.p() != spec.p {
        return Err(Error::Shape(format!(
            "data have {} columns but the model has p = {}",
            data.p(),
            spec.p
        )));
    }
    let kernels = params.kernels()?;
    Ok((0..data.n())
        .map(|i| params.ln_density(&kernels, data.obs(i)))
        .sum())
}

/// Weighted per-component sufficient statistics: counts `n_j`, means `ȳ_j`
/// (zero when `n_j = 0`) and scatter matrices about the means.
#[derive(Clone, Debug)]
pub struct ComponentStats {
    pub counts: Vec<f64>,
    pub means: Vec<Vector>,
    pub scatter: Vec<Matrix>,
}

impl ComponentStats {
    /// From a hard allocation.
    pub fn from_allocation(data: &Dataset, z: &[u16], k: usize) -> Self {
        let p = data.p();
        let mut counts = vec![0.0; k];
        let mut sums = vec![vec![0.0; p]; k];
        for (i, &zi) in z.iter().enumerate() {
            let j = zi as usize;
            counts[j] += 1.0;
            for (s, v) in sums[j].iter_mut().zip(data.obs(i)) {
                *s += v;
            }
        }
        let means: Vec<Vector> = (0..k)
            .map(|j| {
                if counts[j] > 0.0 {
                    Vector::from_iterator(p, sums[j].iter().map(|s| s / counts[j]))
                } else {
                    Vector::zeros(p)
                }
            })
            .collect();
        let mut scatter = vec![Matrix::zeros(p, p); k];
        let mut r = vec![0.0; p];
        for (i, &zi) in z.iter().enumerate() {
            let j = zi as usize;
            for (d, v) in data.obs(i).iter().enumerate() {
                r[d] = v - means[j][d];
            }
            let w = &mut scatter[j];
            for b in 0..p {
                for a in b..p {
                    w[(a, b)] += r[a] * r[b];
                }
            }
        }
        for w in &mut scatter {
            fill_upper(w);
        }
        Self {
            counts,
            means,
            scatter,
        }
    }

    /// From soft responsibilities stored row-major as `n × k`.
    pub fn from_weights(data: &Dataset, weights: &[f64], k: usize) -> Self {
        let (n, p) = (data.n(), data.p());
        let mut counts = vec![0.0; k];
        let mut sums = vec![vec![0.0; p]; k];
        for i in 0..n {
            let y = data.obs(i);
            for j in 0..k {
                let w = weights[i * k + j];
                counts[j] += w;
                for (s, v) in sums[j].iter_mut().zip(y) {
                    *s += w * v;
                }
            }
        }
        let means: Vec<Vector> = (0..k)
            .map(|j| {
                if counts[j] > 0.0 {
                    Vector::from_iterator(p, sums[j].iter().map(|s| s / counts[j]))
                } else {
                    Vector::zeros(p)
                }
            })
            .collect();
        let mut scatter = vec![Matrix::zeros(p, p); k];
        let mut r = vec![0.0; p];
        for i in 0..n {
            let y = data.obs(i);
            for j in 0..k {
                let w = weights[i * k + j];
                if w == 0.0 {
                    continue;
                }
                for d in 0..p {
                    r[d] = y[d] - means[j][d];
                }
                let s = &mut scatter[j];
                for b in 0..p {
                    for a in b..p {
                        s[(a, b)] += w * r[a] * r[b];
                    }
                }
            }
        }
        for s in &mut scatter {
            fill_upper(s);
        }
        Self {
            counts,
            means,
            scatter,
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// `Σ_i w_ij (y_i - m)(y_i - m)'` for an arbitrary centre `m`.
    pub fn scatter_about(&self, j: usize, m: &Vector) -> Matrix {
        let d = &self.means[j] - m;
        &self.scatter[j] + (&d * d.transpose()) * self.counts[j]
    }
}

/// Serializes a matrix as a list of rows.
pub fn serialize_matrix<S: serde::Serializer>(
    m: &Matrix,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

fn fill_upper(m: &mut Matrix) {
    let p = m.nrows();
    for b in 0..p {
        for a in b + 1..p {
            m[(b, a)] = m[(a, b)];
        }
    }
}
