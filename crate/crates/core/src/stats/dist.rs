//! Densities and samplers for the four families used by the prior and the
//! sampler: multivariate Normal, inverse Wishart, Dirichlet and Gamma.

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaSampler, StandardNormal};

use super::linalg::{cholesky, log_det_from_chol, lower_triangular_inverse, trace_of_product};
use super::special::{gamma_cdf, ln_gamma, ln_mvgamma};
use crate::{Error, Matrix, Result, Vector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn check_finite_vec(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} has non-finite entries")))
    }
}

/// Log-density of a Normal with a precomputed lower Cholesky factor, stored
/// row-major so evaluation does not allocate for `p <= 16`.
#[derive(Clone, Debug)]
pub struct GaussianKernel {
    p: usize,
    mean: Vec<f64>,
    chol: Vec<f64>,
    log_norm: f64,
}

impl GaussianKernel {
    pub fn new(mean: &Vector, cov: &Matrix) -> Result<Self> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::Shape(format!(
                "mean has length {p} but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let c = cholesky(cov)?;
        let l = c.l();
        let mut chol = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..=i {
                chol[i * p + j] = l[(i, j)];
            }
        }
        let log_norm = -0.5 * p as f64 * LN_2PI - 0.5 * log_det_from_chol(&c);
        Ok(Self {
            p,
            mean: mean.iter().copied().collect(),
            chol,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Log normalizing constant, `-p/2 ln 2π - ½ ln|Σ|`.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// Mahalanobis distance `(x-μ)'Σ⁻¹(x-μ)`.
    pub fn mahalanobis(&self, x: &[f64]) -> f64 {
        let p = self.p;
        let mut stack = [0.0f64; 16];
        let mut heap;
        let u: &mut [f64] = if p <= 16 {
            &mut stack[..p]
        } else {
            heap = vec![0.0; p];
            &mut heap
        };
        let mut q = 0.0;
        for i in 0..p {
            let row = &self.chol[i * p..i * p + i + 1];
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= row[j] * u[j];
            }
            let v = s / row[i];
            u[i] = v;
            q += v * v;
        }
        q
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis(x)
    }

    /// `μ + L ε` with ε standard Normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let p = self.p;
        let eps: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        Vector::from_fn(p, |i, _| {
            let row = &self.chol[i * p..i * p + i + 1];
            self.mean[i] + row.iter().zip(&eps).map(|(a, b)| a * b).sum::<f64>()
        })
    }
}

/// Multivariate Normal.
#[derive(Clone, Debug)]
pub struct Mvn {
    mean: Vector,
    cov: Matrix,
    kernel: GaussianKernel,
}

impl Mvn {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        check_finite_vec(mean.as_slice(), "mean")?;
        let kernel = GaussianKernel::new(&mean, &cov)?;
        Ok(Self { mean, cov, kernel })
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn ln_pdf(&self, x: &Vector) -> Result<f64> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape(format!(
                "point has length {} but the distribution has dimension {}",
                x.len(),
                self.mean.len()
            )));
        }
        check_finite_vec(x.as_slice(), "point")?;
        Ok(self.kernel.ln_pdf(x.as_slice()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        self.kernel.sample(rng)
    }
}

/// Inverse Wishart with `Σ ~ IW(ν, S)` meaning `Σ⁻¹ ~ Wishart(ν, S)`, so that
/// `E(Σ⁻¹) = νS`. With `Ψ = S⁻¹` the density is
///
/// ```text
/// ln p(Σ) = (ν/2) ln|Ψ| - (νp/2) ln 2 - ln Γ_p(ν/2)
///           - ((ν+p+1)/2) ln|Σ| - ½ tr(Ψ Σ⁻¹)
/// ```
///
/// For `p = 1` this is an inverse Gamma with shape `ν/2` and rate `Ψ/2`.
#[derive(Clone, Debug)]
pub struct InvWishart {
    dof: f64,
    psi: Matrix,
    psi_chol: Matrix,
    log_const: f64,
}

impl InvWishart {
    /// From the scale `S` of the Wishart law of `Σ⁻¹`.
    pub fn new(dof: f64, scale: &Matrix) -> Result<Self> {
        let (psi, _) = super::linalg::spd_inverse(scale)?;
        Self::from_inverse_scale(dof, psi)
    }

    /// From `Ψ = S⁻¹`, the matrix appearing in the exponent.
    pub fn from_inverse_scale(dof: f64, psi: Matrix) -> Result<Self> {
        let p = psi.nrows();
        if !(dof > p as f64 - 1.0) {
            return Err(Error::Domain(format!(
                "inverse Wishart needs dof > p - 1, got dof = {dof}, p = {p}"
            )));
        }
        let c = cholesky(&psi)?;
        let ld = log_det_from_chol(&c);
        let pf = p as f64;
        let log_const =
            0.5 * dof * ld - 0.5 * dof * pf * std::f64::consts::LN_2 - ln_mvgamma(p, 0.5 * dof);
        Ok(Self {
            dof,
            psi,
            psi_chol: c.l(),
            log_const,
        })
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn dim(&self) -> usize {
        self.psi.nrows()
    }

    pub fn inverse_scale(&self) -> &Matrix {
        &self.psi
    }

    /// Log-density given `ln|Σ|` and `Σ⁻¹`, for callers that already hold them.
    pub fn ln_pdf_parts(&self, log_det_sigma: f64, sigma_inv: &Matrix) -> f64 {
        let p = self.dim() as f64;
        self.log_const
            - 0.5 * (self.dof + p + 1.0) * log_det_sigma
            - 0.5 * trace_of_product(&self.psi, sigma_inv)
    }

    pub fn ln_pdf(&self, sigma: &Matrix) -> Result<f64> {
        if sigma.nrows() != self.dim() || sigma.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "expected a {0}x{0} matrix, got {1}x{2}",
                self.dim(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let c = cholesky(sigma).map_err(|_| Error::Domain("point is not SPD".into()))?;
        let ld = log_det_from_chol(&c);
        let inv = c.inverse();
        Ok(self.ln_pdf_parts(ld, &inv))
    }

    /// Bartlett draw: with `Ψ = L Lᵀ` and `A` the Bartlett factor of a
    /// standard Wishart, `Σ = (L A⁻ᵀ)(L A⁻ᵀ)ᵀ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let p = self.dim();
        let mut a = Matrix::zeros(p, p);
        for i in 0..p {
            let chi2 = GammaSampler::new(0.5 * (self.dof - i as f64), 2.0)
                .expect("dof checked at construction")
                .sample(rng);
            a[(i, i)] = chi2.sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let a_inv = lower_triangular_inverse(&a);
        let b = &self.psi_chol * a_inv.transpose();
        let mut s = &b * b.transpose();
        super::linalg::symmetrize(&mut s);
        s
    }
}

/// Dirichlet on the `k`-simplex.
#[derive(Clone, Debug)]
pub struct Dirichlet {
    alpha: Vec<f64>,
    log_const: f64,
}

impl Dirichlet {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::Domain(format!(
                "Dirichlet concentrations must be positive, got {alpha:?}"
            )));
        }
        let total: f64 = alpha.iter().sum();
        let log_const = ln_gamma(total) - alpha.iter().map(|a| ln_gamma(*a)).sum::<f64>();
        Ok(Self { alpha, log_const })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn ln_pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.alpha.len() {
            return Err(Error::Shape(format!(
                "point has length {} but the Dirichlet has {} components",
                x.len(),
                self.alpha.len()
            )));
        }
        let sum: f64 = x.iter().sum();
        if x.iter().any(|v| !(*v > 0.0)) || (sum - 1.0).abs() > 1e-10 {
            return Err(Error::Domain("point is outside the open simplex".into()));
        }
        if x.len() == 1 {
            return Ok(0.0);
        }
        Ok(self.ln_pdf_unchecked(x))
    }

    /// Log-density without support checks; `-inf` on the boundary when the
    /// matching concentration exceeds one.
    pub fn ln_pdf_unchecked(&self, x: &[f64]) -> f64 {
        self.log_const
            + self
                .alpha
                .iter()
                .zip(x)
                .map(|(a, v)| if *a == 1.0 { 0.0 } else { (a - 1.0) * v.ln() })
                .sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut g: Vec<f64> = self
            .alpha
            .iter()
            .map(|a| {
                GammaSampler::new(*a, 1.0)
                    .expect("positive shape")
                    .sample(rng)
            })
            .collect();
        let total: f64 = g.iter().sum();
        if total > 0.0 {
            g.iter_mut().for_each(|v| *v /= total);
        } else {
            // every gamma draw underflowed; fall back to the largest concentration
            let best = (0..g.len())
                .max_by(|&i, &j| self.alpha[i].total_cmp(&self.alpha[j]))
                .unwrap_or(0);
            g.iter_mut().for_each(|v| *v = 0.0);
            g[best] = 1.0;
        }
        g
    }
}

/// Gamma with shape and rate.
#[derive(Clone, Copy, Debug)]
pub struct GammaDist {
    shape: f64,
    rate: f64,
}

impl GammaDist {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::Domain(format!(
                "Gamma needs positive shape and rate, got ({shape}, {rate})"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Domain(format!("Gamma support is (0, inf), got {x}")));
        }
        Ok(
            self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
                - self.rate * x,
        )
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        gamma_cdf(x, self.shape, self.rate)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        GammaSampler::new(self.shape, 1.0 / self.rate)
            .expect("validated parameters")
            .sample(rng)
    }
}

/// A tagged distribution, for callers that dispatch at runtime.
#[derive(Clone, Debug)]
pub enum DistributionSpec {
    Mvn(Mvn),
    InvWishart(InvWishart),
    Dirichlet(Dirichlet),
    Gamma(GammaDist),
}

/// A point in the support of one of the [`DistributionSpec`] families.
#[derive(Clone, Debug, PartialEq)]
pub enum Variate {
    Scalar(f64),
    Vector(Vector),
    Matrix(Matrix),
}

impl DistributionSpec {
    pub fn mvn(mean: Vector, cov: Matrix) -> Result<Self> {
        Mvn::new(mean, cov).map(Self::Mvn)
    }

    pub fn inv_wishart(dof: f64, scale: &Matrix) -> Result<Self> {
        InvWishart::new(dof, scale).map(Self::InvWishart)
    }

    pub fn dirichlet(alpha: Vec<f64>) -> Result<Self> {
        Dirichlet::new(alpha).map(Self::Dirichlet)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        GammaDist::new(shape, rate).map(Self::Gamma)
    }

    pub fn logpdf(&self, x: &Variate) -> Result<f64> {
        match (self, x) {
            (Self::Mvn(d), Variate::Vector(v)) => d.ln_pdf(v),
            (Self::Mvn(d), Variate::Scalar(v)) if d.mean().len() == 1 => {
                d.ln_pdf(&Vector::from_element(1, *v))
            }
            (Self::InvWishart(d), Variate::Matrix(m)) => d.ln_pdf(m),
            (Self::InvWishart(d), Variate::Scalar(v)) if d.dim() == 1 => {
                d.ln_pdf(&Matrix::from_element(1, 1, *v))
            }
            (Self::Dirichlet(d), Variate::Vector(v)) => d.ln_pdf(v.as_slice()),
            (Self::Gamma(d), Variate::Scalar(v)) => d.ln_pdf(*v),
            _ => Err(Error::Shape(
                "variate does not match the distribution family".into(),
            )),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Variate {
        match self {
            Self::Mvn(d) => Variate::Vector(d.sample(rng)),
            Self::InvWishart(d) => Variate::Matrix(d.sample(rng)),
            Self::Dirichlet(d) => Variate::Vector(Vector::from_vec(d.sample(rng))),
            Self::Gamma(d) => Variate::Scalar(d.sample(rng)),
        }
    }
}
