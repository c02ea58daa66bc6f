//! Data-generating truths for the simulation study and the misspecified
//! Student-t experiment.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::Serialize;

use crate::stats::{GaussianKernel, RandomStream};
use crate::{CovStructure, Dataset, Error, Matrix, MixtureParams, ModelSpec, Result, Vector};

/// A simulated sample on the original scale with its generating truth.
#[derive(Clone, Debug, Serialize)]
pub struct Simulated {
    #[serde(skip)]
    pub y: Matrix,
    /// Generating component of each row, zero-based.
    #[serde(skip)]
    pub labels: Vec<u16>,
    pub spec: ModelSpec,
    #[serde(serialize_with = "serialize_params")]
    pub truth: MixtureParams,
    /// Degrees of freedom of Student-t components, `None` for Normal ones.
    pub student_dof: Option<f64>,
}

fn serialize_params<S: serde::Serializer>(
    p: &MixtureParams,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&p.to_record(), s)
}

impl Simulated {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::standardize(&self.y)
    }
}

fn scalar_truth(eta: &[f64], mu: &[f64]) -> (ModelSpec, MixtureParams) {
    let params = MixtureParams::new(
        eta.to_vec(),
        mu.iter().map(|m| Vector::from_element(1, *m)).collect(),
        vec![Matrix::from_element(1, 1, 1.0)],
    )
    .expect("fixed truth");
    (
        ModelSpec::new(eta.len(), CovStructure::Equal, 1).expect("fixed truth"),
        params,
    )
}

fn bivariate_truth(eta: &[f64], mu: &[[f64; 2]]) -> (ModelSpec, MixtureParams) {
    let params = MixtureParams::new(
        eta.to_vec(),
        mu.iter().map(|m| Vector::from_row_slice(m)).collect(),
        vec![Matrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0])],
    )
    .expect("fixed truth");
    (
        ModelSpec::new(eta.len(), CovStructure::Equal, 2).expect("fixed truth"),
        params,
    )
}

/// Parameters of simulation case `case_id` (1 to 8). Cases 6 and 7 do not
/// list weights and use equal ones.
pub fn case_truth(case_id: u8) -> Result<(ModelSpec, MixtureParams)> {
    let t = match case_id {
        1 => scalar_truth(&[1.0], &[0.0]),
        2 => scalar_truth(&[0.5, 0.5], &[-1.0, 1.0]),
        3 => scalar_truth(&[0.5, 0.5], &[-2.0, 2.0]),
        4 => scalar_truth(&[0.45, 0.45, 0.1], &[-1.0, 1.0, 4.0]),
        5 => bivariate_truth(&[1.0], &[[0.0, 0.0]]),
        6 => bivariate_truth(&[0.5, 0.5], &[[-0.4, -0.6], [0.4, 0.6]]),
        7 => bivariate_truth(&[0.5, 0.5], &[[-0.65, -0.85], [0.65, 0.85]]),
        8 => bivariate_truth(
            &[0.35, 0.35, 0.3],
            &[[-0.65, -0.85], [0.65, 0.85], [3.0, 3.0]],
        ),
        _ => {
            return Err(Error::Domain(format!(
                "simulation case must be 1..8, got {case_id}"
            )))
        }
    };
    Ok(t)
}

fn draw_labels(eta: &[f64], n: usize, rng: &mut RandomStream) -> Vec<u16> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (j, e) in eta.iter().enumerate() {
                acc += e;
                if u < acc {
                    return j as u16;
                }
            }
            (eta.len() - 1) as u16
        })
        .collect()
}

/// `n` draws from the mixture of simulation case `case_id`.
pub fn simulate_case(case_id: u8, n: usize, rng: &mut RandomStream) -> Result<Simulated> {
    let (spec, truth) = case_truth(case_id)?;
    let labels = draw_labels(&truth.eta, n, rng);
    let kernels = truth.kernels()?;
    let mut y = Matrix::zeros(n, spec.p);
    for (i, &j) in labels.iter().enumerate() {
        let x = kernels[j as usize].sample(rng);
        y.row_mut(i).copy_from(&x.transpose());
    }
    Ok(Simulated {
        y,
        labels,
        spec,
        truth,
        student_dof: None,
    })
}

/// Three bivariate Student-t components with 4 degrees of freedom, locations
/// (−1, 1), (1, −1) and (6, 6), a shared scale `[[2, −1], [−1, 2]]` and equal
/// weights. Each draw is `μ + L ε / sqrt(χ²₄ / 4)`.
pub fn simulate_student_misspec(n: usize, rng: &mut RandomStream) -> Simulated {
    let dof = 4.0;
    let truth = MixtureParams::new(
        vec![1.0 / 3.0; 3],
        vec![
            Vector::from_row_slice(&[-1.0, 1.0]),
            Vector::from_row_slice(&[1.0, -1.0]),
            Vector::from_row_slice(&[6.0, 6.0]),
        ],
        vec![Matrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])],
    )
    .expect("fixed truth");
    let spec = ModelSpec::new(3, CovStructure::Equal, 2).expect("fixed truth");
    let labels = draw_labels(&truth.eta, n, rng);
    let zero = GaussianKernel::new(&Vector::zeros(2), &truth.sigma[0]).expect("SPD scale");
    let chi2 = ChiSquared::<f64>::new(dof).expect("positive dof");
    let mut y = Matrix::zeros(n, 2);
    for (i, &j) in labels.iter().enumerate() {
        let e = zero.sample(rng);
        let w: f64 = (chi2.sample(rng) / dof).sqrt();
        for d in 0..2 {
            y[(i, d)] = truth.mu[j as usize][d] + e[d] / w;
        }
    }
    Simulated {
        y,
        labels,
        spec,
        truth,
        student_dof: Some(dof),
    }
}

/// A standard Normal matrix, handy for tests and examples.
pub fn standard_normal(n: usize, p: usize, rng: &mut RandomStream) -> Matrix {
    Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}
