//! Bayesian selection of the number of components in multivariate Normal
//! mixtures under moment (MOM) non-local priors.
//!
//! The integrated likelihood of each candidate model is estimated from a
//! blocked Gibbs sampler run under a conjugate local prior (Normal-inverse
//! Wishart-Dirichlet), a permutation-averaged Chib estimator, and an
//! importance reweighting that turns the local-prior evidence into the
//! non-local one. EM routines provide maximum likelihood estimates (for BIC
//! and AIC) and posterior modes under both priors.
//!
//! Module map:
//!
//! * [`stats`]: random streams, densities, special functions, root finding.
//! * [`model`]: datasets, model specifications, mixture parameters, likelihood.
//! * [`simulate`]: the synthetic data-generating truths used in the experiments.
//! * [`prior`]: the MOM-IW-Dirichlet prior, its normalizing constant and elicitation.
//! * [`gibbs`]: sampler, Chib estimator and the non-local correction.
//! * [`em`]: EM for MLE, local-prior MAP and non-local-prior MAP.
//! * [`selection`]: model-space orchestration, BIC/AIC and posterior model probabilities.
//! * [`cli`]: command-line surface and report serialization.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod em;
pub mod error;
pub mod gibbs;
pub mod model;
pub mod prior;
pub mod selection;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};

/// Working floating-point type of the sampling and optimization pipeline.
pub type Real = f64;
/// Dense column vector of [`Real`].
pub type Vector = nalgebra::DVector<Real>;
/// Dense matrix of [`Real`].
pub type Matrix = nalgebra::DMatrix<Real>;
/// Exact rational used for closed-form and recursive normalizing constants.
pub type ExactRatio = num_rational::BigRational;

pub use model::{Allocation, CovStructure, Dataset, MixtureParams, ModelSpec};
pub use prior::{NormConstTable, PriorSettings};
pub use stats::RandomStream;
