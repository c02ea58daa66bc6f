//! Seedable random streams, log-densities, special functions and small
//! numerical primitives shared by the rest of the crate.

mod dist;
pub mod linalg;
mod numeric;
mod rng;
mod special;

pub use dist::{Dirichlet, DistributionSpec, GammaDist, GaussianKernel, InvWishart, Mvn, Variate};
pub use numeric::{batch_means_se, log_sum_exp, solve_monotone, LogSumExp};
pub use rng::RandomStream;
pub use special::{chi2_quantile, gamma_cdf, gamma_quantile, ln_gamma, ln_mvgamma};
