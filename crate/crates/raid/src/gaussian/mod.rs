//! Gaussian density, CDF and quantile machinery.
//!
//! The univariate CDF goes through the complementary error function;
//! the quantile function expands a bracket geometrically and hands it
//! to Brent's method. The multivariate CDF is estimated by the
//! variable-reordered Cholesky transformation with randomized
//! quasi-Monte Carlo sampling over the unit cube.

mod brent;
mod cholesky;
mod mvn;
mod normal;

pub use brent::brent_root;
pub use cholesky::factorize;
pub use mvn::{mvn_log_cdf, pdf, CdfEstimate, GaussianParams};
pub use normal::{std_cdf, uni_cdf, uni_ppf};

/// Smallest log-probability we report; stands in for -inf when the
/// probability estimate underflows, so threshold comparisons stay total.
pub const LOG_PROB_FLOOR: f64 = -745.0;
