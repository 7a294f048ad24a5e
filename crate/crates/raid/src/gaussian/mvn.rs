//! Multivariate normal density and numerically integrated log-CDF.
//!
//! The CDF estimator follows the Genz construction: the integration
//! region is mapped through a variable-reordered Cholesky factor onto
//! the unit cube, where a randomized rank-1 lattice (square-root
//! generators with a random shift and the baker's transform) does the
//! sampling. Randomization batches give an empirical standard error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::cholesky::factorize;
use super::normal::{inv_std_cdf, std_cdf, std_pdf};
use super::LOG_PROB_FLOOR;

const QMC_BATCHES: usize = 8;

/// Mean and covariance snapshot used for scoring and thresholding.
#[derive(Debug, Clone)]
pub struct GaussianParams {
    mean: Vec<f64>,
    cov: Vec<f64>,
    dim: usize,
    regularization: f64,
}

impl GaussianParams {
    /// Build a parameter snapshot, validating shape and symmetry.
    /// Regularization defaults to `1e-9 * trace / k`.
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 {
            return Err(Error::InvalidConfig("zero-dimensional distribution".into()));
        }
        if cov.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: cov.len() });
        }
        let scale = cov.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (cov[i * dim + j] - cov[j * dim + i]).abs() > 1e-10 * scale.max(1e-300) {
                    return Err(Error::InvalidConfig("covariance not symmetric".into()));
                }
            }
        }
        let trace: f64 = (0..dim).map(|i| cov[i * dim + i]).sum();
        let regularization = (1e-9 * trace / dim as f64).max(1e-300);
        Ok(Self { mean, cov, dim, regularization })
    }

    pub fn with_regularization(mut self, eps: f64) -> Self {
        self.regularization = eps;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| i == j || self.cov[i * self.dim + j] == 0.0)
        })
    }
}

/// Result of a numerical CDF evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfEstimate {
    /// Natural log of the CDF value, clamped to `[LOG_PROB_FLOOR, 0]`.
    pub log_prob: f64,
    /// Empirical standard error across randomization batches, on the
    /// probability scale.
    pub abs_error: f64,
    /// Number of integrand evaluations consumed.
    pub points_used: usize,
}

/// Multivariate normal density at `x`, computed through the Cholesky
/// factor rather than an explicit inverse.
pub fn pdf(x: &[f64], p: &GaussianParams) -> Result<f64> {
    if x.len() != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: x.len() });
    }
    let l = factorize(&p.cov, p.dim, p.regularization)?;
    // Solve L w = x - mu by forward substitution.
    let mut w = vec![0.0; p.dim];
    for i in 0..p.dim {
        let mut s = x[i] - p.mean[i];
        for j in 0..i {
            s -= l[i * p.dim + j] * w[j];
        }
        w[i] = s / l[i * p.dim + i];
    }
    let quad: f64 = w.iter().map(|v| v * v).sum();
    let log_det: f64 = (0..p.dim).map(|i| l[i * p.dim + i].ln()).sum::<f64>() * 2.0;
    let log_pdf = -0.5 * (p.dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad);
    Ok(log_pdf.exp())
}

/// Log of the joint normal CDF at `x`, estimated by randomized
/// quasi-Monte Carlo. Deterministic for a fixed `seed`. Diagonal
/// covariances take an exact product-of-marginals path.
pub fn mvn_log_cdf(
    x: &[f64],
    p: &GaussianParams,
    max_points: usize,
    target_error: f64,
    seed: u64,
) -> Result<CdfEstimate> {
    if x.len() != p.dim {
        return Err(Error::DimensionMismatch { expected: p.dim, got: x.len() });
    }
    if p.is_diagonal() {
        let mut log_prob = 0.0;
        for i in 0..p.dim {
            let var = p.cov[i * p.dim + i].max(p.regularization);
            let c = std_cdf((x[i] - p.mean[i]) / var.sqrt());
            log_prob += if c > 0.0 { c.ln() } else { LOG_PROB_FLOOR };
        }
        return Ok(CdfEstimate {
            log_prob: log_prob.clamp(LOG_PROB_FLOOR, 0.0),
            abs_error: 0.0,
            points_used: 0,
        });
    }

    let k = p.dim;
    let shifted: Vec<f64> = x.iter().zip(&p.mean).map(|(xi, mi)| xi - mi).collect();
    let (l, b) = reordered_cholesky(&p.cov, &shifted, k, p.regularization)?;

    let e0 = std_cdf(b[0] / l[0]);
    let dims = k - 1;
    if dims == 0 {
        let log_prob = if e0 > 0.0 { e0.ln() } else { LOG_PROB_FLOOR };
        return Ok(CdfEstimate {
            log_prob: log_prob.clamp(LOG_PROB_FLOOR, 0.0),
            abs_error: 0.0,
            points_used: 0,
        });
    }

    let points_per_batch = (max_points / QMC_BATCHES).max(8);
    let generators: Vec<f64> = primes(dims).iter().map(|&q| (q as f64).sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch_means: Vec<f64> = Vec::with_capacity(QMC_BATCHES);
    let mut y = vec![0.0; k];
    let mut points_used = 0usize;

    for _ in 0..QMC_BATCHES {
        let shift: Vec<f64> = (0..dims).map(|_| rng.gen::<f64>()).collect();
        let mut acc = 0.0;
        for i in 1..=points_per_batch {
            let mut prod = e0;
            let mut e_prev = e0;
            for d in 0..dims {
                let u = (i as f64 * generators[d] + shift[d]).fract();
                let t = (2.0 * u - 1.0).abs();
                let z = (t * e_prev).clamp(1e-300, 1.0 - 1e-16);
                y[d] = inv_std_cdf(z);
                let row = d + 1;
                let mut num = b[row];
                for m in 0..row {
                    num -= l[row * k + m] * y[m];
                }
                e_prev = std_cdf(num / l[row * k + row]);
                prod *= e_prev;
            }
            acc += prod;
        }
        points_used += points_per_batch;
        batch_means.push(acc / points_per_batch as f64);
        if batch_means.len() >= 2 {
            let (_, se) = mean_and_stderr(&batch_means);
            if se <= target_error {
                break;
            }
        }
    }

    let (prob, abs_error) = mean_and_stderr(&batch_means);
    let log_prob = if prob > 0.0 {
        prob.min(1.0).ln().clamp(LOG_PROB_FLOOR, 0.0)
    } else {
        LOG_PROB_FLOOR
    };
    Ok(CdfEstimate { log_prob, abs_error, points_used })
}

fn mean_and_stderr(batches: &[f64]) -> (f64, f64) {
    let n = batches.len() as f64;
    let mean = batches.iter().sum::<f64>() / n;
    if batches.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while out.len() < count {
        if out.iter().all(|p| candidate % p != 0) {
            out.push(candidate);
        }
        candidate += 1;
    }
    out
}

/// Cholesky factorization with the Genz variable-reordering heuristic:
/// at each stage pick the remaining variable with the smallest
/// conditional marginal probability, tracking truncated-normal
/// expectations for the conditioning. Returns the factor and the
/// permuted shifted limits. Retries once on `cov + eps * I`.
fn reordered_cholesky(
    cov: &[f64],
    b: &[f64],
    k: usize,
    eps: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match try_reordered(cov, b, k, 0.0) {
        Some(r) => Ok(r),
        None => try_reordered(cov, b, k, eps).ok_or(Error::NonFactorizable),
    }
}

fn try_reordered(cov: &[f64], b: &[f64], k: usize, boost: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut a = cov.to_vec();
    for i in 0..k {
        a[i * k + i] += boost;
    }
    let mut bp = b.to_vec();
    let mut l = vec![0.0; k * k];
    let mut y = vec![0.0; k];

    for i in 0..k {
        // Select the variable with the smallest conditional probability.
        let mut best = i;
        let mut best_p = f64::INFINITY;
        for j in i..k {
            let mut s = a[j * k + j];
            let mut num = bp[j];
            for m in 0..i {
                s -= l[j * k + m] * l[j * k + m];
                num -= l[j * k + m] * y[m];
            }
            if s <= 0.0 {
                continue;
            }
            let pj = std_cdf(num / s.sqrt());
            if pj < best_p {
                best_p = pj;
                best = j;
            }
        }
        if best != i {
            swap_variable(&mut a, &mut l, &mut bp, k, i, best);
        }
        let mut s = a[i * k + i];
        for m in 0..i {
            s -= l[i * k + m] * l[i * k + m];
        }
        if s <= 0.0 {
            return None;
        }
        let diag = s.sqrt();
        l[i * k + i] = diag;
        for j in (i + 1)..k {
            let mut v = a[j * k + i];
            for m in 0..i {
                v -= l[i * k + m] * l[j * k + m];
            }
            l[j * k + i] = v / diag;
        }
        let mut num = bp[i];
        for m in 0..i {
            num -= l[i * k + m] * y[m];
        }
        let alpha = num / diag;
        let phi = std_cdf(alpha);
        // Conditional expectation of a standard normal truncated to
        // (-inf, alpha]; degenerates to alpha itself far in the tail.
        y[i] = if phi > 1e-300 { -std_pdf(alpha) / phi } else { alpha };
    }
    Some((l, bp))
}

fn swap_variable(a: &mut [f64], l: &mut [f64], bp: &mut [f64], k: usize, i: usize, j: usize) {
    bp.swap(i, j);
    for m in 0..k {
        a.swap(i * k + m, j * k + m);
    }
    for m in 0..k {
        a.swap(m * k + i, m * k + j);
    }
    for m in 0..k {
        l.swap(i * k + m, j * k + m);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mean: &[f64], cov: &[f64]) -> GaussianParams {
        GaussianParams::new(mean.to_vec(), cov.to_vec()).unwrap()
    }

    #[test]
    fn pdf_standard_normal_mode() {
        let p = params(&[0.0], &[1.0]);
        let v = pdf(&[0.0], &p).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pdf_bivariate_identity_mode() {
        let p = params(&[1.0, -1.0], &[1.0, 0.0, 0.0, 1.0]);
        let v = pdf(&[1.0, -1.0], &p).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn pdf_matches_dense_oracle_k3() {
        // Explicit determinant/inverse oracle at k = 3.
        let cov = [2.0, 0.5, 0.3, 0.5, 1.5, 0.2, 0.3, 0.2, 1.0];
        let mean = [0.5, -1.0, 2.0];
        let x = [1.0, 0.0, 1.5];
        let det = cov[0] * (cov[4] * cov[8] - cov[5] * cov[7])
            - cov[1] * (cov[3] * cov[8] - cov[5] * cov[6])
            + cov[2] * (cov[3] * cov[7] - cov[4] * cov[6]);
        let mut inv = [0.0; 9];
        inv[0] = (cov[4] * cov[8] - cov[5] * cov[7]) / det;
        inv[1] = (cov[2] * cov[7] - cov[1] * cov[8]) / det;
        inv[2] = (cov[1] * cov[5] - cov[2] * cov[4]) / det;
        inv[3] = inv[1];
        inv[4] = (cov[0] * cov[8] - cov[2] * cov[6]) / det;
        inv[5] = (cov[2] * cov[3] - cov[0] * cov[5]) / det;
        inv[6] = inv[2];
        inv[7] = inv[5];
        inv[8] = (cov[0] * cov[4] - cov[1] * cov[3]) / det;
        let d: Vec<f64> = x.iter().zip(&mean).map(|(a, b)| a - b).collect();
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                quad += d[i] * inv[i * 3 + j] * d[j];
            }
        }
        let want = (-0.5 * quad).exp()
            / ((2.0 * std::f64::consts::PI).powi(3) * det).sqrt();
        let got = pdf(&x, &params(&mean, &cov)).unwrap();
        assert!((got - want).abs() / want < 1e-10);
    }

    #[test]
    fn log_cdf_independent_median() {
        let p = params(&[2.0, -3.0], &[4.0, 0.0, 0.0, 9.0]);
        let est = mvn_log_cdf(&[2.0, -3.0], &p, 16384, 1e-6, 1).unwrap();
        assert!((est.log_prob - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_cdf_univariate_reduction() {
        let p = params(&[1.0], &[2.0]);
        for x in [-2.0, 0.5, 1.0, 4.0] {
            let est = mvn_log_cdf(&[x], &p, 16384, 1e-6, 1).unwrap();
            let want = super::super::normal::uni_cdf(x, 1.0, 2.0).unwrap().ln();
            assert!((est.log_prob - want).abs() < 1e-10);
        }
    }

    #[test]
    fn log_cdf_reproducible() {
        let p = params(&[0.0, 0.0, 0.0], &[1.0, 0.5, 0.5, 0.5, 1.0, 0.5, 0.5, 0.5, 1.0]);
        let a = mvn_log_cdf(&[0.3, -0.2, 0.1], &p, 16384, 1e-9, 77).unwrap();
        let b = mvn_log_cdf(&[0.3, -0.2, 0.1], &p, 16384, 1e-9, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_cdf_equicorrelated_known_value() {
        // For exchangeable coordinates with rho = 0.5 at the median,
        // P(all below) = 1/(k+1) exactly (random-ranking argument).
        let p = params(&[0.0, 0.0, 0.0], &[1.0, 0.5, 0.5, 0.5, 1.0, 0.5, 0.5, 0.5, 1.0]);
        let est = mvn_log_cdf(&[0.0, 0.0, 0.0], &p, 65536, 1e-8, 5).unwrap();
        let want = 0.25f64.ln();
        assert!(
            (est.log_prob - want).abs() < 1e-4,
            "got {} want {} se {}",
            est.log_prob,
            want,
            est.abs_error
        );
    }

    #[test]
    fn log_cdf_monotone_in_coordinates() {
        let p = params(&[0.0, 0.0], &[1.0, 0.6, 0.6, 1.0]);
        let base = mvn_log_cdf(&[0.2, -0.4], &p, 16384, 1e-7, 3).unwrap();
        for coord in 0..2 {
            let mut x = [0.2, -0.4];
            x[coord] += 0.5;
            let up = mvn_log_cdf(&x, &p, 16384, 1e-7, 3).unwrap();
            assert!(up.log_prob >= base.log_prob);
        }
    }

    #[test]
    fn log_cdf_underflow_clamped() {
        let p = params(&[0.0, 0.0], &[1.0, 0.3, 0.3, 1.0]);
        let est = mvn_log_cdf(&[-60.0, -60.0], &p, 4096, 1e-6, 9).unwrap();
        assert!(est.log_prob >= LOG_PROB_FLOOR);
        assert!(est.log_prob <= -500.0);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(GaussianParams::new(vec![], vec![]).is_err());
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        assert!(GaussianParams::new(vec![0.0, 0.0], vec![1.0, 0.5, 0.1, 1.0]).is_err());
    }
}
