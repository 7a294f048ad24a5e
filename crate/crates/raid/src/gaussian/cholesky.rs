//! Dense Cholesky factorization for small covariance matrices.

use crate::error::{Error, Result};

/// Factor a symmetric matrix into `L * L^T`, returning lower-triangular
/// `L` in row-major order. When a pivot comes out non-positive the
/// factorization is retried once on `cov + eps * I`; a second failure
/// is an error.
pub fn factorize(cov: &[f64], dim: usize, eps: f64) -> Result<Vec<f64>> {
    assert_eq!(cov.len(), dim * dim, "matrix shape");
    match try_factorize(cov, dim, 0.0) {
        Some(l) => Ok(l),
        None => try_factorize(cov, dim, eps).ok_or(Error::NonFactorizable),
    }
}

fn try_factorize(cov: &[f64], dim: usize, boost: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = cov[i * dim + j];
            if i == j {
                sum += boost;
            }
            for m in 0..j {
                sum -= l[i * dim + m] * l[j * dim + m];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity() {
        let l = factorize(&[1.0, 0.0, 0.0, 1.0], 2, 0.0).unwrap();
        assert_eq!(l, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn hand_checked_two_by_two() {
        let l = factorize(&[4.0, 2.0, 2.0, 3.0], 2, 0.0).unwrap();
        assert_eq!(l[0], 2.0);
        assert_eq!(l[1], 0.0);
        assert_eq!(l[2], 1.0);
        assert!((l[3] - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_regularized() {
        let cov = [1.0, 1.0, 1.0, 1.0];
        let eps = 1e-9;
        let l = factorize(&cov, 2, eps).unwrap();
        // Reconstruct and compare against cov + eps * I.
        for i in 0..2 {
            for j in 0..2 {
                let mut v = 0.0;
                for m in 0..2 {
                    v += l[i * 2 + m] * l[j * 2 + m];
                }
                let want = cov[i * 2 + j] + if i == j { eps } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_fails_even_with_boost() {
        let cov = [1.0, 0.0, 0.0, -5.0];
        assert!(matches!(factorize(&cov, 2, 1e-9), Err(Error::NonFactorizable)));
    }
}
