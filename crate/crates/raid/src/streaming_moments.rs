//! Single-pass running statistics with exact sample removal.
//!
//! The forward recurrences are Welford's: the mean is nudged by
//! `delta / n` and the co-moment accumulates `delta_old * delta_new`,
//! which avoids the catastrophic cancellation of the naive
//! sum-of-squares formulation. The reverse recurrences undo one past
//! sample's contribution, which is what makes time-expiring windows
//! possible without recomputation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running count, mean and corrected sum of squared deviations for a
/// scalar stream. The count is real-valued so that fractionally
/// weighted samples can participate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateMoments {
    count: f64,
    mean: f64,
    comoment: f64,
}

impl Default for UnivariateMoments {
    fn default() -> Self {
        Self::new()
    }
}

impl UnivariateMoments {
    pub fn new() -> Self {
        Self { count: 0.0, mean: 0.0, comoment: 0.0 }
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn comoment(&self) -> f64 {
        self.comoment
    }

    /// Incorporate one sample.
    pub fn update(&mut self, x: f64) {
        self.weighted_step(x, 1.0);
    }

    /// Incorporate a sample with fractional weight `w` in [0, 1].
    /// `w = 1` is bit-identical to [`update`](Self::update); `w = 0`
    /// leaves the state untouched.
    pub fn weighted_update(&mut self, x: f64, w: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&w) || w.is_nan() {
            return Err(Error::InvalidWeight(w));
        }
        if w == 0.0 {
            return Ok(());
        }
        self.weighted_step(x, w);
        Ok(())
    }

    fn weighted_step(&mut self, x: f64, w: f64) {
        self.count += w;
        let delta_old = x - self.mean;
        self.mean += w * delta_old / self.count;
        let delta_new = x - self.mean;
        self.comoment += w * delta_old * delta_new;
    }

    /// Remove a previously incorporated sample. Removing the last
    /// sample resets the state to empty.
    pub fn revert(&mut self, x_old: f64) -> Result<()> {
        if self.count < 1.0 {
            return Err(Error::EmptyRevert);
        }
        let count_new = self.count - 1.0;
        if count_new <= 0.0 {
            *self = Self::new();
            return Ok(());
        }
        let delta_cur = x_old - self.mean;
        let mean_new = self.mean - delta_cur / count_new;
        let delta_prev = x_old - mean_new;
        self.comoment -= delta_prev * delta_cur;
        self.mean = mean_new;
        self.count = count_new;
        Ok(())
    }

    /// Unbiased variance `S / (n - 1)`; defined for `n >= 2`.
    pub fn variance(&self) -> Result<f64> {
        if self.count < 2.0 {
            return Err(Error::InsufficientSamples {
                required: 2,
                available: self.count as usize,
            });
        }
        Ok(self.comoment / (self.count - 1.0))
    }
}

/// Running mean vector and co-moment matrix for a vector stream.
/// The covariance is `C / (n - 1)`; `C` itself is what the update and
/// revert recurrences touch, so no division happens on the hot path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultivariateMoments {
    count: usize,
    dim: usize,
    mean: Vec<f64>,
    /// Row-major k-by-k, kept exactly symmetric by mirrored writes.
    comoment: Vec<f64>,
}

impl MultivariateMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            dim,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn comoment(&self) -> &[f64] {
        &self.comoment
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// Incorporate one observation vector.
    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        self.count += 1;
        let n = self.count as f64;
        let delta_old: Vec<f64> = x.iter().zip(&self.mean).map(|(xi, mi)| xi - mi).collect();
        for (mi, d) in self.mean.iter_mut().zip(&delta_old) {
            *mi += d / n;
        }
        let delta_new: Vec<f64> = x.iter().zip(&self.mean).map(|(xi, mi)| xi - mi).collect();
        // Mirrored writes keep C symmetric to the last bit.
        for i in 0..self.dim {
            for j in i..self.dim {
                let inc = delta_old[i] * delta_new[j];
                self.comoment[i * self.dim + j] += inc;
                if i != j {
                    self.comoment[j * self.dim + i] += inc;
                }
            }
        }
        Ok(())
    }

    /// Remove a previously incorporated observation. Removing the last
    /// one resets the state to empty.
    pub fn revert(&mut self, x_old: &[f64]) -> Result<()> {
        self.check_dim(x_old)?;
        if self.count == 0 {
            return Err(Error::EmptyRevert);
        }
        if self.count == 1 {
            *self = Self::new(self.dim);
            return Ok(());
        }
        let count_new = (self.count - 1) as f64;
        let delta_cur: Vec<f64> = x_old.iter().zip(&self.mean).map(|(xi, mi)| xi - mi).collect();
        for (mi, d) in self.mean.iter_mut().zip(&delta_cur) {
            *mi -= d / count_new;
        }
        let delta_prev: Vec<f64> = x_old.iter().zip(&self.mean).map(|(xi, mi)| xi - mi).collect();
        for i in 0..self.dim {
            for j in i..self.dim {
                let dec = delta_prev[i] * delta_cur[j];
                self.comoment[i * self.dim + j] -= dec;
                if i != j {
                    self.comoment[j * self.dim + i] -= dec;
                }
            }
        }
        self.count -= 1;
        Ok(())
    }

    /// Unbiased sample covariance `C / (n - 1)`; defined for `n >= 2`.
    pub fn covariance(&self) -> Result<Vec<f64>> {
        if self.count < 2 {
            return Err(Error::InsufficientSamples { required: 2, available: self.count });
        }
        let denom = (self.count - 1) as f64;
        Ok(self.comoment.iter().map(|c| c / denom).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-pass batch oracle for scalar streams.
    fn batch_uni(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    /// Two-pass batch oracle for vector streams: (mean, covariance).
    fn batch_multi(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let k = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; k];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut cov = vec![0.0; k * k];
        for r in rows {
            for i in 0..k {
                for j in 0..k {
                    cov[i * k + j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n - 1.0);
                }
            }
        }
        (mean, cov)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    #[test]
    fn first_sample() {
        let mut m = UnivariateMoments::new();
        m.update(5.0);
        assert_eq!(m.count(), 1.0);
        assert_eq!(m.mean(), 5.0);
        assert_eq!(m.comoment(), 0.0);
    }

    #[test]
    fn matches_two_pass_oracle() {
        let mut m = UnivariateMoments::new();
        for x in [1.0, 2.0, 3.0] {
            m.update(x);
        }
        let (mean, var) = batch_uni(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean(), mean);
        assert_eq!(m.variance().unwrap(), var);
        assert_eq!(var, 1.0);
    }

    #[test]
    fn cancellation_resistance() {
        // Large offset with tiny noise: the naive sum-of-squares path
        // loses all digits here; Welford should not.
        let n = 1_000_000usize;
        let xs: Vec<f64> = (0..n)
            .map(|i| 1e9 + 1e-3 * ((i % 7) as f64 - 3.0))
            .collect();
        let mut m = UnivariateMoments::new();
        for &x in &xs {
            m.update(x);
        }
        let (mean, var) = batch_uni(&xs);
        assert!(rel_err(m.mean(), mean) < 1e-12);
        assert!((m.variance().unwrap() - var).abs() / var < 1e-6);
    }

    #[test]
    fn revert_is_inverse() {
        let mut m = UnivariateMoments::new();
        for x in [3.0, -1.5, 0.25] {
            m.update(x);
        }
        let saved = m.clone();
        m.update(7.125);
        m.revert(7.125).unwrap();
        assert!(rel_err(m.mean(), saved.mean()) < 1e-12);
        assert!((m.comoment() - saved.comoment()).abs() < 1e-12 * saved.comoment().abs().max(1.0));
        assert_eq!(m.count(), saved.count());
    }

    #[test]
    fn revert_first_of_stream() {
        let mut m = UnivariateMoments::new();
        for x in [1.0, 2.0, 3.0, 4.0] {
            m.update(x);
        }
        m.revert(1.0).unwrap();
        let (mean, var) = batch_uni(&[2.0, 3.0, 4.0]);
        assert!(rel_err(m.mean(), mean) < 1e-12);
        assert!(rel_err(m.variance().unwrap(), var) < 1e-12);
        assert_eq!(mean, 3.0);
        assert_eq!(var, 1.0);
    }

    #[test]
    fn revert_to_empty_resets() {
        let mut m = UnivariateMoments::new();
        m.update(7.0);
        m.revert(7.0).unwrap();
        assert_eq!(m, UnivariateMoments::new());
        assert!(matches!(m.revert(1.0), Err(Error::EmptyRevert)));
    }

    #[test]
    fn variance_gated_below_two() {
        let mut m = UnivariateMoments::new();
        assert!(m.variance().is_err());
        m.update(1.0);
        assert!(m.variance().is_err());
        m.update(2.0);
        assert!(m.variance().is_ok());
    }

    #[test]
    fn weighted_zero_is_identity() {
        let mut m = UnivariateMoments::new();
        m.update(2.0);
        let saved = m.clone();
        m.weighted_update(99.0, 0.0).unwrap();
        assert_eq!(m, saved);
    }

    #[test]
    fn weighted_one_is_plain_update() {
        let mut a = UnivariateMoments::new();
        let mut b = UnivariateMoments::new();
        for x in [1.0, 4.0, 2.5, -3.0] {
            a.update(x);
            b.weighted_update(x, 1.0).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn half_weights_accumulate() {
        let mut half = UnivariateMoments::new();
        half.weighted_update(4.0, 0.5).unwrap();
        half.weighted_update(4.0, 0.5).unwrap();
        let mut full = UnivariateMoments::new();
        full.weighted_update(4.0, 1.0).unwrap();
        assert_eq!(half.mean(), 4.0);
        assert_eq!(full.mean(), 4.0);
        assert!((half.count() - full.count()).abs() < 1e-15);
    }

    #[test]
    fn weight_out_of_range() {
        let mut m = UnivariateMoments::new();
        assert!(matches!(m.weighted_update(1.0, 1.5), Err(Error::InvalidWeight(_))));
        assert!(matches!(m.weighted_update(1.0, -0.1), Err(Error::InvalidWeight(_))));
    }

    #[test]
    fn constant_stream_zero_variance() {
        let mut m = UnivariateMoments::new();
        for _ in 0..100 {
            m.update(3.25);
        }
        assert_eq!(m.variance().unwrap(), 0.0);
    }

    #[test]
    fn multi_two_point_stream() {
        let mut m = MultivariateMoments::new(2);
        m.update(&[0.0, 0.0]).unwrap();
        m.update(&[2.0, 2.0]).unwrap();
        assert_eq!(m.mean(), &[1.0, 1.0]);
        assert_eq!(m.covariance().unwrap(), vec![2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn multi_single_sample() {
        let mut m = MultivariateMoments::new(3);
        m.update(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(m.mean(), &[1.0, -2.0, 0.5]);
        assert!(m.comoment().iter().all(|&c| c == 0.0));
        assert!(m.covariance().is_err());
    }

    #[test]
    fn multi_dimension_mismatch() {
        let mut m = MultivariateMoments::new(2);
        assert!(matches!(m.update(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.revert(&[1.0, 2.0, 3.0]), Err(Error::DimensionMismatch { .. })));
    }

    fn pseudo_stream(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
        // Cheap deterministic generator; distribution is irrelevant here.
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        (0..n)
            .map(|_| (0..k).map(|j| 10.0 * next() + j as f64).collect())
            .collect()
    }

    #[test]
    fn multi_matches_two_pass_oracle() {
        let rows = pseudo_stream(500, 8, 42);
        let mut m = MultivariateMoments::new(8);
        for r in &rows {
            m.update(r).unwrap();
        }
        let (mean, cov) = batch_multi(&rows);
        for (a, b) in m.mean().iter().zip(&mean) {
            assert!(rel_err(*a, *b) < 1e-12);
        }
        let got = m.covariance().unwrap();
        let num: f64 = got.iter().zip(&cov).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = cov.iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!(num / den < 1e-9);
    }

    #[test]
    fn multi_window_semantics() {
        let rows = pseudo_stream(100, 4, 7);
        let mut m = MultivariateMoments::new(4);
        for r in &rows {
            m.update(r).unwrap();
        }
        for r in &rows[..40] {
            m.revert(r).unwrap();
        }
        let (mean, cov) = batch_multi(&rows[40..]);
        for (a, b) in m.mean().iter().zip(&mean) {
            assert!(rel_err(*a, *b) < 1e-9);
        }
        let got = m.covariance().unwrap();
        for (a, b) in got.iter().zip(&cov) {
            assert!((a - b).abs() < 1e-9 * den_scale(&cov));
        }
    }

    fn den_scale(cov: &[f64]) -> f64 {
        cov.iter().fold(1.0f64, |m, c| m.max(c.abs()))
    }

    #[test]
    fn multi_revert_below_two_errors_covariance() {
        let mut m = MultivariateMoments::new(2);
        m.update(&[1.0, 2.0]).unwrap();
        m.update(&[3.0, 4.0]).unwrap();
        m.revert(&[1.0, 2.0]).unwrap();
        assert!(m.covariance().is_err());
        m.revert(&[3.0, 4.0]).unwrap();
        assert_eq!(m.count(), 0);
        assert!(matches!(m.revert(&[0.0, 0.0]), Err(Error::EmptyRevert)));
    }

    #[test]
    fn symmetry_preserved_under_interleaving() {
        let rows = pseudo_stream(200, 5, 11);
        let mut m = MultivariateMoments::new(5);
        for (i, r) in rows.iter().enumerate() {
            m.update(r).unwrap();
            if i % 3 == 2 {
                m.revert(&rows[i - 2]).unwrap();
            }
        }
        let c = m.comoment();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(c[i * 5 + j], c[j * 5 + i]);
            }
        }
    }
}
