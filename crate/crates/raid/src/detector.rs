//! Online detection and identification state machine.
//!
//! One detector owns one stream. Each step scores the observation
//! against the current Gaussian model, derives per-signal dynamic
//! process limits, decides whether to learn from the sample, flags
//! changepoints when the trailing anomaly window saturates, expires
//! samples older than the expiration period, and tracks inter-arrival
//! times for sampling-loss detection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{mvn_log_cdf, uni_cdf, uni_ppf, GaussianParams, LOG_PROB_FLOOR};
use crate::streaming_moments::{MultivariateMoments, UnivariateMoments};

/// Relative floor below which a marginal variance is treated as
/// degenerate when standardizing.
const VARIANCE_FLOOR: f64 = 1e-12;

/// Detector hyperparameters. Durations are seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Expiration period t_e: how long a sample stays in the model.
    pub expiration_period: f64,
    /// Log-CDF threshold T; scores below it flag a system anomaly.
    pub threshold: f64,
    /// Adaptation period t_a; defaults to t_e / 4.
    pub adaptation_period: Option<f64>,
    /// Grace period; defaults to 3 t_e / 4.
    pub grace_period: Option<f64>,
    /// Coverage quantile for limits and the adaptation cut.
    pub q: f64,
    /// Quasi-Monte Carlo budget for the joint CDF.
    pub max_points: usize,
    /// Early-exit target for the CDF standard error.
    pub target_error: f64,
    /// Seed for the randomized integration.
    pub seed: u64,
    /// Diagonal boost applied when the covariance fails to factor.
    /// `None` derives 1e-9 * trace / k at evaluation time.
    pub regularization: Option<f64>,
    /// Score with log min(F, 1 - F) + log 2 instead of log F, so that
    /// large excursions upward also drive the score down.
    pub two_sided_score: bool,
}

impl DetectorConfig {
    pub fn new(expiration_period: f64, threshold: f64) -> Self {
        Self {
            expiration_period,
            threshold,
            adaptation_period: None,
            grace_period: None,
            q: 0.9973,
            max_points: 16_384,
            target_error: 1e-6,
            seed: 0,
            regularization: None,
            two_sided_score: false,
        }
    }

    pub fn adaptation_period(&self) -> f64 {
        self.adaptation_period.unwrap_or(self.expiration_period / 4.0)
    }

    pub fn grace_period(&self) -> f64 {
        self.grace_period.unwrap_or(0.75 * self.expiration_period)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.expiration_period > 0.0) {
            return Err(Error::InvalidConfig("expiration period must be positive".into()));
        }
        let ta = self.adaptation_period();
        if !(ta > 0.0 && ta <= self.expiration_period) {
            return Err(Error::InvalidConfig(
                "adaptation period must satisfy 0 < t_a <= t_e".into(),
            ));
        }
        if !(self.grace_period() >= 0.0 && self.grace_period().is_finite()) {
            return Err(Error::InvalidConfig("grace period must be finite and >= 0".into()));
        }
        if !(self.q > 0.5 && self.q < 1.0) {
            return Err(Error::InvalidConfig("q must lie in (0.5, 1)".into()));
        }
        if self.threshold.is_nan() {
            return Err(Error::InvalidConfig("threshold must be a number".into()));
        }
        Ok(())
    }
}

/// One timestamped input vector. Timestamps are epoch seconds and must
/// strictly increase within a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub timestamp: f64,
    pub values: Vec<f64>,
}

/// Full per-sample diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    #[serde(rename = "ts")]
    pub timestamp: f64,
    /// Log joint CDF of the observation under the pre-update model.
    pub score: f64,
    /// System-level anomaly flag.
    pub y_g: bool,
    /// Per-signal limit breaches.
    pub y_s: Vec<bool>,
    /// Sampling-interval anomaly.
    pub y_t: bool,
    /// Changepoint adaptation fired on this step.
    pub y_c: bool,
    /// Lower dynamic process limits.
    pub x_l: Vec<f64>,
    /// Upper dynamic process limits.
    pub x_u: Vec<f64>,
    pub in_grace: bool,
    /// Live model population after this step.
    pub n: usize,
}

/// Sampling-interval sub-detector: a one-pass univariate model of
/// inter-arrival times, never reverted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SamplingModel {
    moments: UnivariateMoments,
}

impl SamplingModel {
    fn new() -> Self {
        Self { moments: UnivariateMoments::new() }
    }

    /// Classify one inter-arrival gap, then learn from it. Anomalous
    /// gaps still contribute, weighted down by how extreme they are.
    fn step(&mut self, dt: f64, q: f64) -> Result<bool> {
        if !(dt > 0.0) {
            return Err(Error::NonPositiveInterval(dt));
        }
        let mean = self.moments.mean();
        let (y_t, cdf) = match self.moments.variance() {
            Ok(var) if var > VARIANCE_FLOOR * mean.powi(2).max(1.0) => {
                let c = uni_cdf(dt, mean, var)?;
                (c > q, c)
            }
            Ok(_) => {
                // All gaps identical so far: only a clear excess over
                // the learned mean counts as a loss.
                let y = dt > mean * (1.0 + 1e-6);
                (y, if y { 1.0 } else { 0.0 })
            }
            Err(_) => (false, 0.0),
        };
        let w = if y_t { 1.0 - cdf } else { 1.0 };
        self.moments.weighted_update(dt, w)?;
        Ok(y_t)
    }
}

/// The detector. `step` must be externally serialized per instance;
/// independent instances are independent streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    config: DetectorConfig,
    dim: usize,
    start_timestamp: f64,
    last_timestamp: f64,
    moments: MultivariateMoments,
    /// Incorporated observations awaiting expiration, oldest first.
    buffer: VecDeque<Observation>,
    /// Trailing (timestamp, y_g) pairs covering the adaptation period.
    anomaly_window: VecDeque<(f64, bool)>,
    sampling: SamplingModel,
}

/// Saturation test on the trailing anomaly window: adaptation runs on
/// an outlier when the anomalous fraction exceeds `2 (q - 0.5)`.
/// An empty window never passes.
pub fn adaptation_test<'a, I>(window: I, q: f64) -> bool
where
    I: IntoIterator<Item = &'a bool>,
{
    let mut total = 0usize;
    let mut hits = 0usize;
    for y in window {
        total += 1;
        hits += *y as usize;
    }
    total > 0 && hits as f64 / total as f64 > 2.0 * (q - 0.5)
}

impl Detector {
    /// Initialize on the first observation and emit its record. The
    /// model starts with the observation as mean and unit covariance;
    /// data-derived covariance takes over once a second sample lands.
    pub fn new(config: DetectorConfig, first: Observation) -> Result<(Self, DetectionRecord)> {
        config.validate()?;
        let dim = first.values.len();
        if dim == 0 {
            return Err(Error::InvalidConfig("empty observation vector".into()));
        }
        let mut moments = MultivariateMoments::new(dim);
        moments.update(&first.values)?;
        let mut detector = Self {
            config,
            dim,
            start_timestamp: first.timestamp,
            last_timestamp: first.timestamp,
            moments,
            buffer: VecDeque::from([first.clone()]),
            anomaly_window: VecDeque::new(),
            sampling: SamplingModel::new(),
        };
        let record = detector.initial_record(&first)?;
        detector.anomaly_window.push_back((first.timestamp, record.y_g));
        Ok((detector, record))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn population(&self) -> usize {
        self.moments.count()
    }

    pub fn moments(&self) -> &MultivariateMoments {
        &self.moments
    }

    #[cfg(test)]
    pub(crate) fn buffer(&self) -> &VecDeque<Observation> {
        &self.buffer
    }

    pub(crate) fn shape_check(&self) -> Result<()> {
        let k = self.dim;
        let ok = k > 0
            && self.moments.dim() == k
            && self.moments.mean().len() == k
            && self.moments.comoment().len() == k * k
            && self.buffer.iter().all(|o| o.values.len() == k)
            && self.moments.count() <= self.buffer.len() + 1;
        if ok {
            Ok(())
        } else {
            Err(Error::SnapshotCorrupt("inconsistent dimensions".into()))
        }
    }

    fn in_grace(&self, timestamp: f64) -> bool {
        timestamp < self.start_timestamp + self.config.grace_period()
    }

    fn regularization(&self) -> f64 {
        self.config.regularization.unwrap_or_else(|| {
            let c = self.moments.comoment();
            let n = self.moments.count();
            if n >= 2 {
                let trace: f64 = (0..self.dim).map(|i| c[i * self.dim + i]).sum();
                (1e-9 * trace / ((n - 1) as f64 * self.dim as f64)).max(1e-300)
            } else {
                1e-9
            }
        })
    }

    /// Current scoring snapshot: data-derived covariance when the
    /// population allows it, identity otherwise.
    fn scoring_params(&self) -> Result<GaussianParams> {
        let cov = match self.moments.covariance() {
            Ok(c) => c,
            Err(_) => {
                let mut ident = vec![0.0; self.dim * self.dim];
                for i in 0..self.dim {
                    ident[i * self.dim + i] = 1.0;
                }
                ident
            }
        };
        Ok(GaussianParams::new(self.moments.mean().to_vec(), cov)?
            .with_regularization(self.regularization()))
    }

    fn score(&self, values: &[f64], params: &GaussianParams) -> Result<f64> {
        let est = mvn_log_cdf(
            values,
            params,
            self.config.max_points,
            self.config.target_error,
            self.config.seed,
        )?;
        if self.config.two_sided_score {
            let f = est.log_prob.exp();
            let tail = f.min(1.0 - f).max(0.0);
            let score = if tail > 0.0 { (2.0 * tail).ln() } else { LOG_PROB_FLOOR };
            Ok(score.clamp(LOG_PROB_FLOOR, 0.0))
        } else {
            Ok(est.log_prob)
        }
    }

    /// Per-signal dynamic process limits: the central `q` mass of each
    /// marginal, i.e. quantiles (1 - q') and q' with q' = (1 + q) / 2.
    pub fn limits(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.moments.count() < 2 {
            return Err(Error::InsufficientSamples {
                required: 2,
                available: self.moments.count(),
            });
        }
        self.limits_with(&self.moments.covariance()?)
    }

    fn limits_with(&self, cov: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let q_side = 0.5 * (1.0 + self.config.q);
        let mean = self.moments.mean();
        let mut lower = Vec::with_capacity(self.dim);
        let mut upper = Vec::with_capacity(self.dim);
        for j in 0..self.dim {
            let raw = cov[j * self.dim + j];
            let var = if raw < VARIANCE_FLOOR * mean[j].powi(2).max(1.0) {
                VARIANCE_FLOOR
            } else {
                raw
            };
            lower.push(uni_ppf(1.0 - q_side, mean[j], var)?);
            upper.push(uni_ppf(q_side, mean[j], var)?);
        }
        Ok((lower, upper))
    }

    fn initial_record(&mut self, first: &Observation) -> Result<DetectionRecord> {
        let params = self.scoring_params()?;
        let score = self.score(&first.values, &params)?;
        let in_grace = self.in_grace(first.timestamp);
        let y_g = !in_grace && score < self.config.threshold;
        let (x_l, x_u) = self.limits_with(params.cov())?;
        let y_s = first
            .values
            .iter()
            .zip(x_l.iter().zip(&x_u))
            .map(|(v, (lo, hi))| v < lo || v > hi)
            .collect();
        Ok(DetectionRecord {
            timestamp: first.timestamp,
            score,
            y_g,
            y_s,
            y_t: false,
            y_c: false,
            x_l,
            x_u,
            in_grace,
            n: self.moments.count(),
        })
    }

    /// Process one observation and emit its diagnosis.
    pub fn step(&mut self, obs: Observation) -> Result<DetectionRecord> {
        if obs.values.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: obs.values.len() });
        }
        if !(obs.timestamp > self.last_timestamp) {
            return Err(Error::NonIncreasingTimestamp {
                last: self.last_timestamp,
                got: obs.timestamp,
            });
        }

        let dt = obs.timestamp - self.last_timestamp;
        let y_t = self.sampling.step(dt, self.config.q)?;

        let params = self.scoring_params()?;
        let score = self.score(&obs.values, &params)?;
        let in_grace = self.in_grace(obs.timestamp);
        let y_g = !in_grace && score < self.config.threshold;

        let (x_l, x_u) = self.limits_with(params.cov())?;
        let y_s: Vec<bool> = obs
            .values
            .iter()
            .zip(x_l.iter().zip(&x_u))
            .map(|(v, (lo, hi))| v < lo || v > hi)
            .collect();

        // Trailing anomaly window over the adaptation period,
        // including the current decision.
        let cutoff = obs.timestamp - self.config.adaptation_period();
        while self.anomaly_window.front().is_some_and(|(ts, _)| *ts < cutoff) {
            self.anomaly_window.pop_front();
        }
        self.anomaly_window.push_back((obs.timestamp, y_g));

        // Learn on normal samples; on anomalies only when the window
        // has saturated, which marks a changepoint.
        let mut y_c = false;
        if !y_g {
            self.moments.update(&obs.values)?;
            self.buffer.push_back(obs.clone());
        } else if adaptation_test(self.anomaly_window.iter().map(|(_, y)| y), self.config.q) {
            self.moments.update(&obs.values)?;
            self.buffer.push_back(obs.clone());
            y_c = !in_grace;
        }

        // Expire samples past t_e, but never drop the population below
        // the minimum that keeps the covariance defined.
        let expire_before = obs.timestamp - self.config.expiration_period;
        while self.moments.count() > 2
            && self.buffer.front().is_some_and(|o| o.timestamp < expire_before)
        {
            let old = self.buffer.pop_front().expect("checked non-empty");
            self.moments.revert(&old.values)?;
        }

        self.last_timestamp = obs.timestamp;
        Ok(DetectionRecord {
            timestamp: obs.timestamp,
            score,
            y_g,
            y_s,
            y_t,
            y_c,
            x_l,
            x_u,
            in_grace,
            n: self.moments.count(),
        })
    }
}
