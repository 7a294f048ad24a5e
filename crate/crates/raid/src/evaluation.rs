//! Labeled-stream benchmarking and synthetic scenario generation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectionRecord, Detector, DetectorConfig, Observation};
use crate::error::{Error, Result};

/// Observations with aligned binary ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub observations: Vec<Observation>,
    pub labels: Vec<u8>,
}

impl LabeledStream {
    pub fn new(observations: Vec<Observation>, labels: Vec<u8>) -> Result<Self> {
        if observations.len() != labels.len() {
            return Err(Error::InvalidScenario(format!(
                "{} observations vs {} labels",
                observations.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidScenario("labels must be 0 or 1".into()));
        }
        Ok(Self { observations, labels })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Pointwise detection metrics over one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub avg_latency_ms: f64,
    pub samples: usize,
    /// Set when a 0/0 metric was mapped to 0 (no predicted or no
    /// actual positives).
    pub degenerate: bool,
}

impl MetricsReport {
    /// Derive rates from raw counts with the 0/0 -> 0 policy.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize, avg_latency_ms: f64) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricsReport {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            avg_latency_ms,
            samples: tp + fp + fn_ + tn,
            degenerate: tp + fp == 0 || tp + fn_ == 0,
        }
    }

    /// Plain-text table, percentages in display like the usual
    /// benchmark layout.
    pub fn render_table(&self) -> String {
        format!(
            "metric            value\n\
             ----------------  ---------\n\
             f1                {:8.2}%\n\
             recall            {:8.2}%\n\
             precision         {:8.2}%\n\
             avg latency       {:8.3} ms\n\
             samples           {:8}\n\
             tp/fp/fn/tn       {}/{}/{}/{}\n",
            self.f1 * 100.0,
            self.recall * 100.0,
            self.precision * 100.0,
            self.avg_latency_ms,
            self.samples,
            self.tp,
            self.fp,
            self.fn_,
            self.tn,
        )
    }
}

/// Outcome of one detector pass over a labeled stream.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricsReport,
    pub records: Vec<DetectionRecord>,
}

/// Run the detector once over the stream (no lookahead) and compare
/// the system anomaly flag to the labels pointwise. Latency is wall
/// clock around each step, initialization included.
pub fn score_run(config: &DetectorConfig, stream: &LabeledStream) -> Result<RunOutcome> {
    score_run_with(config, stream, false)
}

/// As [`score_run`], optionally excluding grace-period samples from
/// the metric counts (records are still emitted for them).
pub fn score_run_with(
    config: &DetectorConfig,
    stream: &LabeledStream,
    exclude_grace: bool,
) -> Result<RunOutcome> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut records = Vec::with_capacity(stream.len());
    let start = Instant::now();
    let (mut detector, first_record) =
        Detector::new(config.clone(), stream.observations[0].clone())?;
    records.push(first_record);
    for obs in &stream.observations[1..] {
        records.push(detector.step(obs.clone())?);
    }
    let elapsed = start.elapsed();

    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (rec, &label) in records.iter().zip(&stream.labels) {
        if exclude_grace && rec.in_grace {
            continue;
        }
        match (rec.y_g, label == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let avg_latency_ms = elapsed.as_secs_f64() * 1e3 / stream.len() as f64;
    Ok(RunOutcome {
        report: MetricsReport::from_counts(tp, fp, fn_, tn, avg_latency_ms),
        records,
    })
}

/// Synthetic event kinds mirroring the phenomena the detector targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Isolated point outliers.
    Spikes,
    /// One permanent mean shift.
    MeanShift,
    /// One long gap in the timestamps; values stay nominal.
    PacketLoss,
    /// Slow linear drift of the mean; no labeled events.
    Drift,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spikes" => Ok(Self::Spikes),
            "mean_shift" => Ok(Self::MeanShift),
            "packet_loss" => Ok(Self::PacketLoss),
            "drift" => Ok(Self::Drift),
            other => Err(Error::InvalidScenario(format!("unknown kind {other:?}"))),
        }
    }
}

/// Generator parameters; defaults give a desk-scale stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub dim: usize,
    pub samples: usize,
    /// Nominal sampling interval, seconds.
    pub interval: f64,
    /// Number of spikes (spikes kind).
    pub events: usize,
    /// Event magnitude in units of the base standard deviation.
    pub magnitude_sigma: f64,
    /// Index of the shift or gap (mean_shift, packet_loss kinds).
    pub event_index: usize,
    /// Gap length in steps (packet_loss kind).
    pub gap_steps: usize,
    /// How many post-shift samples carry a positive label before the
    /// ground truth declares the new regime adopted (mean_shift kind).
    pub label_transient: usize,
    /// First index eligible for injected events (spikes kind), so a
    /// calibration prefix stays clean.
    pub clean_prefix: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            dim: 2,
            samples: 5_000,
            interval: 60.0,
            events: 25,
            magnitude_sigma: 8.0,
            event_index: 2_500,
            gap_steps: 1_440,
            label_transient: 100,
            clean_prefix: 500,
        }
    }
}

impl ScenarioParams {
    fn validate(&self, kind: ScenarioKind) -> Result<()> {
        if self.dim == 0 || self.samples < 2 || !(self.interval > 0.0) {
            return Err(Error::InvalidScenario(
                "need dim >= 1, samples >= 2 and a positive interval".into(),
            ));
        }
        match kind {
            ScenarioKind::Spikes => {
                if self.clean_prefix + self.events > self.samples {
                    return Err(Error::InvalidScenario("more spikes than eligible samples".into()));
                }
            }
            ScenarioKind::MeanShift | ScenarioKind::PacketLoss => {
                if self.event_index == 0 || self.event_index >= self.samples {
                    return Err(Error::InvalidScenario("event index outside the stream".into()));
                }
            }
            ScenarioKind::Drift => {}
        }
        Ok(())
    }
}

/// Generate a labeled stream; deterministic for a fixed seed.
pub fn synth_scenario(
    kind: ScenarioKind,
    params: &ScenarioParams,
    seed: u64,
) -> Result<LabeledStream> {
    params.validate(kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = params.dim;
    let n = params.samples;
    let mut observations = Vec::with_capacity(n);
    let mut labels = vec![0u8; n];

    let mut timestamps: Vec<f64> = (0..n).map(|i| i as f64 * params.interval).collect();
    if kind == ScenarioKind::PacketLoss {
        let gap = params.gap_steps as f64 * params.interval;
        for ts in timestamps.iter_mut().skip(params.event_index) {
            *ts += gap;
        }
        labels[params.event_index] = 1;
    }

    let spike_at: std::collections::HashSet<usize> = if kind == ScenarioKind::Spikes {
        let mut chosen = std::collections::HashSet::new();
        while chosen.len() < params.events {
            let idx = rng.gen_range(params.clean_prefix..n);
            chosen.insert(idx);
        }
        chosen
    } else {
        Default::default()
    };

    for (i, &ts) in timestamps.iter().enumerate() {
        let mut values: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        match kind {
            ScenarioKind::Spikes => {
                if spike_at.contains(&i) {
                    for v in &mut values {
                        *v += params.magnitude_sigma;
                    }
                    labels[i] = 1;
                }
            }
            ScenarioKind::MeanShift => {
                if i >= params.event_index {
                    for v in &mut values {
                        *v += params.magnitude_sigma;
                    }
                    if i < params.event_index + params.label_transient {
                        labels[i] = 1;
                    }
                }
            }
            ScenarioKind::Drift => {
                let slope = params.magnitude_sigma / n as f64;
                for v in &mut values {
                    *v += slope * i as f64;
                }
            }
            ScenarioKind::PacketLoss => {}
        }
        observations.push(Observation { timestamp: ts, values });
    }
    LabeledStream::new(observations, labels)
}

/// Grid-search the score threshold, one streaming pass per grid point.
/// Returns the argmax-F1 point (ties toward the larger threshold,
/// i.e. fewer alarms) and the full per-point report list.
pub fn sweep_threshold(
    config: &DetectorConfig,
    stream: &LabeledStream,
    grid: &[f64],
) -> Result<(f64, MetricsReport, Vec<(f64, MetricsReport)>)> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty threshold grid".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &t in grid {
        let mut cfg = config.clone();
        cfg.threshold = t;
        let outcome = score_run(&cfg, stream)?;
        rows.push((t, outcome.report));
    }
    let best = rows
        .iter()
        .cloned()
        .max_by(|(ta, ra), (tb, rb)| {
            ra.f1.partial_cmp(&rb.f1).expect("finite f1").then(
                ta.partial_cmp(tb).expect("finite threshold"),
            )
        })
        .expect("non-empty grid");
    Ok((best.0, best.1, rows))
}
