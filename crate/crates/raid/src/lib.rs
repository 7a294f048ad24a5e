//! Streaming multivariate anomaly detection.
//!
//! Models a sensor stream as a time-expiring multivariate normal
//! distribution: moments are maintained by Welford's forward and
//! reverse recurrences, the global anomaly score is the log of the
//! joint CDF at each observation, and per-signal dynamic process
//! limits isolate the offending coordinates. A changepoint test lets
//! the model re-learn through sustained shifts, and a univariate model
//! of inter-arrival times flags sampling losses.

pub mod detector;
pub mod error;
pub mod evaluation;
pub mod gaussian;
pub mod stream_io;
pub mod streaming_moments;

pub use detector::{DetectionRecord, Detector, DetectorConfig, Observation};
pub use error::{Error, Result};
