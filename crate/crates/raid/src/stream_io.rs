//! Stream ingestion, record emission and detector snapshots.
//!
//! Input is CSV with a header (configurable delimiter) or JSON-lines
//! with named fields; the format is sniffed from the first byte.
//! Records go out as JSON-lines, one object per sample. Snapshots are
//! single self-describing JSON documents with a mandatory version.

use std::io::{BufRead, BufReader, Read, Write};

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::detector::{DetectionRecord, Detector, Observation};
use crate::error::{Error, Result};

pub const SNAPSHOT_VERSION: u32 = 1;

/// How the timestamp column is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampFormat {
    Iso8601,
    EpochSeconds,
    EpochMillis,
}

impl TimestampFormat {
    /// Parse one timestamp cell into epoch seconds.
    fn parse(&self, raw: &str) -> Option<f64> {
        match self {
            TimestampFormat::Iso8601 => parse_iso8601(raw),
            TimestampFormat::EpochSeconds => raw.trim().parse().ok().filter(|v: &f64| v.is_finite()),
            TimestampFormat::EpochMillis => raw
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(|v| v / 1000.0),
        }
    }
}

fn parse_iso8601(raw: &str) -> Option<f64> {
    let s = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9);
    }
    // Space-separated historian exports without a zone, seconds
    // optionally fractional (the SKAB layout).
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M", "%Y-%m-%d"] {
        if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc().timestamp() as f64
                + naive.and_utc().timestamp_subsec_nanos() as f64 * 1e-9);
        }
        if fmt == "%Y-%m-%d" {
            if let Ok(d) = chrono::NaiveDate::parse_from_str(s, fmt) {
                let naive = d.and_hms_opt(0, 0, 0).expect("midnight");
                return Some(naive.and_utc().timestamp() as f64);
            }
        }
    }
    None
}

/// Column mapping from a tabular source into observations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSchema {
    pub timestamp_column: String,
    /// Ordered value columns; order fixes the coordinate order.
    pub value_columns: Vec<String>,
    pub timestamp_format: TimestampFormat,
    /// CSV field delimiter; ignored for JSON-lines input.
    pub delimiter: u8,
}

impl StreamSchema {
    pub fn new(timestamp_column: impl Into<String>, value_columns: Vec<String>) -> Result<Self> {
        let schema = Self {
            timestamp_column: timestamp_column.into(),
            value_columns,
            timestamp_format: TimestampFormat::Iso8601,
            delimiter: b',',
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn with_format(mut self, f: TimestampFormat) -> Self {
        self.timestamp_format = f;
        self
    }

    pub fn with_delimiter(mut self, d: u8) -> Self {
        self.delimiter = d;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.value_columns.is_empty() {
            return Err(Error::InvalidConfig("no value columns".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.value_columns {
            if !seen.insert(c) {
                return Err(Error::InvalidConfig(format!("duplicate value column {c:?}")));
            }
            if *c == self.timestamp_column {
                return Err(Error::InvalidConfig(
                    "timestamp column listed among value columns".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A parsed stream plus ingestion diagnostics.
#[derive(Debug, Clone)]
pub struct ParsedStream {
    pub observations: Vec<Observation>,
    /// Labels from the requested label column, when one was given and
    /// present; aligned with `observations`.
    pub labels: Option<Vec<u8>>,
    /// Rows dropped for unparseable timestamps or non-numeric values.
    pub skipped_rows: usize,
}

/// Read observations from CSV-with-header or JSON-lines. Malformed
/// rows are skipped and counted, not fatal; zero parseable rows is.
pub fn read_stream<R: Read>(
    source: R,
    schema: &StreamSchema,
    label_column: Option<&str>,
) -> Result<ParsedStream> {
    schema.validate()?;
    let mut reader = BufReader::new(source);
    let mut head = [0u8; 1];
    let n = peek_first_byte(&mut reader, &mut head)?;
    let parsed = if n > 0 && head[0] == b'{' {
        read_jsonl(reader, schema, label_column)?
    } else {
        read_csv(reader, schema, label_column)?
    };
    if parsed.observations.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok(parsed)
}

fn peek_first_byte<R: Read>(reader: &mut BufReader<R>, head: &mut [u8; 1]) -> Result<usize> {
    let buf = reader.fill_buf()?;
    if buf.is_empty() {
        return Ok(0);
    }
    head[0] = buf[0];
    Ok(1)
}

fn read_csv<R: Read>(
    reader: R,
    schema: &StreamSchema,
    label_column: Option<&str>,
) -> Result<ParsedStream> {
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .flexible(true)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let ts_idx = find(&schema.timestamp_column)
        .ok_or_else(|| Error::MissingColumn(schema.timestamp_column.clone()))?;
    let val_idx: Vec<usize> = schema
        .value_columns
        .iter()
        .map(|c| find(c).ok_or_else(|| Error::MissingColumn(c.clone())))
        .collect::<Result<_>>()?;
    let label_idx = match label_column {
        Some(c) => Some(find(c).ok_or_else(|| Error::MissingColumn(c.to_string()))?),
        None => None,
    };

    let mut out = ParsedStream {
        observations: Vec::new(),
        labels: label_idx.map(|_| Vec::new()),
        skipped_rows: 0,
    };
    for row in csv.records() {
        let row = row?;
        let Some(ts) = row.get(ts_idx).and_then(|c| schema.timestamp_format.parse(c)) else {
            out.skipped_rows += 1;
            continue;
        };
        let mut values = Vec::with_capacity(val_idx.len());
        let mut ok = true;
        for &i in &val_idx {
            match row.get(i).and_then(|c| c.trim().parse::<f64>().ok()) {
                Some(v) if v.is_finite() => values.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            out.skipped_rows += 1;
            continue;
        }
        let label = match label_idx {
            Some(i) => match row.get(i).and_then(parse_label) {
                Some(l) => Some(l),
                None => {
                    out.skipped_rows += 1;
                    continue;
                }
            },
            None => None,
        };
        out.observations.push(Observation { timestamp: ts, values });
        if let (Some(labels), Some(l)) = (out.labels.as_mut(), label) {
            labels.push(l);
        }
    }
    Ok(out)
}

fn parse_label(cell: &str) -> Option<u8> {
    match cell.trim().parse::<f64>().ok()? {
        v if v == 0.0 => Some(0),
        v if v == 1.0 => Some(1),
        _ => None,
    }
}

fn read_jsonl<R: BufRead>(
    reader: R,
    schema: &StreamSchema,
    label_column: Option<&str>,
) -> Result<ParsedStream> {
    let mut out = ParsedStream {
        observations: Vec::new(),
        labels: label_column.map(|_| Vec::new()),
        skipped_rows: 0,
    };
    let mut any_line = false;
    let mut saw_columns = false;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        any_line = true;
        let Ok(obj) = serde_json::from_str::<Value>(&line) else {
            out.skipped_rows += 1;
            continue;
        };
        let ts = obj.get(&schema.timestamp_column).and_then(|v| match v {
            Value::String(s) => schema.timestamp_format.parse(s),
            Value::Number(n) => match schema.timestamp_format {
                TimestampFormat::EpochMillis => n.as_f64().map(|v| v / 1000.0),
                _ => n.as_f64(),
            },
            _ => None,
        });
        let values: Option<Vec<f64>> = schema
            .value_columns
            .iter()
            .map(|c| obj.get(c).and_then(Value::as_f64).filter(|v| v.is_finite()))
            .collect();
        if obj.get(&schema.timestamp_column).is_some() {
            saw_columns = true;
        }
        let label = label_column.map(|c| {
            obj.get(c)
                .and_then(Value::as_f64)
                .and_then(|v| if v == 0.0 { Some(0) } else if v == 1.0 { Some(1) } else { None })
        });
        match (ts, values, label) {
            (Some(ts), Some(values), None) => {
                out.observations.push(Observation { timestamp: ts, values })
            }
            (Some(ts), Some(values), Some(Some(l))) => {
                out.observations.push(Observation { timestamp: ts, values });
                out.labels.as_mut().expect("label column requested").push(l);
            }
            _ => out.skipped_rows += 1,
        }
    }
    if any_line && !saw_columns {
        return Err(Error::MissingColumn(schema.timestamp_column.clone()));
    }
    Ok(out)
}

/// Write records as JSON-lines; returns the number of lines written.
/// serde_json's float formatting round-trips every f64 exactly.
pub fn write_records<W: Write>(sink: &mut W, records: &[DetectionRecord]) -> Result<usize> {
    for r in records {
        serde_json::to_writer(&mut *sink, r)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(records.len())
}

/// Parse a record stream written by [`write_records`].
pub fn read_records<R: Read>(source: R) -> Result<Vec<DetectionRecord>> {
    let reader = BufReader::new(source);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SnapshotDoc {
    version: u32,
    detector: Detector,
}

/// Serialize the full detector state to a self-describing document.
pub fn snapshot_save(detector: &Detector) -> Result<String> {
    Ok(serde_json::to_string(&SnapshotDoc {
        version: SNAPSHOT_VERSION,
        detector: detector.clone(),
    })?)
}

/// Restore a detector from a snapshot document. The restored instance
/// continues the stream bit-identically.
pub fn snapshot_load(document: &str) -> Result<Detector> {
    let doc: SnapshotDoc = serde_json::from_str(document)
        .map_err(|e| Error::SnapshotCorrupt(e.to_string()))?;
    if doc.version != SNAPSHOT_VERSION {
        return Err(Error::SnapshotVersion(doc.version));
    }
    doc.detector.shape_check()?;
    Ok(doc.detector)
}
