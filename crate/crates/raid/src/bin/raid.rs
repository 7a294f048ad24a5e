//! Command-line front end: stream detection, benchmarking, synthetic
//! scenario generation and threshold sweeps.
//!
//! stdout carries only data (records and reports); diagnostics go to
//! stderr. Exit codes: 0 success, 1 runtime failure, 2 flag errors.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use raid::detector::{DetectionRecord, Detector, DetectorConfig};
use raid::evaluation::{
    score_run_with, sweep_threshold, synth_scenario, LabeledStream, MetricsReport, ScenarioKind,
    ScenarioParams,
};
use raid::stream_io::{
    read_stream, snapshot_load, snapshot_save, write_records, ParsedStream, StreamSchema,
    TimestampFormat,
};

#[derive(Parser)]
#[command(name = "raid", version, about = "Streaming multivariate anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream an input file through one detector, emitting JSON-lines records.
    Run(RunArgs),
    /// Evaluate detection metrics against a labeled stream (file or directory).
    Bench(BenchArgs),
    /// Generate a labeled synthetic stream as CSV.
    Synth(SynthArgs),
    /// Grid-search the score threshold on a labeled stream.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Name of the timestamp column.
    #[arg(long, default_value = "timestamp")]
    timestamp_column: String,

    /// Comma-separated value columns, in coordinate order. Defaults to
    /// every column except the timestamp, label and changepoint columns.
    #[arg(long, value_delimiter = ',')]
    value_columns: Vec<String>,

    /// Timestamp encoding: iso8601, epoch_seconds or epoch_millis.
    #[arg(long, default_value = "iso8601")]
    timestamp_format: String,

    /// CSV field delimiter (single character).
    #[arg(long, default_value = ",")]
    delimiter: String,
}

#[derive(Args)]
struct DetectorArgs {
    /// Expiration period t_e (suffix s/m/h/d), e.g. "4d".
    #[arg(long)]
    expiration_period: String,

    /// Log-CDF anomaly threshold T.
    #[arg(long, allow_hyphen_values = true)]
    threshold: f64,

    /// Adaptation period t_a; defaults to t_e / 4.
    #[arg(long)]
    adaptation_period: Option<String>,

    /// Grace period; defaults to 3 t_e / 4.
    #[arg(long)]
    grace_period: Option<String>,

    /// Coverage quantile for limits and the adaptation cut.
    #[arg(long, default_value_t = 0.9973)]
    q: f64,

    /// Seed for the randomized CDF integration.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Score with log min(F, 1-F) + log 2 instead of log F.
    #[arg(long)]
    two_sided: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Input stream (CSV with header or JSON-lines).
    #[arg(long)]
    input: PathBuf,

    /// Output records file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,

    #[command(flatten)]
    schema: SchemaArgs,

    #[command(flatten)]
    detector: DetectorArgs,

    /// Optional label column to exclude from value inference.
    #[arg(long)]
    label_column: Option<String>,

    /// Resume from a saved detector snapshot.
    #[arg(long)]
    snapshot_in: Option<PathBuf>,

    /// Save the detector snapshot after the run.
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Labeled input: one file, or a directory of CSV files.
    #[arg(long)]
    input: PathBuf,

    /// Ground-truth label column.
    #[arg(long)]
    label_column: String,

    #[command(flatten)]
    schema: SchemaArgs,

    #[command(flatten)]
    detector: DetectorArgs,

    /// Drop grace-period samples from the metric counts.
    #[arg(long)]
    exclude_grace: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario kind: spikes, mean_shift, packet_loss or drift.
    #[arg(long)]
    kind: String,

    #[arg(long)]
    seed: u64,

    /// Output CSV; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,

    #[arg(long, default_value_t = 2)]
    dim: usize,

    #[arg(long, default_value_t = 5000)]
    samples: usize,

    /// Nominal sampling interval (suffix s/m/h/d).
    #[arg(long, default_value = "60s")]
    interval: String,

    /// Number of spikes (spikes kind).
    #[arg(long, default_value_t = 25)]
    events: usize,

    /// Event magnitude in base standard deviations.
    #[arg(long, default_value_t = 8.0)]
    magnitude_sigma: f64,

    /// Index of the shift or gap (mean_shift / packet_loss kinds).
    #[arg(long, default_value_t = 2500)]
    event_index: usize,

    /// Gap length in steps (packet_loss kind).
    #[arg(long, default_value_t = 1440)]
    gap_steps: usize,

    /// Post-shift samples labeled positive (mean_shift kind).
    #[arg(long, default_value_t = 100)]
    label_transient: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,

    #[arg(long)]
    label_column: String,

    /// Comma-separated threshold grid, e.g. "-50,-25,-10".
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Vec<f64>,

    #[command(flatten)]
    schema: SchemaArgs,

    #[command(flatten)]
    detector: DetectorArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

/// Parse "90s" / "15m" / "4h" / "4d" (or a bare number of seconds).
fn parse_duration(raw: &str) -> Result<f64, String> {
    let raw = raw.trim();
    let (value, mult) = match raw.chars().last() {
        Some('s') => (&raw[..raw.len() - 1], 1.0),
        Some('m') => (&raw[..raw.len() - 1], 60.0),
        Some('h') => (&raw[..raw.len() - 1], 3_600.0),
        Some('d') => (&raw[..raw.len() - 1], 86_400.0),
        _ => (raw, 1.0),
    };
    let seconds: f64 = value
        .parse()
        .map_err(|_| format!("invalid duration {raw:?} (expected e.g. 90s, 15m, 4h, 4d)"))?;
    if !(seconds > 0.0) {
        return Err(format!("duration {raw:?} must be positive"));
    }
    Ok(seconds * mult)
}

/// Flag-level failures exit with code 2, like clap's own errors.
fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn parse_format(raw: &str) -> Result<TimestampFormat, String> {
    match raw {
        "iso8601" => Ok(TimestampFormat::Iso8601),
        "epoch_seconds" => Ok(TimestampFormat::EpochSeconds),
        "epoch_millis" => Ok(TimestampFormat::EpochMillis),
        other => Err(format!("unknown timestamp format {other:?}")),
    }
}

fn build_detector_config(args: &DetectorArgs) -> Result<DetectorConfig, String> {
    let mut cfg = DetectorConfig::new(parse_duration(&args.expiration_period)?, args.threshold);
    if let Some(ta) = &args.adaptation_period {
        cfg.adaptation_period = Some(parse_duration(ta)?);
    }
    if let Some(g) = &args.grace_period {
        cfg.grace_period = Some(parse_duration(g)?);
    }
    cfg.q = args.q;
    cfg.seed = args.seed;
    cfg.two_sided_score = args.two_sided;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Resolve the schema against a concrete file: when no value columns
/// were given, take every header column except the timestamp, the
/// label column and any column named "changepoint".
fn resolve_schema(
    args: &SchemaArgs,
    label_column: Option<&str>,
    path: &Path,
) -> Result<StreamSchema, Box<dyn std::error::Error>> {
    let format = parse_format(&args.timestamp_format)?;
    let delimiter = match args.delimiter.as_bytes() {
        [b] => *b,
        _ => return Err("delimiter must be a single character".into()),
    };
    let value_columns = if args.value_columns.is_empty() {
        let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).from_path(path)?;
        let headers = reader.headers()?.clone();
        let cols: Vec<String> = headers
            .iter()
            .map(|h| h.trim().to_string())
            .filter(|h| {
                h != &args.timestamp_column
                    && Some(h.as_str()) != label_column
                    && h != "changepoint"
                    && !h.is_empty()
            })
            .collect();
        if cols.is_empty() {
            return Err("could not infer any value columns".into());
        }
        cols
    } else {
        args.value_columns.clone()
    };
    Ok(StreamSchema::new(args.timestamp_column.clone(), value_columns)?
        .with_format(format)
        .with_delimiter(delimiter))
}

fn read_input(
    path: &Path,
    schema: &StreamSchema,
    label_column: Option<&str>,
) -> Result<ParsedStream, Box<dyn std::error::Error>> {
    let file = File::open(path)?;
    let parsed = read_stream(file, schema, label_column)?;
    if parsed.skipped_rows > 0 {
        eprintln!("warning: skipped {} malformed rows in {}", parsed.skipped_rows, path.display());
    }
    Ok(parsed)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let config = match build_detector_config(&args.detector) {
        Ok(c) => c,
        Err(e) => return Ok(usage_error(&e)),
    };
    File::open(&args.input)?;
    let schema = match resolve_schema(&args.schema, args.label_column.as_deref(), &args.input) {
        Ok(s) => s,
        Err(e) => return Ok(usage_error(&e.to_string())),
    };
    let parsed = read_input(&args.input, &schema, args.label_column.as_deref())?;

    let mut records: Vec<DetectionRecord> = Vec::with_capacity(parsed.observations.len());
    let mut observations = parsed.observations.into_iter();
    let mut detector = match args.snapshot_in {
        Some(path) => {
            let mut doc = String::new();
            File::open(path)?.read_to_string(&mut doc)?;
            snapshot_load(&doc)?
        }
        None => {
            let first = observations.next().expect("read_stream guarantees rows");
            let (detector, first_record) = Detector::new(config, first)?;
            records.push(first_record);
            detector
        }
    };
    for obs in observations {
        records.push(detector.step(obs)?);
    }

    match &args.output {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            write_records(&mut out, &records)?;
        }
        None => {
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            write_records(&mut out, &records)?;
        }
    }
    if let Some(path) = &args.snapshot_out {
        std::fs::write(path, snapshot_save(&detector)?)?;
    }

    let anomalies = records.iter().filter(|r| r.y_g).count();
    let changepoints = records.iter().filter(|r| r.y_c).count();
    let sampling = records.iter().filter(|r| r.y_t).count();
    eprintln!(
        "{} samples: {} anomalies, {} changepoints, {} sampling anomalies",
        records.len(),
        anomalies,
        changepoints,
        sampling
    );
    Ok(ExitCode::SUCCESS)
}

fn labeled_csv_files(path: &Path) -> Result<Vec<PathBuf>, Box<dyn std::error::Error>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                // Unlabeled calibration data has no place in a benchmark.
                if p.file_name().is_some_and(|n| n == "anomaly-free") {
                    continue;
                }
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                files.push(p);
            }
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(format!("no CSV files under {}", path.display()).into());
    }
    Ok(files)
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let config = match build_detector_config(&args.detector) {
        Ok(c) => c,
        Err(e) => return Ok(usage_error(&e)),
    };
    let files = labeled_csv_files(&args.input)?;

    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    let mut total_latency = 0.0;
    let mut total_samples = 0usize;
    for file in &files {
        let schema = match resolve_schema(&args.schema, Some(&args.label_column), file) {
            Ok(s) => s,
            Err(e) => return Ok(usage_error(&e.to_string())),
        };
        let parsed = read_input(file, &schema, Some(&args.label_column))?;
        let labels = parsed.labels.expect("label column requested");
        let stream = LabeledStream::new(parsed.observations, labels)?;
        let outcome = score_run_with(&config, &stream, args.exclude_grace)?;
        let r = &outcome.report;
        tp += r.tp;
        fp += r.fp;
        fn_ += r.fn_;
        tn += r.tn;
        total_latency += r.avg_latency_ms * stream.len() as f64;
        total_samples += stream.len();
        eprintln!("{}: f1 {:.2}% over {} samples", file.display(), r.f1 * 100.0, stream.len());
    }
    let report = MetricsReport::from_counts(tp, fp, fn_, tn, total_latency / total_samples as f64);
    print!("{}", report.render_table());
    println!("{}", serde_json::to_string(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let kind: ScenarioKind = match args.kind.parse() {
        Ok(k) => k,
        Err(e) => return Ok(usage_error(&e.to_string())),
    };
    let interval = match parse_duration(&args.interval) {
        Ok(v) => v,
        Err(e) => return Ok(usage_error(&e)),
    };
    let params = ScenarioParams {
        dim: args.dim,
        samples: args.samples,
        interval,
        events: args.events,
        magnitude_sigma: args.magnitude_sigma,
        event_index: args.event_index,
        gap_steps: args.gap_steps,
        label_transient: args.label_transient,
        ..Default::default()
    };
    let stream = synth_scenario(kind, &params, args.seed)?;

    let sink: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout()),
    };
    let mut out = BufWriter::new(sink);
    write!(out, "timestamp")?;
    for j in 0..args.dim {
        write!(out, ",v{j}")?;
    }
    writeln!(out, ",label")?;
    for (obs, label) in stream.observations.iter().zip(&stream.labels) {
        let mut line = serde_json::to_string(&obs.timestamp)?;
        for v in &obs.values {
            line.push(',');
            line.push_str(&serde_json::to_string(v)?);
        }
        writeln!(out, "{line},{label}")?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    if args.grid.is_empty() {
        return Ok(usage_error("--grid must list at least one threshold"));
    }
    let config = match build_detector_config(&args.detector) {
        Ok(c) => c,
        Err(e) => return Ok(usage_error(&e)),
    };
    File::open(&args.input)?;
    let schema = match resolve_schema(&args.schema, Some(&args.label_column), &args.input) {
        Ok(s) => s,
        Err(e) => return Ok(usage_error(&e.to_string())),
    };
    let parsed = read_input(&args.input, &schema, Some(&args.label_column))?;
    let labels = parsed.labels.expect("label column requested");
    let stream = LabeledStream::new(parsed.observations, labels)?;

    let (best_t, best_report, rows) = sweep_threshold(&config, &stream, &args.grid)?;
    for (t, r) in &rows {
        println!(
            "T={t:<10} f1={:.2}% precision={:.2}% recall={:.2}%",
            r.f1 * 100.0,
            r.precision * 100.0,
            r.recall * 100.0
        );
    }
    println!(
        "{}",
        serde_json::to_string(&serde_json::json!({
            "best_threshold": best_t,
            "report": best_report,
        }))?
    );
    Ok(ExitCode::SUCCESS)
}
