//! Persistence: newline-delimited JSON session traces with replay, gesture
//! dataset CSV files and model text files.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::Pose;
use crate::gesture::{GestureError, MlpModel};
use crate::handmodel::{dataset_header, sample_from_row, sample_to_row, GestureLabel, LabeledSample, LANDMARK_COUNT, VALUES_PER_LANDMARK};
use crate::scalar::Real;
use crate::teleop::TeleopEvent;

pub const TRACE_FORMAT: &str = "glovelink-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("trace is empty (missing header)")]
    MissingHeader,
    #[error("not a {TRACE_FORMAT} file (format {0:?})")]
    BadFormat(String),
    #[error("unsupported trace version {found} (expected {TRACE_VERSION})")]
    SchemaVersionMismatch { found: u64 },
    #[error("malformed trace line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },
}

impl TraceError {
    /// 1-based file line number for line-level errors.
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::MalformedLine { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u64,
    #[serde(default)]
    pub config: Value,
}

impl TraceHeader {
    pub fn new(config: Value) -> Self {
        Self { format: TRACE_FORMAT.to_string(), version: TRACE_VERSION as u64, config }
    }
}

/// One line of a trace body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "type",
    rename_all = "snake_case",
    deny_unknown_fields,
    bound(serialize = "T: Real + Serialize", deserialize = "T: Real + DeserializeOwned")
)]
pub enum TraceRecord<T: Real> {
    HandSample {
        t: f64,
        pose: Pose<T>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        landmarks: Option<Vec<[T; VALUES_PER_LANDMARK]>>,
        finger_distance: T,
    },
    StabilizedGesture {
        t: f64,
        label: GestureLabel,
    },
    TipGoal {
        t: f64,
        pose: Pose<T>,
        jaw: T,
    },
    SimState {
        t: f64,
        pose: Pose<T>,
        jaw: T,
        at_goal: bool,
    },
    Event {
        t: f64,
        event: TeleopEvent,
    },
}

impl<T: Real> TraceRecord<T> {
    pub fn t(&self) -> f64 {
        match self {
            Self::HandSample { t, .. }
            | Self::StabilizedGesture { t, .. }
            | Self::TipGoal { t, .. }
            | Self::SimState { t, .. }
            | Self::Event { t, .. } => *t,
        }
    }

    /// Stream index used for the per-stream monotonicity check.
    pub fn stream(&self) -> usize {
        match self {
            Self::HandSample { .. } => 0,
            Self::StabilizedGesture { .. } => 1,
            Self::TipGoal { .. } => 2,
            Self::SimState { .. } => 3,
            Self::Event { .. } => 4,
        }
    }

    fn check(&self) -> Result<(), String> {
        if !self.t().is_finite() {
            return Err("non-finite timestamp".into());
        }
        if let Self::HandSample { landmarks: Some(l), .. } = self {
            if l.len() != LANDMARK_COUNT {
                return Err(format!("expected {LANDMARK_COUNT} landmarks, found {}", l.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T: Real> {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord<T>>,
}

/// Append-only trace writer; the header is written on construction.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, config: Value) -> io::Result<Self> {
        serde_json::to_writer(&mut out, &TraceHeader::new(config))?;
        out.write_all(b"\n")?;
        Ok(Self { out })
    }

    pub fn push<T: Real + Serialize>(&mut self, r: &TraceRecord<T>) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, r)?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_trace<W: Write, T: Real + Serialize>(out: W, config: Value, records: &[TraceRecord<T>]) -> io::Result<W> {
    let mut w = TraceWriter::new(out, config)?;
    for r in records {
        w.push(r)?;
    }
    w.finish()
}

pub fn trace_to_string<T: Real + Serialize>(config: Value, records: &[TraceRecord<T>]) -> String {
    let bytes = write_trace(Vec::new(), config, records).expect("writing to memory cannot fail");
    String::from_utf8(bytes).expect("serde_json emits UTF-8")
}

pub fn read_trace<R: BufRead, T: Real + DeserializeOwned>(input: R) -> Result<Trace<T>, TraceError> {
    let mut lines = input.lines();
    let first = lines.next().ok_or(TraceError::MissingHeader)??;
    let raw: Value = serde_json::from_str(&first).map_err(|e| TraceError::MalformedLine { line: 1, msg: e.to_string() })?;
    // version is checked before the rest of the header so newer files are refused, not misparsed
    if let Some(v) = raw.get("version").and_then(Value::as_u64) {
        if v != TRACE_VERSION as u64 {
            return Err(TraceError::SchemaVersionMismatch { found: v });
        }
    }
    let header: TraceHeader =
        serde_json::from_value(raw).map_err(|e| TraceError::MalformedLine { line: 1, msg: e.to_string() })?;
    if header.format != TRACE_FORMAT {
        return Err(TraceError::BadFormat(header.format));
    }
    let mut records = Vec::new();
    let mut last_t = [f64::NEG_INFINITY; 5];
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord<T> =
            serde_json::from_str(&line).map_err(|e| TraceError::MalformedLine { line: line_no, msg: e.to_string() })?;
        rec.check().map_err(|msg| TraceError::MalformedLine { line: line_no, msg })?;
        let s = rec.stream();
        if rec.t() < last_t[s] {
            return Err(TraceError::MalformedLine { line: line_no, msg: "timestamp decreases within stream".into() });
        }
        last_t[s] = rec.t();
        records.push(rec);
    }
    Ok(Trace { header, records })
}

pub fn read_trace_str<T: Real + DeserializeOwned>(s: &str) -> Result<Trace<T>, TraceError> {
    read_trace(s.as_bytes())
}

pub fn read_trace_file<T: Real + DeserializeOwned>(path: impl AsRef<Path>) -> Result<Trace<T>, TraceError> {
    read_trace(BufReader::new(File::open(path)?))
}

pub fn write_trace_file<T: Real + Serialize>(path: impl AsRef<Path>, config: Value, records: &[TraceRecord<T>]) -> io::Result<()> {
    write_trace(BufWriter::new(File::create(path)?), config, records).map(|_| ())
}

/// Delivers records in timestamp order (stable for ties). `speed == 0`
/// delivers as fast as possible; otherwise record `k` is delivered
/// `(t_k - t_0) / speed` seconds after the call.
pub fn replay<T: Real>(records: &[TraceRecord<T>], speed: f64, mut sink: impl FnMut(&TraceRecord<T>)) {
    let mut order: Vec<&TraceRecord<T>> = records.iter().collect();
    order.sort_by(|a, b| a.t().total_cmp(&b.t()));
    let Some(t0) = order.first().map(|r| r.t()) else {
        return;
    };
    let start = Instant::now();
    for r in order {
        if speed > 0.0 {
            let due = Duration::from_secs_f64(((r.t() - t0) / speed).max(0.0));
            let now = start.elapsed();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        sink(r);
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("dataset line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("dataset header does not match the expected 147 features + 5 one-hot columns")]
    Header,
}

pub fn write_dataset<W: Write, T: Real>(out: W, samples: &[LabeledSample<T>]) -> Result<W, DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(dataset_header())?;
    for s in samples {
        w.write_record(sample_to_row(s))?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| DatasetError::Io(e.into_error()))
}

pub fn read_dataset<R: Read, T: Real>(input: R) -> Result<Vec<LabeledSample<T>>, DatasetError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != dataset_header() {
        return Err(DatasetError::Header);
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: Vec<&str> = rec.iter().collect();
        out.push(sample_from_row(&row).map_err(|msg| DatasetError::Row { line, msg })?);
    }
    Ok(out)
}

pub fn write_dataset_file<T: Real>(path: impl AsRef<Path>, samples: &[LabeledSample<T>]) -> Result<(), DatasetError> {
    write_dataset(BufWriter::new(File::create(path)?), samples).map(|_| ())
}

pub fn read_dataset_file<T: Real>(path: impl AsRef<Path>) -> Result<Vec<LabeledSample<T>>, DatasetError> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Format(#[from] GestureError),
}

pub fn save_model<T: Real>(path: impl AsRef<Path>, m: &MlpModel<T>) -> io::Result<()> {
    std::fs::write(path, m.to_text())
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<MlpModel<T>, ModelFileError> {
    Ok(MlpModel::from_text(&std::fs::read_to_string(path)?)?)
}
