//! On-disk and wire formats: the combined CSV, JSONL streams and the
//! per-session directory layout.
//!
//! ```text
//! <data_dir>/<pid>/<task>/
//!     session.json      descriptor (pid, task, geom, created_at, status)
//!     gaze.jsonl        {"xn":..,"yn":..,"t":..} per line
//!     transform.jsonl   {"s":..,"theta":..,"tx":..,"ty":..,"t":..} per line
//!     events.jsonl      {"kind":"initial"|"recalibration","t":..} per line
//!     combined.csv      pid,task,x,y,t,s,theta,tx,ty
//!     quality.json
//! ```
//!
//! Floats are written in shortest round-trip form, so parse followed by
//! serialize reproduces the input bytes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{HomPoint, TransformState, ViewportGeometry};
use crate::sync::{CalibrationEvent, CombinedRecord, GazeSample};

pub const COMBINED_HEADER: [&str; 9] = ["pid", "task", "x", "y", "t", "s", "theta", "tx", "ty"];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected CSV header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}, column {column}: cannot parse {value:?}")]
    Value {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("invalid session key component {0:?}")]
    InvalidKey(String),
}

impl FormatError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub fn format_float(v: f64) -> String {
    ryu::Buffer::new().format(v).to_owned()
}

/// Gaze line of `gaze.jsonl` and element of the gaze POST body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazePoint {
    pub xn: f64,
    pub yn: f64,
    pub t: i64,
}

impl GazePoint {
    pub fn into_sample(self, pid: &str, task: &str) -> GazeSample {
        GazeSample {
            pid: pid.to_owned(),
            task: task.to_owned(),
            xn: self.xn,
            yn: self.yn,
            t: self.t,
        }
    }
}

impl From<&GazeSample> for GazePoint {
    fn from(g: &GazeSample) -> Self {
        GazePoint {
            xn: g.xn,
            yn: g.yn,
            t: g.t,
        }
    }
}

pub fn write_combined_csv<W: Write>(records: &[CombinedRecord], out: W) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(COMBINED_HEADER)?;
    for r in records {
        w.write_record([
            r.pid.clone(),
            r.task.clone(),
            format_float(r.xn),
            format_float(r.yn),
            r.t.to_string(),
            format_float(r.scale),
            format_float(r.theta),
            format_float(r.tx),
            format_float(r.ty),
        ])?;
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

pub fn combined_csv_bytes(records: &[CombinedRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_combined_csv(records, &mut out).expect("writing to memory cannot fail");
    out
}

pub const INTRINSIC_HEADER: [&str; 5] = ["pid", "task", "t", "x_img", "y_img"];

/// Reconstructed gaze in intrinsic image pixels, one row per point.
pub fn intrinsic_csv_bytes(rows: &[(&CombinedRecord, HomPoint)]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(INTRINSIC_HEADER)
        .expect("writing to memory cannot fail");
    for (r, p) in rows {
        w.write_record([
            r.pid.clone(),
            r.task.clone(),
            r.t.to_string(),
            format_float(p.x),
            format_float(p.y),
        ])
        .expect("writing to memory cannot fail");
    }
    w.into_inner().expect("writing to memory cannot fail")
}

/// Parses a combined CSV. `sync_offset_ms` is not part of the row and comes
/// back as zero.
pub fn parse_combined_csv(bytes: &[u8]) -> Result<Vec<CombinedRecord>, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let header = reader.headers()?;
    if header.iter().ne(COMBINED_HEADER) {
        return Err(FormatError::Header(
            header.iter().map(str::to_owned).collect(),
        ));
    }
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let float = |i: usize| {
            field(i).parse::<f64>().map_err(|_| FormatError::Value {
                row: row + 1,
                column: COMBINED_HEADER[i],
                value: field(i).to_owned(),
            })
        };
        let t = field(4).parse::<i64>().map_err(|_| FormatError::Value {
            row: row + 1,
            column: "t",
            value: field(4).to_owned(),
        })?;
        out.push(CombinedRecord {
            pid: field(0).to_owned(),
            task: field(1).to_owned(),
            xn: float(2)?,
            yn: float(3)?,
            t,
            scale: float(5)?,
            theta: float(6)?,
            tx: float(7)?,
            ty: float(8)?,
            sync_offset_ms: 0,
        });
    }
    Ok(out)
}

pub fn write_jsonl_line<T: Serialize, W: Write>(out: &mut W, item: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, item)?;
    out.write_all(b"\n")
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        write_jsonl_line(&mut out, item).expect("writing to memory cannot fail");
    }
    out
}

/// Parses newline-delimited JSON. Blank lines are skipped.
pub fn parse_jsonl<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>, FormatError> {
    bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .filter(|(_, line)| !line.iter().all(u8::is_ascii_whitespace))
        .map(|(i, line)| {
            serde_json::from_slice(line).map_err(|source| FormatError::Json {
                line: i + 1,
                source,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub pid: String,
    pub task: String,
    pub geom: ViewportGeometry,
    pub created_at: i64,
    pub status: SessionStatus,
}

/// Participant and task ids double as directory names.
pub fn validate_key_component(s: &str) -> Result<(), FormatError> {
    let ok = !s.is_empty()
        && s.len() <= 128
        && s != "."
        && s != ".."
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(FormatError::InvalidKey(s.to_owned()))
    }
}

#[derive(Debug, Clone)]
pub struct SessionData {
    pub descriptor: SessionDescriptor,
    pub gaze: Vec<GazeSample>,
    pub transforms: Vec<TransformState>,
    pub events: Vec<CalibrationEvent>,
}

#[derive(Debug, Clone)]
pub struct SessionDir {
    root: PathBuf,
}

impl SessionDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn for_key(data_dir: &Path, pid: &str, task: &str) -> Result<Self, FormatError> {
        validate_key_component(pid)?;
        validate_key_component(task)?;
        Ok(Self::new(data_dir.join(pid).join(task)))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn descriptor_path(&self) -> PathBuf {
        self.root.join("session.json")
    }

    pub fn gaze_path(&self) -> PathBuf {
        self.root.join("gaze.jsonl")
    }

    pub fn transform_path(&self) -> PathBuf {
        self.root.join("transform.jsonl")
    }

    pub fn events_path(&self) -> PathBuf {
        self.root.join("events.jsonl")
    }

    pub fn combined_path(&self) -> PathBuf {
        self.root.join("combined.csv")
    }

    pub fn quality_path(&self) -> PathBuf {
        self.root.join("quality.json")
    }

    pub fn create(&self) -> Result<(), FormatError> {
        fs::create_dir_all(&self.root).map_err(|e| FormatError::io(&self.root, e))
    }

    pub fn read_descriptor(&self) -> Result<SessionDescriptor, FormatError> {
        let path = self.descriptor_path();
        let bytes = read(&path)?;
        serde_json::from_slice(&bytes).map_err(|source| FormatError::Json { line: 1, source })
    }

    pub fn write_descriptor(&self, d: &SessionDescriptor) -> Result<(), FormatError> {
        let mut bytes = serde_json::to_vec_pretty(d).expect("descriptor serializes");
        bytes.push(b'\n');
        write(&self.descriptor_path(), &bytes)
    }

    /// Loads the descriptor and the three raw streams. Missing stream files
    /// read as empty.
    pub fn load(&self) -> Result<SessionData, FormatError> {
        let descriptor = self.read_descriptor()?;
        let gaze: Vec<GazePoint> = read_jsonl_file(&self.gaze_path())?;
        let gaze = gaze
            .into_iter()
            .map(|g| g.into_sample(&descriptor.pid, &descriptor.task))
            .collect();
        let transforms = read_jsonl_file(&self.transform_path())?;
        let events = read_jsonl_file(&self.events_path())?;
        Ok(SessionData {
            descriptor,
            gaze,
            transforms,
            events,
        })
    }

    pub fn write_streams(&self, data: &SessionData) -> Result<(), FormatError> {
        self.create()?;
        self.write_descriptor(&data.descriptor)?;
        let gaze: Vec<GazePoint> = data.gaze.iter().map(GazePoint::from).collect();
        write(&self.gaze_path(), &to_jsonl(&gaze))?;
        write(&self.transform_path(), &to_jsonl(&data.transforms))?;
        write(&self.events_path(), &to_jsonl(&data.events))
    }

    pub fn read_combined(&self) -> Result<Vec<CombinedRecord>, FormatError> {
        parse_combined_csv(&read(&self.combined_path())?)
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|e| FormatError::io(path, e))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}

fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    match fs::read(path) {
        Ok(bytes) => parse_jsonl(&bytes),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(FormatError::io(path, e)),
    }
}
