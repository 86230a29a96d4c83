//! Pairing of the gaze stream with the transform stream.
//!
//! A gaze sample at `t` pairs with the transform whose timestamp `t'`
//! minimizes `|t - t'|` subject to `|t - t'| <= delta`. Equal distances
//! resolve to the earlier transform. Samples without a partner are
//! discarded. [`merge_offline`] is the normative batch form;
//! [`SessionBuffer`] reaches the same output incrementally using a
//! transform-stream watermark.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{TransformState, DET_EPSILON};

pub const DEFAULT_DELTA_MS: i64 = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyncError {
    #[error("{stream} stream not sorted by timestamp at index {index}")]
    Unordered { stream: &'static str, index: usize },
    #[error("mixed session keys: expected {expected}, found {found}")]
    MixedKeys { expected: String, found: String },
    #[error("invalid {stream} event at index {index}: {reason}")]
    InvalidEvent {
        stream: &'static str,
        index: usize,
        reason: String,
    },
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("invalid sync config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncConfig {
    pub delta_ms: i64,
    pub watermark_slack_ms: i64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            delta_ms: DEFAULT_DELTA_MS,
            watermark_slack_ms: 0,
        }
    }
}

impl SyncConfig {
    pub fn validate(&self) -> Result<(), SyncError> {
        if self.delta_ms <= 0 {
            return Err(SyncError::InvalidConfig("delta_ms must be positive"));
        }
        if self.watermark_slack_ms < 0 {
            return Err(SyncError::InvalidConfig(
                "watermark_slack_ms must be non-negative",
            ));
        }
        Ok(())
    }
}

/// One normalized-screen gaze estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeSample {
    pub pid: String,
    pub task: String,
    pub xn: f64,
    pub yn: f64,
    /// Unix epoch milliseconds.
    pub t: i64,
}

impl GazeSample {
    pub fn validate(&self) -> Result<(), String> {
        if self.pid.is_empty() || self.task.is_empty() {
            return Err("pid and task must be non-empty".into());
        }
        if !(self.xn.is_finite() && self.yn.is_finite()) {
            return Err("gaze coordinates must be finite".into());
        }
        if self.t < 0 {
            return Err("timestamp must be non-negative".into());
        }
        Ok(())
    }

    fn key(&self) -> (&str, &str) {
        (&self.pid, &self.task)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationKind {
    Initial,
    Recalibration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationEvent {
    pub kind: CalibrationKind,
    pub t: i64,
}

/// The unified log row: a gaze sample and the transform it was paired with.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedRecord {
    pub pid: String,
    pub task: String,
    pub xn: f64,
    pub yn: f64,
    /// Gaze timestamp, Unix ms.
    pub t: i64,
    pub scale: f64,
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
    /// `|t - t'|`. Not part of the CSV row; zero for rows parsed from CSV.
    pub sync_offset_ms: i64,
}

impl CombinedRecord {
    fn pair(gaze: &GazeSample, st: &TransformState) -> Self {
        Self {
            pid: gaze.pid.clone(),
            task: gaze.task.clone(),
            xn: gaze.xn,
            yn: gaze.yn,
            t: gaze.t,
            scale: st.scale,
            theta: st.theta,
            tx: st.tx,
            ty: st.ty,
            sync_offset_ms: (gaze.t - st.t).abs(),
        }
    }

    /// The paired manipulation state, stamped with the gaze time.
    pub fn transform(&self) -> TransformState {
        TransformState {
            scale: self.scale,
            theta: self.theta,
            tx: self.tx,
            ty: self.ty,
            t: self.t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    NoTransformInWindow,
    /// The nearest in-window transform cannot be inverted.
    SingularTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discarded {
    pub sample: GazeSample,
    pub reason: DiscardReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeOutput {
    pub records: Vec<CombinedRecord>,
    pub discarded: Vec<Discarded>,
}

/// Index of the transform nearest to `t` in a timestamp-sorted slice. Ties
/// (including duplicate timestamps) resolve to the lowest index.
pub(crate) fn nearest_index(transforms: &[TransformState], t: i64) -> Option<usize> {
    let after = transforms.partition_point(|st| st.t < t);
    let before = after.checked_sub(1).map(|last| {
        let tb = transforms[last].t;
        transforms[..last].partition_point(|st| st.t < tb)
    });
    match (before, transforms.get(after)) {
        (None, None) => None,
        (Some(b), None) => Some(b),
        (None, Some(_)) => Some(after),
        (Some(b), Some(a)) => {
            if t - transforms[b].t <= a.t - t {
                Some(b)
            } else {
                Some(after)
            }
        }
    }
}

fn is_singular(st: &TransformState) -> bool {
    // The linear block of a uniform-scale rotation has determinant s^2.
    let det = st.scale * st.scale;
    det.is_nan() || det < DET_EPSILON
}

/// Pairs one gaze sample against a sorted transform window.
fn resolve(
    gaze: GazeSample,
    transforms: &[TransformState],
    delta_ms: i64,
) -> Result<CombinedRecord, Discarded> {
    let hit = nearest_index(transforms, gaze.t)
        .map(|i| &transforms[i])
        .filter(|st| (gaze.t - st.t).abs() <= delta_ms);
    match hit {
        None => Err(Discarded {
            sample: gaze,
            reason: DiscardReason::NoTransformInWindow,
        }),
        Some(st) if is_singular(st) => Err(Discarded {
            sample: gaze,
            reason: DiscardReason::SingularTransform,
        }),
        Some(st) => Ok(CombinedRecord::pair(&gaze, st)),
    }
}

fn check_sorted<T>(
    items: &[T],
    stream: &'static str,
    t: impl Fn(&T) -> i64,
) -> Result<(), SyncError> {
    match items.windows(2).position(|w| t(&w[1]) < t(&w[0])) {
        Some(i) => Err(SyncError::Unordered {
            stream,
            index: i + 1,
        }),
        None => Ok(()),
    }
}

/// Batch merge of one session's streams. Both inputs must be sorted by
/// timestamp (ties allowed) and every gaze sample must share one
/// `(pid, task)` key.
pub fn merge_offline(
    gaze: &[GazeSample],
    transforms: &[TransformState],
    cfg: &SyncConfig,
) -> Result<MergeOutput, SyncError> {
    cfg.validate()?;
    for (index, g) in gaze.iter().enumerate() {
        g.validate().map_err(|reason| SyncError::InvalidEvent {
            stream: "gaze",
            index,
            reason,
        })?;
    }
    for (index, st) in transforms.iter().enumerate() {
        st.validate().map_err(|e| SyncError::InvalidEvent {
            stream: "transform",
            index,
            reason: e.to_string(),
        })?;
    }
    if let Some(first) = gaze.first() {
        if let Some(other) = gaze.iter().find(|g| g.key() != first.key()) {
            return Err(SyncError::MixedKeys {
                expected: format!("{}/{}", first.pid, first.task),
                found: format!("{}/{}", other.pid, other.task),
            });
        }
    }
    check_sorted(gaze, "gaze", |g| g.t)?;
    check_sorted(transforms, "transform", |st| st.t)?;

    let mut out = MergeOutput::default();
    for g in gaze {
        match resolve(g.clone(), transforms, cfg.delta_ms) {
            Ok(record) => out.records.push(record),
            Err(discard) => out.discarded.push(discard),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Gaze(GazeSample),
    Transform(TransformState),
    Calibration(CalibrationEvent),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineCounts {
    pub gaze: u64,
    pub transform: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    /// False when the event was quarantined for breaking stream order.
    pub accepted: bool,
    pub finalized: Vec<CombinedRecord>,
}

/// Incremental merge state for one `(pid, task)` session.
///
/// A pending gaze sample at `t` is finalized once a transform with
/// `t' > t + delta + slack` has been seen, or when the session closes. At
/// that point every transform that could fall inside its window has
/// arrived, so the result matches [`merge_offline`] for any arrival
/// interleaving that keeps each stream in timestamp order.
#[derive(Debug)]
pub struct SessionBuffer {
    pid: String,
    task: String,
    cfg: SyncConfig,
    transforms: VecDeque<TransformState>,
    pending: VecDeque<GazeSample>,
    last_gaze_t: Option<i64>,
    last_transform_t: Option<i64>,
    discarded: Vec<Discarded>,
    calibrations: Vec<CalibrationEvent>,
    quarantined: QuarantineCounts,
    matched: u64,
    peak_transforms: usize,
    closed: bool,
}

impl SessionBuffer {
    pub fn new(
        pid: impl Into<String>,
        task: impl Into<String>,
        cfg: SyncConfig,
    ) -> Result<Self, SyncError> {
        cfg.validate()?;
        Ok(Self {
            pid: pid.into(),
            task: task.into(),
            cfg,
            transforms: VecDeque::new(),
            pending: VecDeque::new(),
            last_gaze_t: None,
            last_transform_t: None,
            discarded: Vec::new(),
            calibrations: Vec::new(),
            quarantined: QuarantineCounts::default(),
            matched: 0,
            peak_transforms: 0,
            closed: false,
        })
    }

    pub fn key(&self) -> String {
        format!("{}/{}", self.pid, self.task)
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn ingest(&mut self, event: Event) -> Result<Ingested, SyncError> {
        if self.closed {
            return Err(SyncError::SessionClosed(self.key()));
        }
        match event {
            Event::Gaze(g) => {
                if g.pid != self.pid || g.task != self.task {
                    return Err(SyncError::MixedKeys {
                        expected: self.key(),
                        found: format!("{}/{}", g.pid, g.task),
                    });
                }
                g.validate().map_err(|reason| SyncError::InvalidEvent {
                    stream: "gaze",
                    index: 0,
                    reason,
                })?;
                if self.last_gaze_t.is_some_and(|last| g.t < last) {
                    self.quarantined.gaze += 1;
                    return Ok(Ingested::default());
                }
                self.last_gaze_t = Some(g.t);
                self.pending.push_back(g);
            }
            Event::Transform(st) => {
                st.validate().map_err(|e| SyncError::InvalidEvent {
                    stream: "transform",
                    index: 0,
                    reason: e.to_string(),
                })?;
                if self.last_transform_t.is_some_and(|last| st.t < last) {
                    self.quarantined.transform += 1;
                    return Ok(Ingested::default());
                }
                self.last_transform_t = Some(st.t);
                self.transforms.push_back(st);
                self.peak_transforms = self.peak_transforms.max(self.transforms.len());
            }
            Event::Calibration(ev) => {
                if ev.t < 0 {
                    return Err(SyncError::InvalidEvent {
                        stream: "event",
                        index: 0,
                        reason: "timestamp must be non-negative".into(),
                    });
                }
                self.calibrations.push(ev);
                return Ok(Ingested {
                    accepted: true,
                    finalized: Vec::new(),
                });
            }
        }
        let finalized = self.finalize_ready();
        self.evict();
        Ok(Ingested {
            accepted: true,
            finalized,
        })
    }

    /// Flushes every pending gaze sample through final matching.
    pub fn close(&mut self) -> Vec<CombinedRecord> {
        if self.closed {
            return Vec::new();
        }
        self.closed = true;
        let mut out = Vec::with_capacity(self.pending.len());
        while let Some(g) = self.pending.pop_front() {
            self.finalize_one(g, &mut out);
        }
        self.transforms.clear();
        out
    }

    fn finalize_ready(&mut self) -> Vec<CombinedRecord> {
        let Some(watermark) = self.last_transform_t else {
            return Vec::new();
        };
        let horizon = self.cfg.delta_ms + self.cfg.watermark_slack_ms;
        let mut out = Vec::new();
        while self
            .pending
            .front()
            .is_some_and(|g| watermark > g.t + horizon)
        {
            let g = self.pending.pop_front().expect("front checked");
            self.finalize_one(g, &mut out);
        }
        out
    }

    fn finalize_one(&mut self, g: GazeSample, out: &mut Vec<CombinedRecord>) {
        match resolve(g, self.transforms.make_contiguous(), self.cfg.delta_ms) {
            Ok(record) => {
                self.matched += 1;
                out.push(record);
            }
            Err(discard) => self.discarded.push(discard),
        }
    }

    /// Drops transforms that can no longer fall inside any window: every
    /// pending or future gaze sample is at or after `floor`.
    fn evict(&mut self) {
        let floor = match (self.pending.front(), self.last_gaze_t) {
            (Some(g), _) => g.t,
            (None, Some(last)) => last,
            (None, None) => return,
        };
        let cutoff = floor - self.cfg.delta_ms;
        while self.transforms.front().is_some_and(|st| st.t < cutoff) {
            self.transforms.pop_front();
        }
    }

    pub fn buffered_transforms(&self) -> usize {
        self.transforms.len()
    }

    pub fn peak_buffered_transforms(&self) -> usize {
        self.peak_transforms
    }

    pub fn pending_gaze(&self) -> usize {
        self.pending.len()
    }

    pub fn matched(&self) -> u64 {
        self.matched
    }

    pub fn discarded(&self) -> &[Discarded] {
        &self.discarded
    }

    pub fn calibrations(&self) -> &[CalibrationEvent] {
        &self.calibrations
    }

    pub fn quarantined(&self) -> QuarantineCounts {
        self.quarantined
    }

    pub fn config(&self) -> &SyncConfig {
        &self.cfg
    }
}
