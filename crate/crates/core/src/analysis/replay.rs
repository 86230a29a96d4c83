use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::geometry::{reconstruct, TransformState, ViewportGeometry};
use crate::sync::CombinedRecord;

/// Session state at one replay instant, holding the latest logged record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFrame {
    pub index: usize,
    /// Milliseconds since the first record.
    pub frame_time: f64,
    pub transform: TransformState,
    /// Screen pixels.
    pub gaze_screen: Option<(f64, f64)>,
    /// Intrinsic image pixels; absent when the transform is not invertible.
    pub gaze_intrinsic: Option<(f64, f64)>,
}

/// Uniformly spaced frames from the first to the last record, step-holding
/// the most recent record at or before each frame time.
pub fn replay_frames(
    records: &[CombinedRecord],
    geom: &ViewportGeometry,
    fps: f64,
) -> Result<Vec<ReplayFrame>, AnalysisError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(AnalysisError::InvalidFps(fps));
    }
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Ok(Vec::new());
    };
    let duration = (last.t - first.t) as f64;
    let count = (duration * fps / 1000.0).floor() as usize + 1;

    let mut frames = Vec::with_capacity(count);
    let mut held = 0;
    for index in 0..count {
        let frame_time = index as f64 * 1000.0 / fps;
        while held + 1 < records.len() && ((records[held + 1].t - first.t) as f64) <= frame_time {
            held += 1;
        }
        let r = &records[held];
        let st = r.transform();
        frames.push(ReplayFrame {
            index,
            frame_time,
            transform: st,
            gaze_screen: Some((r.xn * geom.screen_w, r.yn * geom.screen_h)),
            gaze_intrinsic: reconstruct(r.xn, r.yn, &st, geom).ok().map(|p| (p.x, p.y)),
        });
    }
    Ok(frames)
}
