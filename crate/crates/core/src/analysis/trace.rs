use serde::{Deserialize, Serialize};

use super::Frame;
use crate::geometry::{reconstruct, screen_from_normalized, ViewportGeometry};
use crate::sync::CombinedRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub x: f64,
    pub y: f64,
    pub t: i64,
}

/// Gaze points connected in timestamp order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePolyline {
    pub frame: Frame,
    pub points: Vec<TracePoint>,
    /// Records that could not be mapped into the frame (non-invertible
    /// transform or non-finite gaze).
    pub skipped: usize,
}

/// Polyline of the records in the requested frame. Records are expected in
/// gaze-timestamp order, as produced by the merge.
pub fn trace(records: &[CombinedRecord], frame: Frame, geom: &ViewportGeometry) -> TracePolyline {
    let mut points = Vec::with_capacity(records.len());
    let mut skipped = 0;
    for r in records {
        let mapped = match frame {
            Frame::Screen => screen_from_normalized(r.xn, r.yn, geom),
            Frame::Intrinsic => reconstruct(r.xn, r.yn, &r.transform(), geom),
        };
        match mapped {
            Ok(p) => points.push(TracePoint {
                x: p.x,
                y: p.y,
                t: r.t,
            }),
            Err(_) => skipped += 1,
        }
    }
    TracePolyline {
        frame,
        points,
        skipped,
    }
}
