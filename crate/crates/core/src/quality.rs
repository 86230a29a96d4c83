//! Log-quality summary for a merged session.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::ViewportGeometry;
use crate::sync::{
    CalibrationEvent, CalibrationKind, CombinedRecord, DiscardReason, Discarded, QuarantineCounts,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardReasons {
    pub no_transform_in_window: u64,
    pub singular_transform: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskQuality {
    pub total_gaze: u64,
    pub matched: u64,
    pub discarded: u64,
    pub matched_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub total_gaze: u64,
    pub matched: u64,
    pub discarded: u64,
    pub matched_pct: f64,
    pub discarded_pct: f64,
    pub discard_reasons: DiscardReasons,
    /// Matched samples whose normalized gaze lies outside `[0, 1]`.
    /// Informational; these are still counted as matched.
    pub off_screen: u64,
    /// Out-of-order events rejected on the streaming path. Disjoint from
    /// `total_gaze`.
    pub quarantined: QuarantineCounts,
    pub calibration_events: u64,
    pub recalibration_events: u64,
    pub per_task: BTreeMap<String, TaskQuality>,
}

/// `100 * part / total`, with an empty total defined as a clean 100%.
fn pct(part: u64, total: u64) -> f64 {
    if total == 0 {
        100.0
    } else {
        100.0 * part as f64 / total as f64
    }
}

pub fn quality(
    records: &[CombinedRecord],
    discarded: &[Discarded],
    events: &[CalibrationEvent],
) -> QualityReport {
    let mut reasons = DiscardReasons::default();
    for d in discarded {
        match d.reason {
            DiscardReason::NoTransformInWindow => reasons.no_transform_in_window += 1,
            DiscardReason::SingularTransform => reasons.singular_transform += 1,
        }
    }

    let mut per_task: BTreeMap<String, TaskQuality> = BTreeMap::new();
    for r in records {
        per_task.entry(r.task.clone()).or_default().matched += 1;
    }
    for d in discarded {
        per_task.entry(d.sample.task.clone()).or_default().discarded += 1;
    }
    for q in per_task.values_mut() {
        q.total_gaze = q.matched + q.discarded;
        q.matched_pct = pct(q.matched, q.total_gaze);
    }

    let matched = records.len() as u64;
    let discarded_n = discarded.len() as u64;
    let total = matched + discarded_n;
    QualityReport {
        total_gaze: total,
        matched,
        discarded: discarded_n,
        matched_pct: pct(matched, total),
        discarded_pct: if total == 0 {
            0.0
        } else {
            100.0 * discarded_n as f64 / total as f64
        },
        discard_reasons: reasons,
        off_screen: records
            .iter()
            .filter(|r| !ViewportGeometry::is_on_screen(r.xn, r.yn))
            .count() as u64,
        quarantined: QuarantineCounts::default(),
        calibration_events: events.len() as u64,
        recalibration_events: events
            .iter()
            .filter(|e| e.kind == CalibrationKind::Recalibration)
            .count() as u64,
        per_task,
    }
}

impl QualityReport {
    pub fn with_quarantine(mut self, quarantined: QuarantineCounts) -> Self {
        self.quarantined = quarantined;
        self
    }

    /// Pretty JSON with a trailing newline, as persisted to `quality.json`.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sync::GazeSample;

    fn record(task: &str, xn: f64) -> CombinedRecord {
        CombinedRecord {
            pid: "p".into(),
            task: task.into(),
            xn,
            yn: 0.5,
            t: 0,
            scale: 1.0,
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
            sync_offset_ms: 0,
        }
    }

    fn discard(task: &str, reason: DiscardReason) -> Discarded {
        Discarded {
            sample: GazeSample {
                pid: "p".into(),
                task: task.into(),
                xn: 0.5,
                yn: 0.5,
                t: 0,
            },
            reason,
        }
    }

    #[test]
    fn matched_percentage() {
        let records: Vec<_> = (0..965).map(|_| record("a", 0.5)).collect();
        let discarded: Vec<_> = (0..35)
            .map(|_| discard("a", DiscardReason::NoTransformInWindow))
            .collect();
        let q = quality(&records, &discarded, &[]);
        assert_eq!(q.total_gaze, 1000);
        assert_eq!(q.matched_pct, 96.5);
        assert_eq!(q.discarded_pct, 3.5);
        assert_eq!(q.matched + q.discarded, q.total_gaze);
    }

    #[test]
    fn empty_session_is_fully_matched() {
        let q = quality(&[], &[], &[]);
        assert_eq!(q.total_gaze, 0);
        assert_eq!(q.matched_pct, 100.0);
        assert!(q.per_task.is_empty());
    }

    #[test]
    fn counts_recalibrations() {
        let ev = |kind, t| CalibrationEvent { kind, t };
        let events = [
            ev(CalibrationKind::Initial, 0),
            ev(CalibrationKind::Recalibration, 10),
            ev(CalibrationKind::Recalibration, 20),
            ev(CalibrationKind::Recalibration, 30),
        ];
        let q = quality(&[], &[], &events);
        assert_eq!(q.recalibration_events, 3);
        assert_eq!(q.calibration_events, 4);
    }

    #[test]
    fn reasons_and_per_task() {
        let records = vec![record("a", 0.5), record("b", 1.5)];
        let discarded = vec![
            discard("a", DiscardReason::SingularTransform),
            discard("b", DiscardReason::NoTransformInWindow),
            discard("b", DiscardReason::NoTransformInWindow),
        ];
        let q = quality(&records, &discarded, &[]);
        assert_eq!(
            q.discard_reasons,
            DiscardReasons {
                no_transform_in_window: 2,
                singular_transform: 1
            }
        );
        assert_eq!(q.off_screen, 1);
        assert_eq!(q.per_task["a"].matched_pct, 50.0);
        assert_eq!(q.per_task["b"].total_gaze, 3);
    }
}
