use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::geometry::{
    reconstruct, screen_from_intrinsic, screen_from_normalized, HomPoint, ViewportGeometry,
};
use crate::sync::CombinedRecord;

/// Distance of gaze from an instructed fixation target, in the image frame
/// and against a static screen baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidedErrorReport {
    pub target_intrinsic: (f64, f64),
    /// Screen position of the target under the first record's transform.
    pub screen_baseline: (f64, f64),
    pub image_distances: Vec<f64>,
    pub screen_distances: Vec<f64>,
    pub median_image_px: f64,
    pub median_screen_px: f64,
}

/// Median; even-length inputs average the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

/// Records whose transform cannot be inverted are left out of both lists.
pub fn guided_error(
    records: &[CombinedRecord],
    target: HomPoint,
    geom: &ViewportGeometry,
) -> Result<GuidedErrorReport, AnalysisError> {
    if !geom.is_on_image(&target) {
        return Err(AnalysisError::TargetOutsideImage(target.x, target.y));
    }
    let first = records.first().ok_or(AnalysisError::Empty)?;
    let baseline = screen_from_intrinsic(target, &first.transform(), geom)?;

    let mut image_distances = Vec::with_capacity(records.len());
    let mut screen_distances = Vec::with_capacity(records.len());
    for r in records {
        let Ok(on_image) = reconstruct(r.xn, r.yn, &r.transform(), geom) else {
            continue;
        };
        let on_screen = screen_from_normalized(r.xn, r.yn, geom)?;
        image_distances.push(on_image.distance(&target));
        screen_distances.push(on_screen.distance(&baseline));
    }
    let median_image_px = median(&image_distances).ok_or(AnalysisError::Empty)?;
    let median_screen_px = median(&screen_distances).ok_or(AnalysisError::Empty)?;
    Ok(GuidedErrorReport {
        target_intrinsic: (target.x, target.y),
        screen_baseline: (baseline.x, baseline.y),
        image_distances,
        screen_distances,
        median_image_px,
        median_screen_px,
    })
}
