use serde::{Deserialize, Serialize};

use super::{AnalysisError, Frame};
use crate::geometry::{reconstruct, screen_from_normalized, HomPoint, ViewportGeometry};
use crate::sync::CombinedRecord;

/// Kernel support radius in units of the bandwidth.
const TRUNCATE_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapOptions {
    pub cols: usize,
    pub rows: usize,
    /// Gaussian sigma in frame pixels. `None` picks a fortieth of the
    /// displayed (screen frame) or intrinsic (image frame) width.
    pub bandwidth: Option<f64>,
    /// Keep off-screen / off-image samples instead of excluding them.
    pub include_off_frame: bool,
}

impl HeatmapOptions {
    pub fn new(cols: usize, rows: usize) -> Self {
        Self {
            cols,
            rows,
            bandwidth: None,
            include_off_frame: false,
        }
    }
}

/// Density grid over the screen or the intrinsic image. Each included
/// sample contributes exactly unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub frame: Frame,
    pub cols: usize,
    pub rows: usize,
    /// Square cell edge in frame pixels.
    pub cell_size: f64,
    pub bandwidth: f64,
    /// Row-major, `rows * cols` entries.
    pub values: Vec<f64>,
    pub included: u64,
    pub excluded: u64,
}

/// JSON written next to a rendered heatmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub frame: Frame,
    pub cols: usize,
    pub rows: usize,
    pub cell_size: f64,
    pub bandwidth: f64,
    pub included: u64,
    pub excluded: u64,
}

impl HeatmapGrid {
    fn empty(
        frame: Frame,
        extent: (f64, f64),
        opts: &HeatmapOptions,
        bandwidth: f64,
    ) -> Result<Self, AnalysisError> {
        if opts.cols == 0 || opts.rows == 0 {
            return Err(AnalysisError::InvalidGrid);
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(AnalysisError::InvalidBandwidth(bandwidth));
        }
        let cell_size = (extent.0 / opts.cols as f64).max(extent.1 / opts.rows as f64);
        Ok(Self {
            frame,
            cols: opts.cols,
            rows: opts.rows,
            cell_size,
            bandwidth,
            values: vec![0.0; opts.cols * opts.rows],
            included: 0,
            excluded: 0,
        })
    }

    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sidecar(&self) -> HeatmapSidecar {
        HeatmapSidecar {
            frame: self.frame,
            cols: self.cols,
            rows: self.rows,
            cell_size: self.cell_size,
            bandwidth: self.bandwidth,
            included: self.included,
            excluded: self.excluded,
        }
    }

    fn clamp_cell(&self, v: f64, n: usize) -> usize {
        let idx = (v / self.cell_size).floor();
        if idx.is_nan() || idx < 0.0 {
            0
        } else {
            (idx as usize).min(n - 1)
        }
    }

    /// Adds a truncated Gaussian centered at `(x, y)`, renormalized over
    /// the in-grid cells it touches. When no cell center lies within the
    /// support the whole unit lands in the nearest cell.
    fn deposit(&mut self, x: f64, y: f64) {
        self.included += 1;
        let radius = TRUNCATE_SIGMAS * self.bandwidth;
        let c_lo = self.clamp_cell(x - radius, self.cols);
        let c_hi = self.clamp_cell(x + radius, self.cols);
        let r_lo = self.clamp_cell(y - radius, self.rows);
        let r_hi = self.clamp_cell(y + radius, self.rows);
        let two_var = 2.0 * self.bandwidth * self.bandwidth;

        let mut weights = Vec::with_capacity((c_hi - c_lo + 1) * (r_hi - r_lo + 1));
        let mut total = 0.0;
        for row in r_lo..=r_hi {
            let cy = (row as f64 + 0.5) * self.cell_size;
            for col in c_lo..=c_hi {
                let cx = (col as f64 + 0.5) * self.cell_size;
                let d2 = (cx - x).powi(2) + (cy - y).powi(2);
                if d2 <= radius * radius {
                    let w = (-d2 / two_var).exp();
                    total += w;
                    weights.push((row * self.cols + col, w));
                }
            }
        }
        if total > 0.0 {
            for (idx, w) in weights {
                self.values[idx] += w / total;
            }
        } else {
            let col = self.clamp_cell(x, self.cols);
            let row = self.clamp_cell(y, self.rows);
            self.values[row * self.cols + col] += 1.0;
        }
    }
}

/// Density of gaze in screen pixels.
pub fn heatmap_screen(
    records: &[CombinedRecord],
    geom: &ViewportGeometry,
    opts: &HeatmapOptions,
) -> Result<HeatmapGrid, AnalysisError> {
    let bandwidth = opts.bandwidth.unwrap_or(geom.displayed_w / 40.0);
    let mut grid = HeatmapGrid::empty(
        Frame::Screen,
        (geom.screen_w, geom.screen_h),
        opts,
        bandwidth,
    )?;
    for r in records {
        let on_screen = ViewportGeometry::is_on_screen(r.xn, r.yn);
        match screen_from_normalized(r.xn, r.yn, geom) {
            Ok(p) if on_screen || opts.include_off_frame => grid.deposit(p.x, p.y),
            _ => grid.excluded += 1,
        }
    }
    Ok(grid)
}

/// Density of gaze on the intrinsic image after undoing each record's
/// manipulation. Singular-transform and off-image samples are excluded.
pub fn heatmap_image(
    records: &[CombinedRecord],
    geom: &ViewportGeometry,
    opts: &HeatmapOptions,
) -> Result<HeatmapGrid, AnalysisError> {
    let bandwidth = opts.bandwidth.unwrap_or(geom.intrinsic_w / 40.0);
    let mut grid = HeatmapGrid::empty(
        Frame::Intrinsic,
        (geom.intrinsic_w, geom.intrinsic_h),
        opts,
        bandwidth,
    )?;
    for r in records {
        match reconstruct(r.xn, r.yn, &r.transform(), geom) {
            Ok(p) if geom.is_on_image(&p) || opts.include_off_frame => grid.deposit(p.x, p.y),
            _ => grid.excluded += 1,
        }
    }
    Ok(grid)
}

/// Root-mean-square distance of points from their centroid.
pub fn rms_spread(points: &[HomPoint]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    (points
        .iter()
        .map(|p| (p.x - mx).powi(2) + (p.y - my).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TransformState;

    fn record(xn: f64, yn: f64, st: TransformState) -> CombinedRecord {
        CombinedRecord {
            pid: "p".into(),
            task: "t".into(),
            xn,
            yn,
            t: st.t,
            scale: st.scale,
            theta: st.theta,
            tx: st.tx,
            ty: st.ty,
            sync_offset_ms: 0,
        }
    }

    #[test]
    fn narrow_kernel_is_a_delta() {
        let geom = ViewportGeometry::identity(1000.0, 1000.0);
        let records: Vec<_> = (0..25)
            .map(|_| record(0.42, 0.17, TransformState::identity(0)))
            .collect();
        let opts = HeatmapOptions {
            bandwidth: Some(0.9),
            ..HeatmapOptions::new(100, 100)
        };
        let grid = heatmap_screen(&records, &geom, &opts).unwrap();
        assert_eq!(grid.cell_size, 10.0);
        assert_eq!(grid.value(42, 17), 25.0);
        assert_eq!(grid.values.iter().filter(|v| **v > 0.0).count(), 1);
    }

    #[test]
    fn wide_kernel_conserves_mass_near_edges() {
        let geom = ViewportGeometry::identity(500.0, 300.0);
        let records = vec![
            record(0.0, 0.0, TransformState::identity(0)),
            record(1.0, 1.0, TransformState::identity(0)),
            record(0.5, 0.5, TransformState::identity(0)),
        ];
        let opts = HeatmapOptions {
            bandwidth: Some(40.0),
            ..HeatmapOptions::new(25, 15)
        };
        let grid = heatmap_screen(&records, &geom, &opts).unwrap();
        assert!((grid.total_mass() - 3.0).abs() < 1e-9);
        assert!(grid.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn off_screen_excluded_unless_requested() {
        let geom = ViewportGeometry::identity(100.0, 100.0);
        let records = vec![
            record(1.5, 0.5, TransformState::identity(0)),
            record(0.5, 0.5, TransformState::identity(0)),
        ];
        let grid = heatmap_screen(&records, &geom, &HeatmapOptions::new(10, 10)).unwrap();
        assert_eq!((grid.included, grid.excluded), (1, 1));
        let opts = HeatmapOptions {
            include_off_frame: true,
            ..HeatmapOptions::new(10, 10)
        };
        let grid = heatmap_screen(&records, &geom, &opts).unwrap();
        assert_eq!((grid.included, grid.excluded), (2, 0));
        assert!((grid.total_mass() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn empty_and_invalid() {
        let geom = ViewportGeometry::identity(100.0, 100.0);
        let grid = heatmap_image(&[], &geom, &HeatmapOptions::new(4, 4)).unwrap();
        assert_eq!(grid.included, 0);
        assert_eq!(grid.max_value(), 0.0);
        assert!(matches!(
            heatmap_screen(&[], &geom, &HeatmapOptions::new(0, 4)),
            Err(AnalysisError::InvalidGrid)
        ));
        let opts = HeatmapOptions {
            bandwidth: Some(0.0),
            ..HeatmapOptions::new(4, 4)
        };
        assert!(matches!(
            heatmap_screen(&[], &geom, &opts),
            Err(AnalysisError::InvalidBandwidth(_))
        ));
    }

    #[test]
    fn identity_transforms_match_screen_up_to_scaling() {
        // Widget fills the screen and the image is twice the displayed size.
        let mut geom = ViewportGeometry::identity(400.0, 200.0);
        geom.intrinsic_w = 800.0;
        geom.intrinsic_h = 400.0;
        let records: Vec<_> = (0..40)
            .map(|k| {
                record(
                    0.1 + 0.02 * k as f64,
                    0.3 + 0.01 * k as f64,
                    TransformState::identity(k),
                )
            })
            .collect();
        let screen = heatmap_screen(
            &records,
            &geom,
            &HeatmapOptions {
                bandwidth: Some(15.0),
                ..HeatmapOptions::new(40, 20)
            },
        )
        .unwrap();
        let image = heatmap_image(
            &records,
            &geom,
            &HeatmapOptions {
                bandwidth: Some(30.0),
                ..HeatmapOptions::new(40, 20)
            },
        )
        .unwrap();
        assert_eq!(image.cell_size, 2.0 * screen.cell_size);
        for (a, b) in screen.values.iter().zip(&image.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_records_are_excluded_from_image_map() {
        let geom = ViewportGeometry::identity(100.0, 100.0);
        let mut st = TransformState::identity(0);
        st.scale = 1e-8;
        let grid =
            heatmap_image(&[record(0.5, 0.5, st)], &geom, &HeatmapOptions::new(4, 4)).unwrap();
        assert_eq!((grid.included, grid.excluded), (0, 1));
    }
}
