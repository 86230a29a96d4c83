//! Raster output for heatmaps, traces and replay frames. Rendering is a
//! pure function of its inputs, so identical sessions produce identical
//! PNG bytes.

use std::fs;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{AnalysisError, HeatmapGrid, ReplayFrame, TracePolyline};
use crate::geometry::{compose_transform, HomPoint, ViewportGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Colormap {
    /// background -> red -> yellow -> white
    Heat,
    Gray,
}

impl Colormap {
    /// `v` in `[0, 1]`; 0 is the background and 1 is full intensity.
    pub fn color(&self, v: f64, background: [u8; 3]) -> [u8; 3] {
        let v = if v.is_finite() {
            v.clamp(0.0, 1.0)
        } else {
            0.0
        };
        let stops: &[(f64, [u8; 3])] = match self {
            Colormap::Heat => &[
                (0.0, background),
                (0.35, [200, 0, 0]),
                (0.7, [255, 200, 0]),
                (1.0, [255, 255, 255]),
            ],
            Colormap::Gray => &[(0.0, background), (1.0, [255, 255, 255])],
        };
        for pair in stops.windows(2) {
            let (lo, a) = pair[0];
            let (hi, b) = pair[1];
            if v <= hi {
                let f = (v - lo) / (hi - lo);
                let lerp = |i: usize| (a[i] as f64 + (b[i] as f64 - a[i] as f64) * f).round() as u8;
                return [lerp(0), lerp(1), lerp(2)];
            }
        }
        stops[stops.len() - 1].1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    /// Pixels per heatmap cell edge.
    pub cell_px: u32,
    /// Long side of trace and replay canvases.
    pub canvas_px: u32,
    pub background: [u8; 3],
    pub colormap: Colormap,
    pub stroke: [u8; 3],
    pub gaze: [u8; 3],
    pub dot_radius: i64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            cell_px: 4,
            canvas_px: 640,
            background: [12, 12, 24],
            colormap: Colormap::Heat,
            stroke: [90, 200, 255],
            gaze: [255, 60, 60],
            dot_radius: 4,
        }
    }
}

pub fn render_heatmap(grid: &HeatmapGrid, style: &RenderStyle) -> RgbImage {
    let cell = style.cell_px.max(1);
    let max = grid.max_value();
    let mut img = RgbImage::new(grid.cols as u32 * cell, grid.rows as u32 * cell);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let v = grid.value((x / cell) as usize, (y / cell) as usize);
        let norm = if max > 0.0 { v / max } else { 0.0 };
        *px = Rgb(style.colormap.color(norm, style.background));
    }
    img
}

struct Canvas {
    img: RgbImage,
    scale: f64,
    offset_x: f64,
}

impl Canvas {
    fn new(width: u32, height: u32, scale: f64, background: [u8; 3]) -> Self {
        Self {
            img: RgbImage::from_pixel(width.max(1), height.max(1), Rgb(background)),
            scale,
            offset_x: 0.0,
        }
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        (self.offset_x + x * self.scale, y * self.scale)
    }

    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, Rgb(color));
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
        let (ax, ay) = self.to_px(a.0, a.1);
        let (bx, by) = self.to_px(b.0, b.1);
        if !(ax.is_finite() && ay.is_finite() && bx.is_finite() && by.is_finite()) {
            return;
        }
        let steps = (bx - ax).abs().max((by - ay).abs()).ceil().min(1e5) as i64;
        for i in 0..=steps.max(1) {
            let f = i as f64 / steps.max(1) as f64;
            self.put(
                (ax + (bx - ax) * f).round() as i64,
                (ay + (by - ay) * f).round() as i64,
                color,
            );
        }
    }

    fn dot(&mut self, p: (f64, f64), radius: i64, color: [u8; 3]) {
        let (cx, cy) = self.to_px(p.0, p.1);
        if !(cx.is_finite() && cy.is_finite()) {
            return;
        }
        let (cx, cy) = (cx.round() as i64, cy.round() as i64);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy <= radius * radius {
                    self.put(cx + dx, cy + dy, color);
                }
            }
        }
    }

    fn polygon(&mut self, pts: &[(f64, f64)], color: [u8; 3]) {
        for i in 0..pts.len() {
            self.line(pts[i], pts[(i + 1) % pts.len()], color);
        }
    }
}

fn fit(extent: (f64, f64), long_side: u32) -> (u32, u32, f64) {
    let scale = long_side as f64 / extent.0.max(extent.1);
    (
        (extent.0 * scale).round() as u32,
        (extent.1 * scale).round() as u32,
        scale,
    )
}

/// Draws the polyline over a canvas spanning `extent` (frame pixels).
pub fn render_trace(line: &TracePolyline, extent: (f64, f64), style: &RenderStyle) -> RgbImage {
    let (w, h, scale) = fit(extent, style.canvas_px);
    let mut canvas = Canvas::new(w, h, scale, style.background);
    canvas.polygon(
        &[(0.0, 0.0), (extent.0, 0.0), extent, (0.0, extent.1)],
        [70, 70, 70],
    );
    for pair in line.points.windows(2) {
        canvas.line((pair[0].x, pair[0].y), (pair[1].x, pair[1].y), style.stroke);
    }
    if let (Some(first), Some(last)) = (line.points.first(), line.points.last()) {
        canvas.dot((first.x, first.y), style.dot_radius, [60, 220, 60]);
        canvas.dot((last.x, last.y), style.dot_radius, style.gaze);
    }
    canvas.img
}

/// Screen view (left: widget, manipulated image outline and gaze) beside
/// the intrinsic image view (right: reconstructed gaze).
pub fn render_replay_frame(
    frame: &ReplayFrame,
    geom: &ViewportGeometry,
    style: &RenderStyle,
) -> RgbImage {
    let (sw, sh, s_scale) = fit((geom.screen_w, geom.screen_h), style.canvas_px);
    let i_scale = sh as f64 / geom.intrinsic_h;
    let iw = (geom.intrinsic_w * i_scale).round() as u32;
    let mut canvas = Canvas::new(sw + iw, sh, s_scale, style.background);

    let (ox, oy) = (geom.origin_x, geom.origin_y);
    canvas.polygon(
        &[
            (ox, oy),
            (ox + geom.displayed_w, oy),
            (ox + geom.displayed_w, oy + geom.displayed_h),
            (ox, oy + geom.displayed_h),
        ],
        [70, 70, 70],
    );
    if let Ok(m) = compose_transform(&frame.transform, geom) {
        let corners = [
            (0.0, 0.0),
            (geom.displayed_w, 0.0),
            (geom.displayed_w, geom.displayed_h),
            (0.0, geom.displayed_h),
        ]
        .map(|(x, y)| {
            let p = m.apply(HomPoint::new(x, y));
            (p.x + ox, p.y + oy)
        });
        canvas.polygon(&corners, style.stroke);
    }
    if let Some(p) = frame.gaze_screen {
        canvas.dot(p, style.dot_radius, style.gaze);
    }

    canvas.scale = i_scale;
    canvas.offset_x = sw as f64;
    canvas.polygon(
        &[
            (0.0, 0.0),
            (geom.intrinsic_w, 0.0),
            (geom.intrinsic_w, geom.intrinsic_h),
            (0.0, geom.intrinsic_h),
        ],
        style.stroke,
    );
    if let Some(p) = frame.gaze_intrinsic {
        canvas.dot(p, style.dot_radius, style.gaze);
    }
    canvas.img
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<(), AnalysisError> {
    img.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), AnalysisError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("analysis output serializes");
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes the PNG and a `.json` sidecar with the grid parameters.
pub fn write_heatmap(
    grid: &HeatmapGrid,
    style: &RenderStyle,
    png: &Path,
) -> Result<(), AnalysisError> {
    write_png(&render_heatmap(grid, style), png)?;
    write_json(&grid.sidecar(), &png.with_extension("json"))
}

/// Writes the PNG and the polyline as `.json`.
pub fn write_trace(
    line: &TracePolyline,
    extent: (f64, f64),
    style: &RenderStyle,
    png: &Path,
) -> Result<(), AnalysisError> {
    write_png(&render_trace(line, extent, style), png)?;
    write_json(line, &png.with_extension("json"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayIndexEntry {
    pub file: String,
    #[serde(flatten)]
    pub frame: ReplayFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayIndex {
    pub fps: f64,
    pub frames: Vec<ReplayIndexEntry>,
}

/// Numbered `frame_NNNNN.png` files plus `index.json` in `dir`.
pub fn write_replay(
    frames: &[ReplayFrame],
    fps: f64,
    geom: &ViewportGeometry,
    style: &RenderStyle,
    dir: &Path,
) -> Result<ReplayIndex, AnalysisError> {
    fs::create_dir_all(dir)?;
    let mut index = ReplayIndex {
        fps,
        frames: Vec::with_capacity(frames.len()),
    };
    for frame in frames {
        let file = format!("frame_{:05}.png", frame.index);
        write_png(&render_replay_frame(frame, geom, style), &dir.join(&file))?;
        index.frames.push(ReplayIndexEntry {
            file,
            frame: frame.clone(),
        });
    }
    write_json(&index, &dir.join("index.json"))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{heatmap_screen, HeatmapOptions};
    use crate::sync::CombinedRecord;

    #[test]
    fn empty_grid_is_uniform_background() {
        let geom = ViewportGeometry::identity(100.0, 100.0);
        let grid = heatmap_screen(&[], &geom, &HeatmapOptions::new(5, 5)).unwrap();
        let style = RenderStyle::default();
        let img = render_heatmap(&grid, &style);
        assert_eq!(img.dimensions(), (20, 20));
        assert!(img.pixels().all(|p| p.0 == style.background));
    }

    #[test]
    fn max_cell_is_full_intensity() {
        let geom = ViewportGeometry::identity(100.0, 100.0);
        let r = CombinedRecord {
            pid: "p".into(),
            task: "t".into(),
            xn: 0.5,
            yn: 0.5,
            t: 0,
            scale: 1.0,
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
            sync_offset_ms: 0,
        };
        let grid = heatmap_screen(&[r], &geom, &HeatmapOptions::new(10, 10)).unwrap();
        let img = render_heatmap(&grid, &RenderStyle::default());
        assert!(img.pixels().any(|p| p.0 == [255, 255, 255]));
    }

    #[test]
    fn colormap_endpoints() {
        let bg = [1, 2, 3];
        assert_eq!(Colormap::Heat.color(0.0, bg), bg);
        assert_eq!(Colormap::Heat.color(1.0, bg), [255, 255, 255]);
        assert_eq!(Colormap::Gray.color(2.0, bg), [255, 255, 255]);
        assert_eq!(Colormap::Gray.color(f64::NAN, bg), bg);
    }
}
