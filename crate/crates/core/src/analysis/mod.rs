//! Post-hoc analysis of merged sessions.

mod guided;
mod heatmap;
mod render;
mod replay;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;

pub use guided::{guided_error, median, GuidedErrorReport};
pub use heatmap::{
    heatmap_image, heatmap_screen, rms_spread, HeatmapGrid, HeatmapOptions, HeatmapSidecar,
};
pub use render::{
    render_heatmap, render_replay_frame, render_trace, write_heatmap, write_png, write_replay,
    write_trace, Colormap, RenderStyle, ReplayIndex, ReplayIndexEntry,
};
pub use replay::{replay_frames, ReplayFrame};
pub use trace::{trace, TracePoint, TracePolyline};

/// Coordinate frame an analysis product is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Screen,
    Intrinsic,
}

impl std::str::FromStr for Frame {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "screen" => Ok(Frame::Screen),
            "intrinsic" | "image" => Ok(Frame::Intrinsic),
            other => Err(format!(
                "unknown frame {other:?} (expected screen or intrinsic)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("grid must have at least one column and row")]
    InvalidGrid,
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("fps must be positive and finite, got {0}")]
    InvalidFps(f64),
    #[error("no samples to summarize")]
    Empty,
    #[error("target ({0}, {1}) lies outside the intrinsic image")]
    TargetOutsideImage(f64, f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl AnalysisError {
    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            AnalysisError::Io(_) | AnalysisError::Image(image::ImageError::IoError(_))
        )
    }
}
