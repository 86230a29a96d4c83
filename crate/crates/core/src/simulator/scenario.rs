use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::ViewportGeometry;

/// Session start used by generated streams (2023-11-14T22:13:20Z).
pub const DEFAULT_START_MS: i64 = 1_700_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    GuidedLine,
    GuidedDiamond,
    GuidedArc,
    GuidedRotate,
    ReadingPan,
    ReadingRotated,
    SearchCompound,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::GuidedLine,
        ScenarioKind::GuidedDiamond,
        ScenarioKind::GuidedArc,
        ScenarioKind::GuidedRotate,
        ScenarioKind::ReadingPan,
        ScenarioKind::ReadingRotated,
        ScenarioKind::SearchCompound,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::GuidedLine => "guided-line",
            ScenarioKind::GuidedDiamond => "guided-diamond",
            ScenarioKind::GuidedArc => "guided-arc",
            ScenarioKind::GuidedRotate => "guided-rotate",
            ScenarioKind::ReadingPan => "reading-pan",
            ScenarioKind::ReadingRotated => "reading-rotated",
            ScenarioKind::SearchCompound => "search-compound",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

/// Pinned motion parameters of a scenario kind.
///
/// | kind            | motion                                                               |
/// |-----------------|----------------------------------------------------------------------|
/// | guided-line     | pan right-to-left by `pan_px` over the session                       |
/// | guided-diamond  | pan around a diamond with half-diagonal `pan_px / 2`                  |
/// | guided-arc      | semicircular pan of diameter `pan_px`                                 |
/// | guided-rotate   | triangle-wave rotation at `angular_speed_dps`, bounded by `rotation_limit_rad` |
/// | reading-pan     | zoom to `zoom_max` in the first 10%, then scroll up by `pan_px`       |
/// | reading-rotated | rotate to `rotation_limit_rad` in the first 15%, then pan by `pan_px` |
/// | search-compound | repeating 4-segment cycle of pan, zoom and rotation at `angular_speed_dps`, `segment_ms` per segment |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub pan_px: f64,
    pub angular_speed_dps: f64,
    pub rotation_limit_rad: f64,
    pub zoom_max: f64,
    pub segment_ms: i64,
}

impl Kinematics {
    pub fn preset(kind: ScenarioKind) -> Self {
        let base = Kinematics {
            pan_px: 600.0,
            angular_speed_dps: 0.0,
            rotation_limit_rad: 0.0,
            zoom_max: 1.0,
            segment_ms: 2_000,
        };
        match kind {
            ScenarioKind::GuidedLine | ScenarioKind::GuidedDiamond | ScenarioKind::GuidedArc => {
                base
            }
            ScenarioKind::GuidedRotate => Kinematics {
                pan_px: 0.0,
                angular_speed_dps: 30.0,
                rotation_limit_rad: FRAC_PI_4,
                ..base
            },
            ScenarioKind::ReadingPan => Kinematics {
                pan_px: 400.0,
                zoom_max: 1.5,
                ..base
            },
            ScenarioKind::ReadingRotated => Kinematics {
                pan_px: 300.0,
                rotation_limit_rad: FRAC_PI_2,
                ..base
            },
            ScenarioKind::SearchCompound => Kinematics {
                pan_px: 200.0,
                angular_speed_dps: 90.0,
                rotation_limit_rad: 0.0,
                zoom_max: 2.0,
                segment_ms: 2_000,
            },
        }
    }
}

/// iPhone-class portrait screen with the image widget below a header and an
/// image at 1.5x the displayed resolution.
pub fn default_geometry() -> ViewportGeometry {
    ViewportGeometry {
        screen_w: 1290.0,
        screen_h: 2796.0,
        origin_x: 0.0,
        origin_y: 398.0,
        displayed_w: 1290.0,
        displayed_h: 2000.0,
        intrinsic_w: 1935.0,
        intrinsic_h: 3000.0,
    }
}

/// One synthetic task session. Optional fields fall back to per-kind
/// presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub pid: String,
    /// Defaults to the kind name.
    pub task: Option<String>,
    pub duration_ms: i64,
    pub gaze_rate_hz: f64,
    pub transform_rate_hz: f64,
    pub start_ms: i64,
    pub geom: ViewportGeometry,
    pub fixation_target_intrinsic: Option<(f64, f64)>,
    pub gaze_noise_sigma_px: f64,
    pub seed: u64,
    pub kinematics: Option<Kinematics>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::new(ScenarioKind::GuidedLine, 0)
    }
}

impl Scenario {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Scenario {
            kind,
            pid: "sim".into(),
            task: None,
            duration_ms: 30_000,
            gaze_rate_hz: 30.0,
            transform_rate_hz: 60.0,
            start_ms: DEFAULT_START_MS,
            geom: default_geometry(),
            fixation_target_intrinsic: None,
            gaze_noise_sigma_px: 0.0,
            seed,
            kinematics: None,
        }
    }

    pub fn task_name(&self) -> String {
        self.task
            .clone()
            .unwrap_or_else(|| self.kind.name().to_owned())
    }

    pub fn kinematics(&self) -> Kinematics {
        self.kinematics
            .unwrap_or_else(|| Kinematics::preset(self.kind))
    }

    /// Guided tasks fixate the image center; rotating and searching tasks
    /// use an off-center target so rotation moves it on screen.
    pub fn target(&self) -> (f64, f64) {
        self.fixation_target_intrinsic.unwrap_or_else(|| {
            let (w, h) = (self.geom.intrinsic_w, self.geom.intrinsic_h);
            match self.kind {
                ScenarioKind::GuidedLine
                | ScenarioKind::GuidedDiamond
                | ScenarioKind::GuidedArc => (0.5 * w, 0.5 * h),
                ScenarioKind::ReadingPan | ScenarioKind::ReadingRotated => (0.3 * w, 0.4 * h),
                ScenarioKind::GuidedRotate => (0.7 * w, 0.35 * h),
                ScenarioKind::SearchCompound => (0.6 * w, 0.4 * h),
            }
        })
    }
}

/// Injected stream faults, applied after clean generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultModel {
    /// Half-width of the uniform integer timestamp jitter, per event.
    pub timestamp_jitter_ms: i64,
    /// Independent per-event drop probability, applied to both streams.
    pub drop_prob: f64,
    /// Constant shift added to logged transform timestamps.
    pub pairing_offset_ms: i64,
    /// Magnitude of the linear gaze bias ramp.
    pub drift_px_per_min: f64,
    /// Drift magnitude that triggers a recalibration (resetting the ramp).
    /// Zero disables recalibration.
    pub recalibration_threshold_px: f64,
}

/// Scenario plus faults, the layout of a simulation config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub scenario: Scenario,
    pub faults: FaultModel,
}
