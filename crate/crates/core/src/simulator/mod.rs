//! Synthetic sessions with known ground truth.
//!
//! The transform trajectory is a closed-form function of time for each
//! scenario kind. Gaze is the on-screen position of a fixed intrinsic
//! target under the true transform at the gaze time, plus isotropic
//! Gaussian noise and an optional linear drift. Faults (jitter, drops,
//! pairing offset) are applied after clean generation.
//!
//! Randomness comes from ChaCha8 with one stream per purpose, so e.g. the
//! gaze noise draws do not depend on how many transform events exist.

mod interleave;
mod scenario;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{screen_from_intrinsic, GeometryError, HomPoint, TransformState};
use crate::sync::{CalibrationEvent, CalibrationKind, GazeSample};

pub use interleave::{interleave, Batch, Interleaving};
pub use scenario::{
    default_geometry, FaultModel, Kinematics, Scenario, ScenarioKind, SimulationConfig,
    DEFAULT_START_MS,
};

const STREAM_GAZE_NOISE: u64 = 1;
const STREAM_GAZE_JITTER: u64 = 2;
const STREAM_GAZE_DROP: u64 = 3;
const STREAM_TRANSFORM_JITTER: u64 = 4;
const STREAM_TRANSFORM_DROP: u64 = 5;
pub(crate) const STREAM_INTERLEAVE: u64 = 6;

/// Unit direction of the drift bias in screen pixels.
const DRIFT_DIRECTION: (f64, f64) = (0.6, 0.8);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid fault model: {0}")]
    InvalidFaults(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Truth attached to one emitted gaze sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Logged (possibly jittered) gaze timestamp.
    pub t: i64,
    /// Time at which the gaze was actually generated.
    pub true_t: i64,
    pub intrinsic: (f64, f64),
    pub transform: TransformState,
    /// Screen pixels before noise and drift.
    pub screen: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub gaze: Vec<GazeSample>,
    pub transforms: Vec<TransformState>,
    pub events: Vec<CalibrationEvent>,
    /// One entry per element of `gaze`, in the same order.
    pub truth: Vec<GroundTruth>,
}

/// True manipulation state `elapsed_ms` into the session.
pub fn trajectory(
    kind: ScenarioKind,
    kin: &Kinematics,
    duration_ms: i64,
    elapsed_ms: i64,
) -> (f64, f64, f64, f64) {
    let tau = (elapsed_ms as f64 / duration_ms as f64).clamp(0.0, 1.0);
    let omega = kin.angular_speed_dps.to_radians();
    let elapsed_s = elapsed_ms as f64 / 1000.0;
    match kind {
        ScenarioKind::GuidedLine => (1.0, 0.0, -kin.pan_px * tau, 0.0),
        ScenarioKind::GuidedDiamond => {
            let r = kin.pan_px / 2.0;
            let vertices = [(r, 0.0), (0.0, r), (-r, 0.0), (0.0, -r)];
            let u = (4.0 * tau).min(4.0 - 1e-12);
            let i = u.floor() as usize;
            let f = u - i as f64;
            let (a, b) = (vertices[i], vertices[(i + 1) % 4]);
            (1.0, 0.0, a.0 + (b.0 - a.0) * f, a.1 + (b.1 - a.1) * f)
        }
        ScenarioKind::GuidedArc => {
            let r = kin.pan_px / 2.0;
            let phi = std::f64::consts::PI * tau;
            (1.0, 0.0, r * (phi.cos() - 1.0), -r * phi.sin())
        }
        ScenarioKind::GuidedRotate => {
            let limit = kin.rotation_limit_rad;
            if limit <= 0.0 || omega <= 0.0 {
                return (1.0, 0.0, 0.0, 0.0);
            }
            let phase = (elapsed_s * omega).rem_euclid(4.0 * limit);
            let theta = if phase < limit {
                phase
            } else if phase < 3.0 * limit {
                2.0 * limit - phase
            } else {
                phase - 4.0 * limit
            };
            (1.0, theta, 0.0, 0.0)
        }
        ScenarioKind::ReadingPan => {
            let zoom = 1.0 + (kin.zoom_max - 1.0) * (tau / 0.1).min(1.0);
            (zoom, 0.0, 0.0, -kin.pan_px * tau)
        }
        ScenarioKind::ReadingRotated => {
            let theta = kin.rotation_limit_rad * (tau / 0.15).min(1.0);
            (1.0, theta, -kin.pan_px * tau, 0.0)
        }
        ScenarioKind::SearchCompound => {
            let seg_ms = kin.segment_ms.max(1);
            let segment = elapsed_ms.div_euclid(seg_ms);
            let f = elapsed_ms.rem_euclid(seg_ms) as f64 / seg_ms as f64;
            let sweep = omega * seg_ms as f64 / 1000.0;
            let (p, z) = (kin.pan_px, kin.zoom_max);
            match segment.rem_euclid(4) {
                0 => (1.0, sweep * f, p * f, 0.0),
                1 => (z.powf(f), sweep * (1.0 - f), p, 0.0),
                2 => (z, sweep * f, p, p * f),
                _ => (
                    z.powf(1.0 - f),
                    sweep * (1.0 - f),
                    p * (1.0 - f),
                    p * (1.0 - f),
                ),
            }
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidScenario(m.to_owned()));
        if self.duration_ms <= 0 {
            return bad("duration_ms must be positive");
        }
        if !(self.gaze_rate_hz > 0.0 && self.gaze_rate_hz.is_finite()) {
            return bad("gaze_rate_hz must be positive");
        }
        if !(self.transform_rate_hz > 0.0 && self.transform_rate_hz.is_finite()) {
            return bad("transform_rate_hz must be positive");
        }
        if self.start_ms < 0 {
            return bad("start_ms must be non-negative");
        }
        if !(self.gaze_noise_sigma_px >= 0.0 && self.gaze_noise_sigma_px.is_finite()) {
            return bad("gaze_noise_sigma_px must be non-negative");
        }
        if self.pid.is_empty() || self.task_name().is_empty() {
            return bad("pid and task must be non-empty");
        }
        self.geom.validate()?;
        let (x, y) = self.target();
        if !self.geom.is_on_image(&HomPoint::new(x, y)) {
            return bad("fixation target must lie inside the intrinsic image");
        }
        let kin = self.kinematics();
        if !(kin.zoom_max > 0.0 && kin.pan_px.is_finite() && kin.angular_speed_dps.is_finite()) {
            return bad("kinematics out of range");
        }
        Ok(())
    }

    /// Timestamps `start + floor(k * 1000 / rate)` for every `k` whose offset
    /// falls inside the session.
    fn timestamps(&self, rate_hz: f64) -> Vec<i64> {
        let count = (self.duration_ms as f64 * rate_hz / 1000.0).ceil() as i64;
        (0..count)
            .map(|k| (k as f64 * 1000.0 / rate_hz).floor() as i64)
            .filter(|&offset| offset < self.duration_ms)
            .map(|offset| self.start_ms + offset)
            .collect()
    }

    pub fn true_state(&self, t: i64) -> TransformState {
        let (scale, theta, tx, ty) = trajectory(
            self.kind,
            &self.kinematics(),
            self.duration_ms,
            t - self.start_ms,
        );
        TransformState {
            scale,
            theta,
            tx,
            ty,
            t,
        }
    }
}

impl FaultModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidFaults(m.to_owned()));
        if self.timestamp_jitter_ms < 0 || self.pairing_offset_ms < 0 {
            return bad("jitter and pairing offset must be non-negative");
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return bad("drop_prob must lie in [0, 1)");
        }
        if !(self.drift_px_per_min >= 0.0 && self.drift_px_per_min.is_finite()) {
            return bad("drift_px_per_min must be non-negative");
        }
        if !(self.recalibration_threshold_px >= 0.0 && self.recalibration_threshold_px.is_finite())
        {
            return bad("recalibration_threshold_px must be non-negative");
        }
        Ok(())
    }
}

/// Applies drops then jitter, returning kept indices with their logged
/// timestamps, sorted stably by timestamp.
fn perturb(
    timestamps: &[i64],
    faults: &FaultModel,
    seed: u64,
    jitter_stream: u64,
    drop_stream: u64,
) -> Vec<(usize, i64)> {
    let mut jitter_rng = stream_rng(seed, jitter_stream);
    let mut drop_rng = stream_rng(seed, drop_stream);
    let j = faults.timestamp_jitter_ms;
    let mut kept: Vec<(usize, i64)> = timestamps
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| {
            let shift = if j > 0 {
                jitter_rng.random_range(-j..=j)
            } else {
                0
            };
            let dropped = drop_rng.random::<f64>() < faults.drop_prob;
            (!dropped).then_some((i, (t + shift).max(0)))
        })
        .collect();
    kept.sort_by_key(|&(_, t)| t);
    kept
}

/// Deterministic in `(scenario, faults)`; the seed lives in the scenario.
pub fn generate(scenario: &Scenario, faults: &FaultModel) -> Result<Generated, SimError> {
    scenario.validate()?;
    faults.validate()?;
    let geom = &scenario.geom;
    let task = scenario.task_name();
    let (tx, ty) = scenario.target();
    let target = HomPoint::new(tx, ty);
    let noise = Normal::new(0.0, scenario.gaze_noise_sigma_px)
        .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    let mut noise_rng = stream_rng(scenario.seed, STREAM_GAZE_NOISE);

    let mut events = vec![CalibrationEvent {
        kind: CalibrationKind::Initial,
        t: scenario.start_ms,
    }];
    let mut drift_origin = scenario.start_ms;

    let gaze_times = scenario.timestamps(scenario.gaze_rate_hz);
    let mut clean = Vec::with_capacity(gaze_times.len());
    for &t in &gaze_times {
        let st = scenario.true_state(t);
        let screen = screen_from_intrinsic(target, &st, geom)?;
        let mut bias = faults.drift_px_per_min * (t - drift_origin) as f64 / 60_000.0;
        if faults.recalibration_threshold_px > 0.0 && bias >= faults.recalibration_threshold_px {
            events.push(CalibrationEvent {
                kind: CalibrationKind::Recalibration,
                t,
            });
            drift_origin = t;
            bias = 0.0;
        }
        let nx = noise.sample(&mut noise_rng);
        let ny = noise.sample(&mut noise_rng);
        let gx = screen.x + nx + bias * DRIFT_DIRECTION.0;
        let gy = screen.y + ny + bias * DRIFT_DIRECTION.1;
        let truth = GroundTruth {
            t,
            true_t: t,
            intrinsic: (tx, ty),
            transform: st,
            screen: (screen.x, screen.y),
        };
        clean.push((gx / geom.screen_w, gy / geom.screen_h, truth));
    }

    let gaze_kept = perturb(
        &gaze_times,
        faults,
        scenario.seed,
        STREAM_GAZE_JITTER,
        STREAM_GAZE_DROP,
    );
    let mut gaze = Vec::with_capacity(gaze_kept.len());
    let mut truth = Vec::with_capacity(gaze_kept.len());
    for (i, t) in gaze_kept {
        let (xn, yn, mut gt) = clean[i];
        gt.t = t;
        gaze.push(GazeSample {
            pid: scenario.pid.clone(),
            task: task.clone(),
            xn,
            yn,
            t,
        });
        truth.push(gt);
    }

    let transform_times = scenario.timestamps(scenario.transform_rate_hz);
    let logged: Vec<i64> = transform_times
        .iter()
        .map(|t| t + faults.pairing_offset_ms)
        .collect();
    let transforms = perturb(
        &logged,
        faults,
        scenario.seed,
        STREAM_TRANSFORM_JITTER,
        STREAM_TRANSFORM_DROP,
    )
    .into_iter()
    .map(|(i, t)| TransformState {
        t,
        ..scenario.true_state(transform_times[i])
    })
    .collect();

    Ok(Generated {
        gaze,
        transforms,
        events,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::reconstruct;
    use crate::sync::{merge_offline, SyncConfig};

    #[test]
    fn one_period_gives_one_sample() {
        let mut s = Scenario::new(ScenarioKind::GuidedLine, 1);
        s.duration_ms = 33;
        let g = generate(&s, &FaultModel::default()).unwrap();
        assert_eq!(g.gaze.len(), 1);
        s.duration_ms = 34;
        assert_eq!(generate(&s, &FaultModel::default()).unwrap().gaze.len(), 2);
    }

    #[test]
    fn thirty_minutes_at_default_rates() {
        let mut s = Scenario::new(ScenarioKind::GuidedLine, 1);
        s.duration_ms = 30 * 60 * 1000;
        assert_eq!(s.timestamps(30.0).len(), 54_000);
        assert_eq!(s.timestamps(60.0).len(), 108_000);
    }

    #[test]
    fn clean_guided_line_reconstructs_target() {
        let s = Scenario::new(ScenarioKind::GuidedLine, 7);
        let g = generate(&s, &FaultModel::default()).unwrap();
        let merged = merge_offline(&g.gaze, &g.transforms, &SyncConfig::default()).unwrap();
        assert_eq!(merged.records.len(), g.gaze.len());
        let (tx, ty) = s.target();
        for r in &merged.records {
            assert_eq!(r.sync_offset_ms, 0);
            let p = reconstruct(r.xn, r.yn, &r.transform(), &s.geom).unwrap();
            assert!((p.x - tx).abs() < 1e-6 && (p.y - ty).abs() < 1e-6);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mut s = Scenario::new(ScenarioKind::SearchCompound, 99);
        s.gaze_noise_sigma_px = 12.0;
        let f = FaultModel {
            timestamp_jitter_ms: 20,
            drop_prob: 0.1,
            drift_px_per_min: 30.0,
            ..FaultModel::default()
        };
        assert_eq!(generate(&s, &f).unwrap(), generate(&s, &f).unwrap());
        s.seed = 100;
        assert_ne!(
            generate(&s, &f).unwrap().gaze,
            generate(
                &Scenario {
                    seed: 99,
                    ..s.clone()
                },
                &f
            )
            .unwrap()
            .gaze
        );
    }

    #[test]
    fn gaze_noise_independent_of_transform_faults() {
        let mut s = Scenario::new(ScenarioKind::GuidedArc, 5);
        s.gaze_noise_sigma_px = 10.0;
        let a = generate(&s, &FaultModel::default()).unwrap();
        let b = generate(
            &s,
            &FaultModel {
                pairing_offset_ms: 40,
                ..FaultModel::default()
            },
        )
        .unwrap();
        assert_eq!(a.gaze, b.gaze);
        assert_ne!(a.transforms, b.transforms);
    }

    #[test]
    fn streams_are_sorted_after_jitter() {
        let s = Scenario::new(ScenarioKind::ReadingPan, 3);
        let g = generate(
            &s,
            &FaultModel {
                timestamp_jitter_ms: 80,
                drop_prob: 0.2,
                ..FaultModel::default()
            },
        )
        .unwrap();
        assert!(g.gaze.windows(2).all(|w| w[0].t <= w[1].t));
        assert!(g.transforms.windows(2).all(|w| w[0].t <= w[1].t));
        assert_eq!(g.truth.len(), g.gaze.len());
        assert!(g.truth.iter().zip(&g.gaze).all(|(gt, gz)| gt.t == gz.t));
        assert!(g.gaze.len() < 900);
    }

    #[test]
    fn drift_triggers_recalibration() {
        let mut s = Scenario::new(ScenarioKind::GuidedLine, 3);
        s.duration_ms = 10 * 60 * 1000;
        let f = FaultModel {
            drift_px_per_min: 50.0,
            recalibration_threshold_px: 100.0,
            ..FaultModel::default()
        };
        let g = generate(&s, &f).unwrap();
        let recal = g
            .events
            .iter()
            .filter(|e| e.kind == CalibrationKind::Recalibration)
            .count();
        assert_eq!(recal, 4);
        assert_eq!(g.events[0].kind, CalibrationKind::Initial);
    }

    #[test]
    fn search_compound_rotates_past_45_degrees() {
        let s = Scenario::new(ScenarioKind::SearchCompound, 0);
        let max_theta = (0..s.duration_ms)
            .step_by(10)
            .map(|e| s.true_state(s.start_ms + e).theta)
            .fold(0.0, f64::max);
        assert!(max_theta > std::f64::consts::FRAC_PI_4);
        let kin = Kinematics {
            angular_speed_dps: 30.0,
            ..s.kinematics()
        };
        let (_, theta, _, _) =
            trajectory(ScenarioKind::SearchCompound, &kin, s.duration_ms, 2_000 - 1);
        assert!(theta > 0.78);
    }

    #[test]
    fn trajectories_are_continuous() {
        for kind in ScenarioKind::ALL {
            let s = Scenario::new(kind, 0);
            let mut prev = s.true_state(s.start_ms);
            for e in 1..s.duration_ms {
                let cur = s.true_state(s.start_ms + e);
                assert!((cur.tx - prev.tx).abs() < 1.0, "{kind} tx jump at {e}");
                assert!((cur.ty - prev.ty).abs() < 1.0, "{kind} ty jump at {e}");
                assert!(
                    (cur.theta - prev.theta).abs() < 0.01,
                    "{kind} theta jump at {e}"
                );
                assert!(
                    (cur.scale - prev.scale).abs() < 0.01,
                    "{kind} scale jump at {e}"
                );
                prev = cur;
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut s = Scenario::new(ScenarioKind::GuidedLine, 0);
        s.duration_ms = 0;
        assert!(generate(&s, &FaultModel::default()).is_err());
        let mut s = Scenario::new(ScenarioKind::GuidedLine, 0);
        s.fixation_target_intrinsic = Some((-1.0, 5.0));
        assert!(generate(&s, &FaultModel::default()).is_err());
        let s = Scenario::new(ScenarioKind::GuidedLine, 0);
        assert!(generate(
            &s,
            &FaultModel {
                drop_prob: 1.0,
                ..FaultModel::default()
            }
        )
        .is_err());
    }
}
