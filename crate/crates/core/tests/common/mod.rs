//! Independent reference implementations used as test oracles. Nothing here
//! calls into the code under test except for plain data types.
#![allow(dead_code)]

use gazealign_core::{GazeSample, TransformState, ViewportGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DET_EPS: f64 = 1e-12;

/// Full 3x3 inverse by cofactors.
pub fn adjugate_inverse(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c =
        |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let cof = [
        [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
        [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
        [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
    ];
    let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
    if det.abs() < DET_EPS {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (col, v) in row.iter_mut().enumerate() {
            *v = cof[col][r] / det;
        }
    }
    Some(inv)
}

pub fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

/// The manipulation written out element by element.
pub fn forward_matrix(st: &TransformState, geom: &ViewportGeometry) -> [[f64; 3]; 3] {
    let (cx, cy) = (geom.displayed_w / 2.0, geom.displayed_h / 2.0);
    let (sin, cos) = st.theta.sin_cos();
    let (a, b, c, d) = (
        st.scale * cos,
        -st.scale * sin,
        st.scale * sin,
        st.scale * cos,
    );
    [
        [a, b, cx + st.tx - a * cx - b * cy],
        [c, d, cy + st.ty - c * cx - d * cy],
        [0.0, 0.0, 1.0],
    ]
}

/// Normalized gaze to intrinsic pixels with scalar trigonometry only.
pub fn reconstruct_scalar(
    xn: f64,
    yn: f64,
    st: &TransformState,
    geom: &ViewportGeometry,
) -> Option<(f64, f64)> {
    if st.scale * st.scale < DET_EPS {
        return None;
    }
    let (cx, cy) = (geom.displayed_w / 2.0, geom.displayed_h / 2.0);
    let u = xn * geom.screen_w - geom.origin_x - st.tx - cx;
    let v = yn * geom.screen_h - geom.origin_y - st.ty - cy;
    let (sin, cos) = st.theta.sin_cos();
    let dx = (cos * u + sin * v) / st.scale + cx;
    let dy = (-sin * u + cos * v) / st.scale + cy;
    Some((
        dx * geom.intrinsic_w / geom.displayed_w,
        dy * geom.intrinsic_h / geom.displayed_h,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleOutcome {
    Matched { transform: usize },
    NoTransform,
    Singular,
}

/// Scans every transform for each gaze sample. Ties on |dt| go to the
/// lowest index.
pub fn brute_force_merge(
    gaze: &[GazeSample],
    transforms: &[TransformState],
    delta: i64,
) -> Vec<OracleOutcome> {
    gaze.iter()
        .map(|g| {
            let mut best: Option<(i64, usize)> = None;
            for (i, st) in transforms.iter().enumerate() {
                let dt = (g.t - st.t).abs();
                if best.is_none_or(|(d, _)| dt < d) {
                    best = Some((dt, i));
                }
            }
            match best {
                Some((dt, i)) if dt <= delta => {
                    let s = transforms[i].scale;
                    if s * s < DET_EPS {
                        OracleOutcome::Singular
                    } else {
                        OracleOutcome::Matched { transform: i }
                    }
                }
                _ => OracleOutcome::NoTransform,
            }
        })
        .collect()
}

/// Sorted gaze and transform streams with jitter, drops, duplicate
/// timestamps and the occasional singular transform.
pub fn random_streams(seed: u64, max_events: usize) -> (Vec<GazeSample>, Vec<TransformState>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_gaze = rng.random_range(0..=max_events);
    let n_tf = rng.random_range(0..=max_events);
    let jitter = rng.random_range(0..=80i64);
    let drop = rng.random_range(0.0..0.1);
    let gaze_step = rng.random_range(10..=60i64);
    let tf_step = rng.random_range(5..=60i64);
    let start = rng.random_range(0..1_000i64);

    let mut gaze = Vec::new();
    for k in 0..n_gaze as i64 {
        let t = (start + k * gaze_step + rng.random_range(-jitter..=jitter)).max(0);
        let (xn, yn) = (rng.random_range(-0.1..1.1), rng.random_range(-0.1..1.1));
        if rng.random::<f64>() >= drop {
            gaze.push(GazeSample {
                pid: "p".into(),
                task: "t".into(),
                xn,
                yn,
                t,
            });
        }
    }
    gaze.sort_by_key(|g| g.t);

    let mut transforms = Vec::new();
    for k in 0..n_tf as i64 {
        let t = (start + k * tf_step + rng.random_range(-jitter..=jitter)).max(0);
        let mut st = random_transform(&mut rng, t);
        if rng.random::<f64>() < 0.03 {
            st.scale = 1e-7;
        }
        if rng.random::<f64>() >= drop {
            transforms.push(st);
        }
    }
    if transforms.len() > 2 && rng.random::<f64>() < 0.3 {
        let i = rng.random_range(1..transforms.len());
        transforms[i].t = transforms[i - 1].t;
    }
    transforms.sort_by_key(|st| st.t);
    (gaze, transforms)
}

/// Every merge of `a` and `b` that keeps each sequence in order, as
/// lists of `true` (take from `a`) / `false` (take from `b`).
pub fn interleavings(a: usize, b: usize) -> Vec<Vec<bool>> {
    if a == 0 {
        return vec![vec![false; b]];
    }
    if b == 0 {
        return vec![vec![true; a]];
    }
    let mut out = Vec::new();
    for mut rest in interleavings(a - 1, b) {
        rest.insert(0, true);
        out.push(rest);
    }
    for mut rest in interleavings(a, b - 1) {
        rest.insert(0, false);
        out.push(rest);
    }
    out
}

pub fn random_geometry(rng: &mut impl Rng) -> ViewportGeometry {
    let screen_w = rng.random_range(200.0..3000.0);
    let screen_h = rng.random_range(200.0..3000.0);
    let displayed_w = rng.random_range(50.0..screen_w);
    let displayed_h = rng.random_range(50.0..screen_h);
    ViewportGeometry {
        screen_w,
        screen_h,
        origin_x: rng.random_range(0.0..screen_w - displayed_w),
        origin_y: rng.random_range(0.0..screen_h - displayed_h),
        displayed_w,
        displayed_h,
        intrinsic_w: rng.random_range(50.0..6000.0),
        intrinsic_h: rng.random_range(50.0..6000.0),
    }
}

pub fn random_transform(rng: &mut impl Rng, t: i64) -> TransformState {
    TransformState {
        scale: rng.random_range(0.2..8.0),
        theta: rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI),
        tx: rng.random_range(-2000.0..=2000.0),
        ty: rng.random_range(-2000.0..=2000.0),
        t,
    }
}

/// Median by full sort; even lengths average the middle pair.
pub fn median_oracle(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median distance between the reconstructed gaze and the true fixation
/// target over all merged records of a generated session.
pub fn median_reconstruction_error(
    scenario: &gazealign_core::simulator::Scenario,
    faults: &gazealign_core::simulator::FaultModel,
) -> f64 {
    let data = gazealign_core::simulator::generate(scenario, faults).unwrap();
    let merged = gazealign_core::merge_offline(
        &data.gaze,
        &data.transforms,
        &gazealign_core::SyncConfig::default(),
    )
    .unwrap();
    let (tx, ty) = scenario.target();
    let errors: Vec<f64> = merged
        .records
        .iter()
        .filter_map(|r| reconstruct_scalar(r.xn, r.yn, &r.transform(), &scenario.geom))
        .map(|(x, y)| ((x - tx).powi(2) + (y - ty).powi(2)).sqrt())
        .collect();
    median_oracle(&errors)
}
