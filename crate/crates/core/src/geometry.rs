//! Screen, viewport and intrinsic-image frames, and the pivoted similarity
//! transform that relates displayed content to the widget.
//!
//! Conventions used throughout:
//!
//! * All frames are y-down with the origin at the top-left corner.
//! * A positive rotation angle turns content clockwise on screen, i.e.
//!   `R(theta) = [[cos, -sin], [sin, cos]]` applied in the y-down frame.
//! * The manipulation matrix `M` lives in the viewport (widget-local) frame
//!   and pivots about the widget center `(wd / 2, hd / 2)`.
//!
//! Reconstruction runs screen -> viewport -> `M^-1` -> intrinsic scaling.

use std::ops::Mul;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum `|det|` of the linear 2x2 block for a transform to be inverted.
pub const DET_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid sample: non-finite coordinate ({x}, {y})")]
    InvalidSample { x: f64, y: f64 },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("degenerate scale factor {0}")]
    DegenerateScale(f64),
    #[error("invalid transform state: {0}")]
    InvalidTransform(&'static str),
    #[error("singular transform: |det| = {det:e}")]
    SingularTransform { det: f64 },
    #[error("matrix is not affine (bottom row must be 0 0 1)")]
    NotAffine,
}

/// A homogeneous 2D point. Every public operation returns `w == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomPoint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl HomPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y, w: 1.0 }
    }

    pub fn distance(&self, other: &HomPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn translation(tx: f64, ty: f64) -> Self {
        Mat3([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])
    }

    /// Clockwise-positive rotation in a y-down frame.
    pub fn rotation(theta: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        Mat3([[cos, -sin, 0.0], [sin, cos, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Mat3([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Determinant of the upper-left linear block.
    pub fn linear_det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn is_affine(&self) -> bool {
        self.0[2] == [0.0, 0.0, 1.0]
    }

    pub fn apply(&self, p: HomPoint) -> HomPoint {
        let m = &self.0;
        let x = m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.w;
        let y = m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.w;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.w;
        if w == 1.0 {
            HomPoint { x, y, w }
        } else {
            HomPoint::new(x / w, y / w)
        }
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Mat3) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..3 {
            for c in 0..3 {
                worst = worst.max((self.0[r][c] - other.0[r][c]).abs());
            }
        }
        worst
    }
}

impl Mul for Mat3 {
    type Output = Mat3;

    fn mul(self, rhs: Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[r][k] * rhs.0[k][c]).sum();
            }
        }
        Mat3(out)
    }
}

/// One logged manipulation state of the displayed image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformState {
    #[serde(rename = "s")]
    pub scale: f64,
    /// Radians, clockwise-positive on screen.
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
    /// Unix epoch milliseconds.
    pub t: i64,
}

impl TransformState {
    pub const fn identity(t: i64) -> Self {
        Self {
            scale: 1.0,
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
            t,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(GeometryError::DegenerateScale(self.scale));
        }
        if !self.theta.is_finite() {
            return Err(GeometryError::InvalidTransform("theta must be finite"));
        }
        if !(self.tx.is_finite() && self.ty.is_finite()) {
            return Err(GeometryError::InvalidTransform(
                "translation must be finite",
            ));
        }
        if self.t < 0 {
            return Err(GeometryError::InvalidTransform(
                "timestamp must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Dimensions binding the screen, viewport and intrinsic-image frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewportGeometry {
    #[serde(rename = "W")]
    pub screen_w: f64,
    #[serde(rename = "H")]
    pub screen_h: f64,
    #[serde(rename = "ox")]
    pub origin_x: f64,
    #[serde(rename = "oy")]
    pub origin_y: f64,
    #[serde(rename = "wd")]
    pub displayed_w: f64,
    #[serde(rename = "hd")]
    pub displayed_h: f64,
    #[serde(rename = "wi")]
    pub intrinsic_w: f64,
    #[serde(rename = "hi")]
    pub intrinsic_h: f64,
}

impl ViewportGeometry {
    /// Screen, widget and image all share one extent with no offset.
    pub fn identity(w: f64, h: f64) -> Self {
        Self {
            screen_w: w,
            screen_h: h,
            origin_x: 0.0,
            origin_y: 0.0,
            displayed_w: w,
            displayed_h: h,
            intrinsic_w: w,
            intrinsic_h: h,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.screen_w) && positive(self.screen_h)) {
            return Err(GeometryError::DegenerateGeometry(
                "screen size must be positive",
            ));
        }
        if !(positive(self.displayed_w) && positive(self.displayed_h)) {
            return Err(GeometryError::DegenerateGeometry(
                "displayed size must be positive",
            ));
        }
        if !(positive(self.intrinsic_w) && positive(self.intrinsic_h)) {
            return Err(GeometryError::DegenerateGeometry(
                "intrinsic size must be positive",
            ));
        }
        if !(self.origin_x >= 0.0 && self.origin_x < self.screen_w) {
            return Err(GeometryError::DegenerateGeometry(
                "widget origin x outside screen",
            ));
        }
        if !(self.origin_y >= 0.0 && self.origin_y < self.screen_h) {
            return Err(GeometryError::DegenerateGeometry(
                "widget origin y outside screen",
            ));
        }
        Ok(())
    }

    /// Widget center in viewport coordinates; rotation and scale pivot here.
    pub fn pivot_viewport(&self) -> (f64, f64) {
        (self.displayed_w / 2.0, self.displayed_h / 2.0)
    }

    /// Widget center in screen pixels.
    pub fn pivot_screen(&self) -> (f64, f64) {
        (
            self.origin_x + self.displayed_w / 2.0,
            self.origin_y + self.displayed_h / 2.0,
        )
    }

    pub fn is_on_screen(xn: f64, yn: f64) -> bool {
        (0.0..=1.0).contains(&xn) && (0.0..=1.0).contains(&yn)
    }

    pub fn is_inside_widget(&self, p: &HomPoint) -> bool {
        (0.0..=self.displayed_w).contains(&p.x) && (0.0..=self.displayed_h).contains(&p.y)
    }

    pub fn is_on_image(&self, p: &HomPoint) -> bool {
        (0.0..=self.intrinsic_w).contains(&p.x) && (0.0..=self.intrinsic_h).contains(&p.y)
    }
}

pub fn screen_from_normalized(
    xn: f64,
    yn: f64,
    geom: &ViewportGeometry,
) -> Result<HomPoint, GeometryError> {
    if !(xn.is_finite() && yn.is_finite()) {
        return Err(GeometryError::InvalidSample { x: xn, y: yn });
    }
    Ok(HomPoint::new(xn * geom.screen_w, yn * geom.screen_h))
}

/// Shift into widget-local coordinates. Points outside the widget are kept;
/// use [`ViewportGeometry::is_inside_widget`] to flag them.
pub fn viewport_from_screen(p: HomPoint, geom: &ViewportGeometry) -> HomPoint {
    HomPoint::new(p.x - geom.origin_x, p.y - geom.origin_y)
}

pub fn intrinsic_from_displayed(
    p: HomPoint,
    geom: &ViewportGeometry,
) -> Result<HomPoint, GeometryError> {
    if !(geom.displayed_w > 0.0 && geom.displayed_h > 0.0) {
        return Err(GeometryError::DegenerateGeometry(
            "displayed size must be positive",
        ));
    }
    Ok(HomPoint::new(
        p.x * geom.intrinsic_w / geom.displayed_w,
        p.y * geom.intrinsic_h / geom.displayed_h,
    ))
}

/// `M = T(tx, ty) * T(c) * R(theta) * S(s) * T(-c)` with `c` the widget center
/// in viewport coordinates.
pub fn compose_transform(
    st: &TransformState,
    geom: &ViewportGeometry,
) -> Result<Mat3, GeometryError> {
    st.validate()?;
    let (cx, cy) = geom.pivot_viewport();
    Ok(Mat3::translation(st.tx, st.ty)
        * Mat3::translation(cx, cy)
        * Mat3::rotation(st.theta)
        * Mat3::scale(st.scale, st.scale)
        * Mat3::translation(-cx, -cy))
}

/// Inverse of an affine matrix via its linear block and back-solved
/// translation.
pub fn invert_transform(m: &Mat3) -> Result<Mat3, GeometryError> {
    if !m.is_affine() {
        return Err(GeometryError::NotAffine);
    }
    let det = m.linear_det();
    if det.is_nan() || det.abs() < DET_EPSILON {
        return Err(GeometryError::SingularTransform { det });
    }
    let [[a, b, tx], [c, d, ty], _] = m.0;
    let ia = d / det;
    let ib = -b / det;
    let ic = -c / det;
    let id = a / det;
    Ok(Mat3([
        [ia, ib, -(ia * tx + ib * ty)],
        [ic, id, -(ic * tx + id * ty)],
        [0.0, 0.0, 1.0],
    ]))
}

/// Closed-form inverse of the composed manipulation:
/// `T(c) * S(1/s) * R(-theta) * T(-c) * T(-tx, -ty)`.
pub fn similarity_inverse(
    st: &TransformState,
    geom: &ViewportGeometry,
) -> Result<Mat3, GeometryError> {
    st.validate()?;
    let det = st.scale * st.scale;
    if det < DET_EPSILON {
        return Err(GeometryError::SingularTransform { det });
    }
    let (cx, cy) = geom.pivot_viewport();
    let inv_s = 1.0 / st.scale;
    Ok(Mat3::translation(cx, cy)
        * Mat3::scale(inv_s, inv_s)
        * Mat3::rotation(-st.theta)
        * Mat3::translation(-cx, -cy)
        * Mat3::translation(-st.tx, -st.ty))
}

/// Gaze in intrinsic image pixels. Off-image results are returned as-is;
/// check them with [`ViewportGeometry::is_on_image`].
pub fn reconstruct(
    xn: f64,
    yn: f64,
    st: &TransformState,
    geom: &ViewportGeometry,
) -> Result<HomPoint, GeometryError> {
    let screen = screen_from_normalized(xn, yn, geom)?;
    let viewport = viewport_from_screen(screen, geom);
    let inverse = invert_transform(&compose_transform(st, geom)?)?;
    intrinsic_from_displayed(inverse.apply(viewport), geom)
}

/// Single affine map from normalized screen coordinates to intrinsic pixels:
/// intrinsic scaling * `M^-1` * origin shift * screen scaling.
pub fn reconstruction_matrix(
    st: &TransformState,
    geom: &ViewportGeometry,
) -> Result<Mat3, GeometryError> {
    let inverse = invert_transform(&compose_transform(st, geom)?)?;
    Ok(Mat3::scale(
        geom.intrinsic_w / geom.displayed_w,
        geom.intrinsic_h / geom.displayed_h,
    ) * inverse
        * Mat3::translation(-geom.origin_x, -geom.origin_y)
        * Mat3::scale(geom.screen_w, geom.screen_h))
}

/// Where an intrinsic image point appears on screen, in normalized
/// coordinates, under the given manipulation. Exact inverse of
/// [`reconstruct`].
pub fn forward_project(
    p: HomPoint,
    st: &TransformState,
    geom: &ViewportGeometry,
) -> Result<(f64, f64), GeometryError> {
    let screen = screen_from_intrinsic(p, st, geom)?;
    Ok((screen.x / geom.screen_w, screen.y / geom.screen_h))
}

/// Like [`forward_project`] but in screen pixels.
pub fn screen_from_intrinsic(
    p: HomPoint,
    st: &TransformState,
    geom: &ViewportGeometry,
) -> Result<HomPoint, GeometryError> {
    let displayed = HomPoint::new(
        p.x * geom.displayed_w / geom.intrinsic_w,
        p.y * geom.displayed_h / geom.intrinsic_h,
    );
    let viewport = compose_transform(st, geom)?.apply(displayed);
    Ok(HomPoint::new(
        viewport.x + geom.origin_x,
        viewport.y + geom.origin_y,
    ))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    use super::*;

    #[allow(clippy::too_many_arguments)]
    fn geom(
        w: f64,
        h: f64,
        ox: f64,
        oy: f64,
        wd: f64,
        hd: f64,
        wi: f64,
        hi: f64,
    ) -> ViewportGeometry {
        ViewportGeometry {
            screen_w: w,
            screen_h: h,
            origin_x: ox,
            origin_y: oy,
            displayed_w: wd,
            displayed_h: hd,
            intrinsic_w: wi,
            intrinsic_h: hi,
        }
    }

    fn state(s: f64, theta: f64, tx: f64, ty: f64) -> TransformState {
        TransformState {
            scale: s,
            theta,
            tx,
            ty,
            t: 0,
        }
    }

    fn assert_point(p: HomPoint, x: f64, y: f64) {
        assert!(
            (p.x - x).abs() < 1e-9 && (p.y - y).abs() < 1e-9,
            "{p:?} != ({x}, {y})"
        );
        assert_eq!(p.w, 1.0);
    }

    #[test]
    fn normalized_to_screen() {
        let g = geom(1290.0, 2796.0, 0.0, 0.0, 1290.0, 2796.0, 1290.0, 2796.0);
        assert_point(screen_from_normalized(0.5, 0.5, &g).unwrap(), 645.0, 1398.0);
        assert_point(screen_from_normalized(0.0, 0.0, &g).unwrap(), 0.0, 0.0);
        let g = geom(1000.0, 2000.0, 0.0, 0.0, 1000.0, 2000.0, 1000.0, 2000.0);
        assert_point(
            screen_from_normalized(0.25, 0.75, &g).unwrap(),
            250.0,
            1500.0,
        );
        assert!(matches!(
            screen_from_normalized(f64::NAN, 0.1, &g),
            Err(GeometryError::InvalidSample { .. })
        ));
        assert!(screen_from_normalized(0.2, f64::INFINITY, &g).is_err());
    }

    #[test]
    fn screen_to_viewport() {
        let g = geom(1290.0, 2796.0, 0.0, 0.0, 1200.0, 2000.0, 2400.0, 4000.0);
        assert_point(
            viewport_from_screen(HomPoint::new(645.0, 1398.0), &g),
            645.0,
            1398.0,
        );
        let g = geom(1290.0, 2796.0, 45.0, 398.0, 1200.0, 2000.0, 2400.0, 4000.0);
        assert_point(
            viewport_from_screen(HomPoint::new(645.0, 1398.0), &g),
            600.0,
            1000.0,
        );
        let g = geom(1290.0, 2796.0, 20.0, 20.0, 1200.0, 2000.0, 2400.0, 4000.0);
        let local = viewport_from_screen(HomPoint::new(10.0, 10.0), &g);
        assert_point(local, -10.0, -10.0);
        assert!(!g.is_inside_widget(&local));
    }

    #[test]
    fn displayed_to_intrinsic() {
        let g = geom(1290.0, 2796.0, 45.0, 398.0, 1200.0, 2000.0, 2400.0, 4000.0);
        assert_point(
            intrinsic_from_displayed(HomPoint::new(600.0, 1000.0), &g).unwrap(),
            1200.0,
            2000.0,
        );
        assert_point(
            intrinsic_from_displayed(HomPoint::new(0.0, 0.0), &g).unwrap(),
            0.0,
            0.0,
        );
        let unit = geom(1290.0, 2796.0, 45.0, 398.0, 1200.0, 2000.0, 1200.0, 2000.0);
        assert_point(
            intrinsic_from_displayed(HomPoint::new(17.5, 3.25), &unit).unwrap(),
            17.5,
            3.25,
        );
        let bad = geom(1290.0, 2796.0, 0.0, 0.0, 0.0, 2000.0, 1200.0, 2000.0);
        assert!(matches!(
            intrinsic_from_displayed(HomPoint::new(1.0, 1.0), &bad),
            Err(GeometryError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn compose_examples() {
        // Pivot (100, 100) in the viewport frame.
        let g = geom(400.0, 400.0, 0.0, 0.0, 200.0, 200.0, 200.0, 200.0);
        let m = compose_transform(&state(1.0, 0.0, 0.0, 0.0), &g).unwrap();
        assert!(m.max_abs_diff(&Mat3::IDENTITY) < 1e-15);

        let m = compose_transform(&state(2.0, 0.0, 0.0, 0.0), &g).unwrap();
        assert_point(m.apply(HomPoint::new(100.0, 100.0)), 100.0, 100.0);
        assert_point(m.apply(HomPoint::new(150.0, 100.0)), 200.0, 100.0);

        let m = compose_transform(&state(1.0, FRAC_PI_2, 0.0, 0.0), &g).unwrap();
        assert_point(m.apply(HomPoint::new(200.0, 100.0)), 100.0, 200.0);
        assert_eq!(m.0[2], [0.0, 0.0, 1.0]);

        assert!(matches!(
            compose_transform(&state(0.0, 0.0, 0.0, 0.0), &g),
            Err(GeometryError::DegenerateScale(_))
        ));
        assert!(compose_transform(&state(-1.0, 0.0, 0.0, 0.0), &g).is_err());
    }

    #[test]
    fn invert_examples() {
        assert_eq!(invert_transform(&Mat3::IDENTITY).unwrap(), Mat3::IDENTITY);
        assert_eq!(
            invert_transform(&Mat3::translation(5.0, -3.0)).unwrap(),
            Mat3::translation(-5.0, 3.0)
        );
        let g = geom(1290.0, 2796.0, 45.0, 398.0, 1200.0, 2000.0, 2400.0, 4000.0);
        let m = compose_transform(&state(2.0, FRAC_PI_3, 10.0, 20.0), &g).unwrap();
        let inv = invert_transform(&m).unwrap();
        assert!((m * inv).max_abs_diff(&Mat3::IDENTITY) < 1e-9);
        assert_eq!(inv.0[2], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = Mat3::scale(1e-7, 1e-7);
        assert!(matches!(
            invert_transform(&m),
            Err(GeometryError::SingularTransform { .. })
        ));
        let mut skew = Mat3::IDENTITY;
        skew.0[2][0] = 0.5;
        assert_eq!(invert_transform(&skew), Err(GeometryError::NotAffine));
        let g = geom(100.0, 100.0, 0.0, 0.0, 100.0, 100.0, 100.0, 100.0);
        assert!(matches!(
            reconstruct(0.5, 0.5, &state(1e-7, 0.0, 0.0, 0.0), &g),
            Err(GeometryError::SingularTransform { .. })
        ));
    }

    #[test]
    fn reconstruct_identity_center() {
        let g = geom(1290.0, 2796.0, 45.0, 398.0, 1200.0, 2000.0, 2400.0, 4000.0);
        let (cx, cy) = g.pivot_screen();
        let p = reconstruct(
            cx / g.screen_w,
            cy / g.screen_h,
            &TransformState::identity(0),
            &g,
        )
        .unwrap();
        assert_point(p, 1200.0, 2000.0);
        let (xn, yn) = forward_project(
            HomPoint::new(1200.0, 2000.0),
            &TransformState::identity(0),
            &g,
        )
        .unwrap();
        assert!((xn - 0.5 * (2.0 * 45.0 + 1200.0) / 1290.0).abs() < 1e-12);
        assert!((yn - 0.5 * (2.0 * 398.0 + 2000.0) / 2796.0).abs() < 1e-12);
    }

    #[test]
    fn translated_content_keeps_intrinsic_point() {
        let g = geom(1290.0, 2796.0, 45.0, 398.0, 1200.0, 2000.0, 2400.0, 4000.0);
        let target = HomPoint::new(700.0, 1500.0);
        for st in [state(1.0, 0.0, 0.0, 0.0), state(1.0, 0.0, 600.0, 0.0)] {
            let (xn, yn) = forward_project(target, &st, &g).unwrap();
            assert_point(reconstruct(xn, yn, &st, &g).unwrap(), 700.0, 1500.0);
        }
        let (a, _) = forward_project(target, &state(1.0, 0.0, 0.0, 0.0), &g).unwrap();
        let (b, _) = forward_project(target, &state(1.0, 0.0, 600.0, 0.0), &g).unwrap();
        assert!(((b - a) * g.screen_w - 600.0).abs() < 1e-9);
    }

    #[test]
    fn off_image_is_flagged_not_rejected() {
        let g = geom(1000.0, 1000.0, 0.0, 0.0, 1000.0, 1000.0, 1000.0, 1000.0);
        let p = reconstruct(1.2, -0.1, &TransformState::identity(0), &g).unwrap();
        assert!(!g.is_on_image(&p));
        assert!(!ViewportGeometry::is_on_screen(1.2, -0.1));
    }

    #[test]
    fn identity_geometry_is_pure_scaling() {
        let g = ViewportGeometry::identity(1290.0, 2796.0);
        let p = reconstruct(0.3, 0.8, &TransformState::identity(0), &g).unwrap();
        assert_point(p, 0.3 * 1290.0, 0.8 * 2796.0);
    }

    #[test]
    fn geometry_validation() {
        assert!(ViewportGeometry::identity(10.0, 10.0).validate().is_ok());
        let mut g = ViewportGeometry::identity(10.0, 10.0);
        g.origin_x = 10.0;
        assert!(g.validate().is_err());
        let mut g = ViewportGeometry::identity(10.0, 10.0);
        g.intrinsic_h = -1.0;
        assert!(g.validate().is_err());
    }
}
