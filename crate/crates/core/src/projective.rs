//! Homographies generated by pinhole cameras sharing a centre, and the
//! subgroups obtained by freezing camera parameters.
//!
//! Image coordinates are continuous: pixel `(row i, col j)` covers
//! `[j, j+1) x [i, i+1)` and its centre sits at `(j + 0.5, i + 0.5)`. A
//! homography maps `(u, v, 1)` to `(u', v', w')`; the image point is
//! `(u'/w', v'/w')`.

use std::ops::Mul;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Condition number above which a matrix is treated as singular.
pub const DEGENERATE_COND: f64 = 1e12;
/// `|w'|` below this marks a point at infinity.
pub const INFINITY_EPS: f64 = 1e-9;
/// Bottom-row magnitude above which a homography counts as perspective.
pub const PERSPECTIVE_EPS: f64 = 1e-12;
/// `|m[2][2]|` below this leaves a homography unnormalized.
const NORMALIZE_EPS: f64 = 1e-12;
/// Focal length (pixels) of the reference camera before transformation.
pub const BASE_FOCAL: f64 = 100.0;

/// Dense 3x3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl<T: Scalar> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Mat3([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    fn adjugate(&self) -> Self {
        let m = &self.0;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        Mat3([
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ])
    }

    pub fn frobenius(&self) -> T {
        self.0
            .iter()
            .flatten()
            .map(|&v| v * v)
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.0.iter().flatten().fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    /// Inverse with its Frobenius condition number `|M| |M^-1|`.
    pub fn inverse_with_cond(&self) -> Result<(Self, f64)> {
        let det = self.det();
        if det == T::zero() || !det.is_finite() {
            return Err(Error::DegenerateTransform(f64::INFINITY));
        }
        let inv = self.adjugate().scale(T::one() / det);
        let cond = (self.frobenius() * inv.frobenius()).f64();
        if !cond.is_finite() || cond > DEGENERATE_COND {
            return Err(Error::DegenerateTransform(cond));
        }
        Ok((inv, cond))
    }

    pub fn inverse(&self) -> Result<Self> {
        self.inverse_with_cond().map(|(m, _)| m)
    }

    pub fn mul_vec(&self, v: [T; 3]) -> [T; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (*a - *b).abs().f64())
            .fold(0.0, f64::max)
    }

    pub fn cast<U: Scalar>(&self) -> Mat3<U> {
        let mut out = Mat3::<U>::identity();
        for r in 0..3 {
            for c in 0..3 {
                out.0[r][c] = U::c(self.0[r][c].f64());
            }
        }
        out
    }
}

impl<T: Scalar> Mul for Mat3<T> {
    type Output = Mat3<T>;

    fn mul(self, rhs: Mat3<T>) -> Mat3<T> {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[T::zero(); 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
            }
        }
        Mat3(out)
    }
}

/// Pinhole intrinsics: focal length `f` (px), pixel scales `m_x, m_y`,
/// skew `s` (px) and principal point `(u0, v0)` (px).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T> {
    pub f: T,
    pub m_x: T,
    pub m_y: T,
    pub s: T,
    pub u0: T,
    pub v0: T,
}

impl<T: Scalar> CameraIntrinsics<T> {
    pub fn new(f: T, m_x: T, m_y: T, s: T, u0: T, v0: T) -> Result<Self> {
        let k = Self {
            f,
            m_x,
            m_y,
            s,
            u0,
            v0,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels, no skew.
    pub fn pinhole(f: T, u0: T, v0: T) -> Self {
        Self {
            f,
            m_x: T::one(),
            m_y: T::one(),
            s: T::zero(),
            u0,
            v0,
        }
    }

    /// Reference camera for a `height x width` image: `f = 100`, principal
    /// point at the image centre.
    pub fn centred(height: usize, width: usize) -> Self {
        Self::pinhole(
            T::c(BASE_FOCAL),
            T::c(width as f64 / 2.0),
            T::c(height as f64 / 2.0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        if !(ok(self.f) && ok(self.m_x) && ok(self.m_y)) {
            return Err(Error::InvalidParameter(format!(
                "intrinsics need f, m_x, m_y > 0 (got {}, {}, {})",
                self.f, self.m_x, self.m_y
            )));
        }
        if !(self.s.is_finite() && self.u0.is_finite() && self.v0.is_finite()) {
            return Err(Error::InvalidParameter("intrinsics must be finite".into()));
        }
        Ok(())
    }

    /// `[[f m_x, s, u0], [0, f m_y, v0], [0, 0, 1]]`
    pub fn matrix(&self) -> Mat3<T> {
        intrinsics_matrix(self)
    }

    /// Closed-form inverse of the upper-triangular intrinsics matrix.
    pub fn inverse_matrix(&self) -> Mat3<T> {
        let (a, b, c) = (self.f * self.m_x, self.s, self.u0);
        let (d, e) = (self.f * self.m_y, self.v0);
        let (o, z) = (T::one(), T::zero());
        Mat3([
            [o / a, -b / (a * d), (b * e - c * d) / (a * d)],
            [z, o / d, -e / d],
            [z, z, o],
        ])
    }
}

pub fn intrinsics_matrix<T: Scalar>(k: &CameraIntrinsics<T>) -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    Mat3([
        [k.f * k.m_x, k.s, k.u0],
        [z, k.f * k.m_y, k.v0],
        [z, z, o],
    ])
}

/// Rotation of the image plane about the camera x, y and z axes (radians).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles<T> {
    pub theta_x: T,
    pub theta_y: T,
    pub theta_z: T,
}

impl<T: Scalar> EulerAngles<T> {
    pub fn new(theta_x: T, theta_y: T, theta_z: T) -> Self {
        Self {
            theta_x,
            theta_y,
            theta_z,
        }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    /// Wraps every angle into `(-pi, pi]`.
    pub fn wrapped(&self) -> Self {
        let pi = T::c(std::f64::consts::PI);
        let two_pi = pi + pi;
        let wrap = |a: T| {
            let mut r = a % two_pi;
            if r <= -pi {
                r += two_pi;
            } else if r > pi {
                r -= two_pi;
            }
            r
        };
        Self::new(wrap(self.theta_x), wrap(self.theta_y), wrap(self.theta_z))
    }
}

pub fn rotation_x<T: Scalar>(t: T) -> Mat3<T> {
    let (c, s, o, z) = (t.cos(), t.sin(), T::one(), T::zero());
    Mat3([[o, z, z], [z, c, -s], [z, s, c]])
}

pub fn rotation_y<T: Scalar>(t: T) -> Mat3<T> {
    let (c, s, o, z) = (t.cos(), t.sin(), T::one(), T::zero());
    Mat3([[c, z, s], [z, o, z], [-s, z, c]])
}

pub fn rotation_z<T: Scalar>(t: T) -> Mat3<T> {
    let (c, s, o, z) = (t.cos(), t.sin(), T::one(), T::zero());
    Mat3([[c, -s, z], [s, c, z], [z, z, o]])
}

/// `R = Rz(theta_z) Ry(theta_y) Rx(theta_x)`
pub fn rotation_matrix<T: Scalar>(a: &EulerAngles<T>) -> Mat3<T> {
    rotation_z(a.theta_z) * rotation_y(a.theta_y) * rotation_x(a.theta_x)
}

/// Result of mapping a finite point through a homography.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projected<T> {
    Finite(T, T),
    AtInfinity,
}

impl<T: Scalar> Projected<T> {
    pub fn finite(self) -> Option<(T, T)> {
        match self {
            Projected::Finite(u, v) => Some((u, v)),
            Projected::AtInfinity => None,
        }
    }
}

/// An invertible 3x3 transform of homogeneous image coordinates, stored
/// with `m[2][2] = 1` whenever that entry is not vanishingly small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography<T> {
    m: Mat3<T>,
    normalized: bool,
}

impl<T: Scalar> Homography<T> {
    pub fn identity() -> Self {
        Self {
            m: Mat3::identity(),
            normalized: true,
        }
    }

    pub fn from_matrix(m: Mat3<T>) -> Result<Self> {
        let det = m.det();
        if det == T::zero() || !det.is_finite() {
            return Err(Error::DegenerateTransform(f64::INFINITY));
        }
        Ok(Self::normalize(m))
    }

    fn normalize(m: Mat3<T>) -> Self {
        let w = m.0[2][2];
        if w.abs().f64() > NORMALIZE_EPS {
            Self {
                m: m.scale(T::one() / w),
                normalized: true,
            }
        } else {
            let s = m.max_abs();
            Self {
                m: m.scale(T::one() / s),
                normalized: false,
            }
        }
    }

    pub fn matrix(&self) -> &Mat3<T> {
        &self.m
    }

    /// False when `m[2][2]` vanished and the matrix was only rescaled to unit max-entry.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography<T>) -> Homography<T> {
        Self::normalize(self.m * other.m)
    }

    pub fn inverse(&self) -> Result<Homography<T>> {
        Ok(Self::normalize(self.m.inverse()?))
    }

    pub fn apply_point(&self, u: T, v: T) -> Projected<T> {
        let [x, y, w] = self.m.mul_vec([u, v, T::one()]);
        if w.abs().f64() < INFINITY_EPS {
            Projected::AtInfinity
        } else {
            Projected::Finite(x / w, y / w)
        }
    }

    pub fn is_perspective(&self) -> bool {
        self.is_perspective_with(PERSPECTIVE_EPS)
    }

    /// True iff points at infinity are sent to finite points, i.e. the bottom
    /// row has a non-zero `u` or `v` entry.
    pub fn is_perspective_with(&self, eps: f64) -> bool {
        self.m.0[2][0].abs().f64() > eps || self.m.0[2][1].abs().f64() > eps
    }

    /// Largest entry-wise difference after normalization.
    pub fn max_abs_diff(&self, other: &Homography<T>) -> f64 {
        self.m.max_abs_diff(&other.m)
    }

    pub fn cast<U: Scalar>(&self) -> Homography<U> {
        Homography {
            m: self.m.cast(),
            normalized: self.normalized,
        }
    }
}

/// `T_g = K' R K^-1`: the image-to-image map between two cameras sharing a centre.
pub fn homography_from_cameras<T: Scalar>(
    k: &CameraIntrinsics<T>,
    k2: &CameraIntrinsics<T>,
    a: &EulerAngles<T>,
) -> Homography<T> {
    Homography::normalize(k2.matrix() * rotation_matrix(a) * k.inverse_matrix())
}

/// `K R K^-1` for a pure camera rotation.
pub fn camera_rotation_homography<T: Scalar>(
    k: &CameraIntrinsics<T>,
    a: &EulerAngles<T>,
) -> Homography<T> {
    conjugate_rotation(k, &rotation_matrix(a))
}

/// `phi(R) = K R K^-1` for an arbitrary rotation matrix `R`.
pub fn conjugate_rotation<T: Scalar>(k: &CameraIntrinsics<T>, r: &Mat3<T>) -> Homography<T> {
    Homography::normalize(k.matrix() * *r * k.inverse_matrix())
}

/// Largest pan/tilt (radians) before the horizon of a reference camera with
/// focal length `f` and principal row `v0` can enter the frame.
pub fn max_pan_tilt(f: f64, v0: f64) -> f64 {
    (f / v0).atan()
}

/// Subgroups of the homography group selectable for equivariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Shift,
    Rotation,
    Scale,
    /// shift + rotation + scale
    Similarity,
    /// similarity + stretch + skew
    Affine,
    PanTilt,
    /// similarity + pan + tilt
    Perspective,
}

impl GroupKind {
    pub const ALL: [GroupKind; 7] = [
        GroupKind::Shift,
        GroupKind::Rotation,
        GroupKind::Scale,
        GroupKind::Similarity,
        GroupKind::Affine,
        GroupKind::PanTilt,
        GroupKind::Perspective,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GroupKind::Shift => "shift",
            GroupKind::Rotation => "rotation",
            GroupKind::Scale => "scale",
            GroupKind::Similarity => "similarity",
            GroupKind::Affine => "affine",
            GroupKind::PanTilt => "pan_tilt",
            GroupKind::Perspective => "perspective",
        }
    }

    fn has_shift(&self) -> bool {
        matches!(
            self,
            GroupKind::Shift | GroupKind::Similarity | GroupKind::Affine | GroupKind::Perspective
        )
    }
    fn has_roll(&self) -> bool {
        matches!(
            self,
            GroupKind::Rotation
                | GroupKind::Similarity
                | GroupKind::Affine
                | GroupKind::Perspective
        )
    }
    fn has_scale(&self) -> bool {
        matches!(
            self,
            GroupKind::Scale | GroupKind::Similarity | GroupKind::Affine | GroupKind::Perspective
        )
    }
    fn has_skew(&self) -> bool {
        matches!(self, GroupKind::Affine)
    }
    fn has_pan_tilt(&self) -> bool {
        matches!(self, GroupKind::PanTilt | GroupKind::Perspective)
    }
}

impl std::str::FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GroupKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown group kind `{s}`")))
    }
}

/// Parameter ranges at `alpha = 1`; `alpha` shrinks each toward identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformBounds {
    /// `|du| <= shift_fraction * W`, `|dv| <= shift_fraction * H`
    pub shift_fraction: f64,
    /// `theta_z in [-rotation_deg, rotation_deg)`
    pub rotation_deg: f64,
    /// `f / f' in [min_focal_ratio, 1]`
    pub min_focal_ratio: f64,
    /// `|s'| <= skew_fraction * f`
    pub skew_fraction: f64,
    /// `m' / m in [min_stretch, 1]` per axis
    pub min_stretch: f64,
    /// `theta_x, theta_y in [-pan_tilt_deg, pan_tilt_deg]`
    pub pan_tilt_deg: f64,
}

impl Default for TransformBounds {
    fn default() -> Self {
        Self {
            shift_fraction: 0.5,
            rotation_deg: 180.0,
            min_focal_ratio: 0.5,
            skew_fraction: 0.5,
            min_stretch: 0.5,
            pan_tilt_deg: 9.0,
        }
    }
}

fn default_alpha() -> f64 {
    0.1
}
fn default_focal() -> f64 {
    BASE_FOCAL
}

/// A transform subgroup together with the sampling ranges used for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub kind: GroupKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub bounds: TransformBounds,
    /// Filled from the dataset tile size when omitted.
    #[serde(default)]
    pub height: usize,
    #[serde(default)]
    pub width: usize,
    #[serde(default = "default_focal")]
    pub focal: f64,
}

impl GroupSpec {
    pub fn new(kind: GroupKind, alpha: f64, height: usize, width: usize) -> Self {
        Self {
            kind,
            alpha,
            bounds: TransformBounds::default(),
            height,
            width,
            focal: BASE_FOCAL,
        }
    }

    pub fn with_image_size(mut self, height: usize, width: usize) -> Self {
        self.height = height;
        self.width = width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.height == 0 || self.width == 0 {
            return bad("group spec needs a non-zero image size".into());
        }
        if !(self.focal > 0.0) {
            return bad(format!("focal must be positive, got {}", self.focal));
        }
        if !(b.shift_fraction >= 0.0
            && b.rotation_deg >= 0.0
            && b.rotation_deg <= 180.0
            && b.skew_fraction >= 0.0
            && b.pan_tilt_deg >= 0.0
            && b.pan_tilt_deg < 90.0)
        {
            return bad(format!("transform bounds out of range: {b:?}"));
        }
        if !(b.min_focal_ratio > 0.0 && b.min_focal_ratio <= 1.0)
            || !(b.min_stretch > 0.0 && b.min_stretch <= 1.0)
        {
            return bad("focal ratio and stretch bounds must lie in (0, 1]".into());
        }
        Ok(())
    }

    /// Reference camera: `f = focal`, principal point at the image centre.
    pub fn base_intrinsics<T: Scalar>(&self) -> CameraIntrinsics<T> {
        CameraIntrinsics::pinhole(
            T::c(self.focal),
            T::c(self.width as f64 / 2.0),
            T::c(self.height as f64 / 2.0),
        )
    }
}

/// Free parameters of one sampled transform; frozen ones keep identity values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSample {
    pub du: f64,
    pub dv: f64,
    pub angles: EulerAngles<f64>,
    /// `f / f'`
    pub focal_ratio: f64,
    pub skew: f64,
    /// `m_x' / m_x`, `m_y' / m_y`
    pub stretch_x: f64,
    pub stretch_y: f64,
}

impl Default for TransformSample {
    fn default() -> Self {
        Self {
            du: 0.0,
            dv: 0.0,
            angles: EulerAngles::zero(),
            focal_ratio: 1.0,
            skew: 0.0,
            stretch_x: 1.0,
            stretch_y: 1.0,
        }
    }
}

impl TransformSample {
    /// `K' R K^-1` with `K` the group's reference camera and `K'` carrying the
    /// perturbed focal length, pixel scales, skew and principal point.
    pub fn homography<T: Scalar>(&self, spec: &GroupSpec) -> Homography<T> {
        let k = spec.base_intrinsics::<T>();
        let k2 = CameraIntrinsics {
            f: k.f / T::c(self.focal_ratio),
            m_x: T::c(self.stretch_x),
            m_y: T::c(self.stretch_y),
            s: T::c(self.skew),
            u0: k.u0 + T::c(self.du),
            v0: k.v0 + T::c(self.dv),
        };
        let a = EulerAngles::new(
            T::c(self.angles.theta_x),
            T::c(self.angles.theta_y),
            T::c(self.angles.theta_z),
        );
        homography_from_cameras(&k, &k2, &a)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws the free parameters of `spec.kind` uniformly from their
/// alpha-scaled ranges.
pub fn sample_params<R: Rng + ?Sized>(spec: &GroupSpec, rng: &mut R) -> TransformSample {
    let b = &spec.bounds;
    let a = spec.alpha;
    let kind = spec.kind;
    let mut p = TransformSample::default();
    if kind.has_shift() {
        let su = a * b.shift_fraction * spec.width as f64;
        let sv = a * b.shift_fraction * spec.height as f64;
        p.du = uniform(rng, -su, su);
        p.dv = uniform(rng, -sv, sv);
    }
    if kind.has_roll() {
        let r = a * b.rotation_deg.to_radians();
        p.angles.theta_z = uniform(rng, -r, r);
    }
    if kind.has_scale() {
        p.focal_ratio = uniform(rng, 1.0 - a * (1.0 - b.min_focal_ratio), 1.0);
    }
    if kind.has_skew() {
        let s = a * b.skew_fraction * spec.focal;
        p.skew = uniform(rng, -s, s);
        let lo = 1.0 - a * (1.0 - b.min_stretch);
        p.stretch_x = uniform(rng, lo, 1.0);
        p.stretch_y = uniform(rng, lo, 1.0);
    }
    if kind.has_pan_tilt() {
        let t = a * b.pan_tilt_deg.to_radians();
        p.angles.theta_x = uniform(rng, -t, t);
        p.angles.theta_y = uniform(rng, -t, t);
    }
    p
}

/// Samples a group element, redrawing when the transform is numerically singular.
pub fn sample_transform<T: Scalar, R: Rng + ?Sized>(spec: &GroupSpec, rng: &mut R) -> Homography<T> {
    for _ in 0..1000 {
        let h = sample_params(spec, rng).homography::<T>(spec);
        if h.inverse().is_ok() {
            return h;
        }
    }
    Homography::identity()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn close(a: &Mat3<f64>, b: &Mat3<f64>, tol: f64) -> bool {
        a.max_abs_diff(b) < tol
    }

    #[test]
    fn intrinsics_examples() {
        let k = CameraIntrinsics::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(k.matrix(), Mat3::identity());

        let k = CameraIntrinsics::pinhole(100.0, 256.0, 256.0);
        assert_eq!(
            k.matrix().0,
            [[100.0, 0.0, 256.0], [0.0, 100.0, 256.0], [0.0, 0.0, 1.0]]
        );

        let k = CameraIntrinsics::new(2.0, 1.0, 1.0, 3.0, 0.0, 0.0).unwrap();
        assert_eq!(k.matrix().0[0][1], 3.0);
        assert_eq!(k.matrix().0[0][0], 2.0);

        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, -1.0, 1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn closed_form_intrinsics_inverse() {
        let k = CameraIntrinsics::new(80.0, 1.3, 0.7, 12.0, 31.0, -4.0).unwrap();
        let prod = k.matrix() * k.inverse_matrix();
        assert!(close(&prod, &Mat3::identity(), 1e-14));
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_matrix(&EulerAngles::<f64>::zero()), Mat3::identity());
        let r = rotation_matrix(&EulerAngles::new(0.0, 0.0, FRAC_PI_2));
        let expect = Mat3([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(close(&r, &expect, 1e-15));
    }

    #[test]
    fn rotation_order_is_z_y_x() {
        let a = EulerAngles::new(0.3, -0.2, 0.7);
        let r = rotation_matrix(&a);
        // third row of Rz Ry Rx does not depend on theta_z
        assert!((r.0[2][0] - 0.2f64.sin()).abs() < 1e-15);
        assert!((r.0[2][1] - (-0.2f64).cos() * 0.3f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn shift_and_scale_from_cameras() {
        let k = CameraIntrinsics::<f64>::pinhole(100.0, 64.0, 64.0);
        let h = homography_from_cameras(&k, &k, &EulerAngles::zero());
        assert!(h.max_abs_diff(&Homography::identity()) < 1e-15);

        let k2 = CameraIntrinsics {
            u0: 64.0 + 5.0,
            v0: 64.0 - 2.0,
            ..k
        };
        let h = homography_from_cameras(&k, &k2, &EulerAngles::zero());
        let (u, v) = h.apply_point(10.0, 20.0).finite().unwrap();
        assert!((u - 15.0).abs() < 1e-12 && (v - 18.0).abs() < 1e-12);

        let s = 1.7;
        let k3 = CameraIntrinsics { f: 100.0 * s, ..k };
        let h = homography_from_cameras(&k, &k3, &EulerAngles::zero());
        let (u, v) = h.apply_point(10.0, 20.0).finite().unwrap();
        assert!((u - (s * 10.0 + (1.0 - s) * 64.0)).abs() < 1e-12);
        assert!((v - (s * 20.0 + (1.0 - s) * 64.0)).abs() < 1e-12);
    }

    #[test]
    fn homomorphism_of_rotations() {
        let k = CameraIntrinsics::pinhole(100.0, 40.0, 30.0);
        let r1 = rotation_matrix(&EulerAngles::new(0.1, -0.3, 0.5));
        let r2 = rotation_matrix(&EulerAngles::new(-0.4, 0.2, 1.1));
        let lhs = conjugate_rotation(&k, &(r1 * r2));
        let rhs = conjugate_rotation(&k, &r1).compose(&conjugate_rotation(&k, &r2));
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn tilt_ninety_inverse_sends_principal_row_to_infinity() {
        let k = CameraIntrinsics::pinhole(100.0, 256.0, 256.0);
        let h = camera_rotation_homography(&k, &EulerAngles::new(FRAC_PI_2, 0.0, 0.0));
        let inv = h.inverse().unwrap();
        for u in [0.0, 100.0, 300.0] {
            assert_eq!(inv.apply_point(u, 256.0), Projected::AtInfinity);
        }
        assert!(inv.apply_point(0.0, 10.0).finite().is_some());
        let h = camera_rotation_homography(&k, &EulerAngles::new(-FRAC_PI_2, 0.0, 0.0));
        assert_eq!(h.inverse().unwrap().apply_point(7.0, 256.0), Projected::AtInfinity);
    }

    #[test]
    fn compose_and_inverse() {
        let k = CameraIntrinsics::pinhole(100.0, 32.0, 32.0);
        let h = camera_rotation_homography(&k, &EulerAngles::new(0.1, 0.05, 0.3));
        let id = h.compose(&h.inverse().unwrap());
        assert!(id.max_abs_diff(&Homography::identity()) < 1e-10);
        assert!(Homography::identity().compose(&h).max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn singular_inverse_is_rejected() {
        let m = Mat3([[1.0, 2.0, 3.0], [2.0, 4.0 + 1e-14, 6.0], [0.0, 0.0, 1.0]]);
        let h = Homography::from_matrix(m).unwrap();
        assert!(matches!(h.inverse(), Err(Error::DegenerateTransform(_))));
        assert!(Homography::from_matrix(Mat3([[0.0f64; 3]; 3])).is_err());
    }

    #[test]
    fn apply_point_examples() {
        let id = Homography::<f64>::identity();
        assert_eq!(id.apply_point(3.0, 4.0), Projected::Finite(3.0, 4.0));
        let shift = Homography::from_matrix(Mat3([
            [1.0, 0.0, 5.0],
            [0.0, 1.0, -2.0],
            [0.0, 0.0, 1.0],
        ]))
        .unwrap();
        assert_eq!(shift.apply_point(0.0, 0.0), Projected::Finite(5.0, -2.0));
    }

    #[test]
    fn perspective_classification() {
        let k = CameraIntrinsics::pinhole(100.0, 64.0, 64.0);
        assert!(!Homography::<f64>::identity().is_perspective());
        assert!(camera_rotation_homography(&k, &EulerAngles::new(0.1, 0.0, 0.0)).is_perspective());
        let k2 = CameraIntrinsics::new(130.0, 0.8, 0.9, 20.0, 70.0, 60.0).unwrap();
        let affine = homography_from_cameras(&k, &k2, &EulerAngles::new(0.0, 0.0, 0.4));
        assert!(!affine.is_perspective());
    }

    #[test]
    fn max_pan_tilt_heuristic() {
        let t = max_pan_tilt(100.0, 256.0);
        assert!((t - 0.3724).abs() < 1e-4);
        assert!((t.to_degrees() - 21.34).abs() < 0.01);
        assert!((max_pan_tilt(7.0, 7.0) - FRAC_PI_4).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 1..200 {
            let t = max_pan_tilt(10f64.powf(i as f64 / 20.0), 256.0);
            assert!(t > prev);
            prev = t;
        }
        assert!((FRAC_PI_2 - max_pan_tilt(1e12, 256.0)).abs() < 1e-9);
    }

    #[test]
    fn wrap_angles() {
        let a = EulerAngles::new(3.0 * std::f64::consts::PI, -4.0, 0.5).wrapped();
        assert!((a.theta_x - std::f64::consts::PI).abs() < 1e-12);
        assert!((a.theta_y - (-4.0 + 2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn group_kind_parse() {
        for k in GroupKind::ALL {
            assert_eq!(k.name().parse::<GroupKind>().unwrap(), k);
        }
        assert!("homothety".parse::<GroupKind>().is_err());
    }
}
