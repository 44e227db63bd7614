//! Unit quaternions and 3-vectors.
//!
//! Conventions used throughout the crate:
//!
//! * Hamilton product, scalar-first storage `(w, x, y, z)`.
//! * Active rotations: `q.rotate(v)` returns `v` rotated by `q`, i.e. `q v q⁻¹`.
//! * Right-handed frames, world frame is Z-up.
//!
//! `UnitQuat` can only be built through validating constructors and every
//! producing operation renormalizes, so a value of this type always has unit
//! norm to within floating-point rounding.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Accepted deviation from unit norm for externally supplied quaternions.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Above this `|a·b|` slerp degrades to normalized linear interpolation.
const SLERP_LINEAR_THRESHOLD: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuatError {
    #[error("rotation axis has zero length")]
    ZeroAxis,
    #[error("quaternion norm {norm} is not within {UNIT_TOLERANCE} of 1")]
    NotUnit { norm: f64 },
    #[error("quaternion has non-finite components")]
    NonFinite,
}

/// A 3-vector: meters for positions, dimensionless for directions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction, or `None` for a zero or non-finite vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A rotation represented as a unit quaternion (Hamilton, scalar-first).
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl fmt::Debug for UnitQuat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UnitQuat({}, {}, {}, {})", self.w, self.x, self.y, self.z)
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Accepts components whose norm is within [`UNIT_TOLERANCE`] of one and
    /// renormalizes them. Components already unit to working precision are
    /// kept bit for bit, so stored quaternions read back unchanged.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, QuatError> {
        let n = norm4(w, x, y, z);
        if !n.is_finite() {
            return Err(QuatError::NonFinite);
        }
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(QuatError::NotUnit { norm: n });
        }
        if (n - 1.0).abs() <= 2.0 * f64::EPSILON {
            return Ok(UnitQuat { w, x, y, z });
        }
        Ok(Self::scaled(w, x, y, z, n))
    }

    /// Normalizes an arbitrary non-zero quaternion.
    pub fn normalize(w: f64, x: f64, y: f64, z: f64) -> Result<Self, QuatError> {
        let n = norm4(w, x, y, z);
        if !n.is_finite() {
            return Err(QuatError::NonFinite);
        }
        if n == 0.0 {
            return Err(QuatError::NotUnit { norm: 0.0 });
        }
        Ok(Self::scaled(w, x, y, z, n))
    }

    #[inline]
    fn scaled(w: f64, x: f64, y: f64, z: f64, n: f64) -> Self {
        let s = 1.0 / n;
        UnitQuat {
            w: w * s,
            x: x * s,
            y: y * s,
            z: z * s,
        }
    }

    /// `(cos(θ/2), sin(θ/2)·â)`.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self, QuatError> {
        let a = axis.normalized().ok_or(QuatError::ZeroAxis)?;
        if !angle.is_finite() {
            return Err(QuatError::NonFinite);
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Ok(Self::scaled(c, a.x * s, a.y * s, a.z * s, norm4(c, a.x * s, a.y * s, a.z * s)))
    }

    /// Rotation by `angle` about world +Z.
    pub fn yaw(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::Z, angle).expect("unit axis")
    }

    /// Exponential map: rotation by `|v|` radians about `v̂`.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = v.norm();
        if angle < 1e-12 {
            // second-order expansion keeps the map smooth near zero
            let h = v * 0.5;
            return Self::normalize(1.0 - 0.5 * h.dot(h), h.x, h.y, h.z).expect("finite");
        }
        Self::from_axis_angle(v, angle).expect("non-zero axis")
    }

    /// Logarithm map, the inverse of [`from_rotation_vector`](Self::from_rotation_vector).
    ///
    /// The result lies on the shortest arc, so its norm is in `[0, π]`.
    pub fn to_rotation_vector(self) -> Vec3 {
        let q = self.canonical();
        let v = Vec3::new(q.x, q.y, q.z);
        let s = v.norm();
        if s < 1e-12 {
            return v * 2.0;
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    /// Axis and angle with the angle in `[0, π]`. The identity reports the +X axis.
    pub fn to_axis_angle(self) -> (Vec3, f64) {
        let r = self.to_rotation_vector();
        match r.normalized() {
            Some(axis) => (axis, r.norm()),
            None => (Vec3::X, 0.0),
        }
    }

    #[inline]
    pub fn w(self) -> f64 {
        self.w
    }
    #[inline]
    pub fn x(self) -> f64 {
        self.x
    }
    #[inline]
    pub fn y(self) -> f64 {
        self.y
    }
    #[inline]
    pub fn z(self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    #[inline]
    pub fn norm(self) -> f64 {
        norm4(self.w, self.x, self.y, self.z)
    }

    /// Hamilton product `self · rhs`, renormalized.
    pub fn multiply(self, rhs: UnitQuat) -> UnitQuat {
        let (a, b) = (self, rhs);
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        Self::scaled(w, x, y, z, norm4(w, x, y, z))
    }

    /// Conjugate, which is the inverse for unit quaternions.
    #[inline]
    pub fn inverse(self) -> UnitQuat {
        UnitQuat {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Active rotation `q v q⁻¹`.
    #[inline]
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// 4-vector dot product.
    #[inline]
    pub fn dot(self, o: UnitQuat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Angle of the relative rotation between `self` and `other`, in `[0, π]`.
    ///
    /// Equal to `2·acos(|a·b|)`; evaluated through `atan2` on the relative
    /// quaternion so that nearly aligned inputs keep full precision.
    pub fn geodesic_distance(self, other: UnitQuat) -> f64 {
        let (a, b) = (self, other);
        let scalar = a.dot(b).abs();
        let av = Vec3::new(a.x, a.y, a.z);
        let bv = Vec3::new(b.x, b.y, b.z);
        let vector = bv * a.w - av * b.w - av.cross(bv);
        (2.0 * vector.norm().atan2(scalar)).min(std::f64::consts::PI)
    }

    /// Shortest-path spherical linear interpolation; `t` is clamped to `[0, 1]`.
    pub fn slerp(self, other: UnitQuat, t: f64) -> UnitQuat {
        let t = t.clamp(0.0, 1.0);
        let mut b = other;
        let mut d = self.dot(b);
        if d < 0.0 {
            b = -b;
            d = -d;
        }
        let (sa, sb) = if d > SLERP_LINEAR_THRESHOLD {
            (1.0 - t, t)
        } else {
            let theta = d.clamp(-1.0, 1.0).acos();
            let s = theta.sin();
            (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s)
        };
        let (w, x, y, z) = (
            sa * self.w + sb * b.w,
            sa * self.x + sb * b.x,
            sa * self.y + sb * b.y,
            sa * self.z + sb * b.z,
        );
        Self::scaled(w, x, y, z, norm4(w, x, y, z))
    }

    /// The representative with `w ≥ 0`.
    pub fn canonical(self) -> UnitQuat {
        if self.w < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;
    #[inline]
    fn mul(self, rhs: UnitQuat) -> UnitQuat {
        self.multiply(rhs)
    }
}

/// Same rotation, opposite hemisphere of the double cover.
impl Neg for UnitQuat {
    type Output = UnitQuat;
    #[inline]
    fn neg(self) -> UnitQuat {
        UnitQuat {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

impl TryFrom<[f64; 4]> for UnitQuat {
    type Error = QuatError;
    fn try_from(a: [f64; 4]) -> Result<Self, QuatError> {
        UnitQuat::new(a[0], a[1], a[2], a[3])
    }
}

impl From<UnitQuat> for [f64; 4] {
    fn from(q: UnitQuat) -> Self {
        q.to_array()
    }
}

#[inline]
fn norm4(w: f64, x: f64, y: f64, z: f64) -> f64 {
    (w * w + x * x + y * y + z * z).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn assert_same_rotation(a: UnitQuat, b: UnitQuat, tol: f64) {
        assert!(
            a.geodesic_distance(b) < tol,
            "{a:?} vs {b:?}: {}",
            a.geodesic_distance(b)
        );
    }

    #[test]
    fn multiply_identity_and_inverse() {
        let q = UnitQuat::from_axis_angle(Vec3::new(1.0, -2.0, 0.5), 1.1).unwrap();
        assert_eq!(q * UnitQuat::IDENTITY, q);
        let e = q * q.inverse();
        assert_abs_diff_eq!(e.w(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.x(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_quarter_yaws_make_a_half_turn() {
        let q = UnitQuat::yaw(FRAC_PI_2) * UnitQuat::yaw(FRAC_PI_2);
        let [w, x, y, z] = q.to_array();
        assert_abs_diff_eq!(w, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_cases() {
        assert_eq!(UnitQuat::IDENTITY.inverse().to_array(), [1.0, 0.0, 0.0, 0.0]);
        assert_same_rotation(UnitQuat::yaw(FRAC_PI_2).inverse(), UnitQuat::yaw(-FRAC_PI_2), 1e-12);
        let q = UnitQuat::from_axis_angle(Vec3::new(0.3, 0.1, -0.7), 2.0).unwrap();
        assert_eq!(q.inverse().inverse(), q);
    }

    #[test]
    fn rotate_cases() {
        let v = Vec3::new(0.2, -1.5, 3.0);
        assert_eq!(UnitQuat::IDENTITY.rotate(v), v);
        let r = UnitQuat::yaw(FRAC_PI_2).rotate(Vec3::X);
        assert_abs_diff_eq!(r.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.y, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.z, 0.0, epsilon = 1e-15);

        let q = UnitQuat::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.7).unwrap();
        let u = Vec3::new(-0.4, 2.0, 1.0);
        assert_abs_diff_eq!(q.rotate(v).dot(q.rotate(u)), v.dot(u), epsilon = 1e-12);
    }

    #[test]
    fn axis_angle_cases() {
        assert_eq!(
            UnitQuat::from_axis_angle(Vec3::new(3.0, 1.0, 2.0), 0.0).unwrap(),
            UnitQuat::IDENTITY
        );
        let q = UnitQuat::from_axis_angle(Vec3::Z, PI).unwrap();
        assert_abs_diff_eq!(q.w(), 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(q.z(), 1.0, epsilon = 1e-16);

        let axis = Vec3::new(0.0, 0.6, 0.8);
        let (a, theta) = UnitQuat::from_axis_angle(axis, 2.5).unwrap().to_axis_angle();
        assert_abs_diff_eq!(theta, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!((a - axis).norm(), 0.0, epsilon = 1e-12);

        assert_eq!(UnitQuat::from_axis_angle(Vec3::ZERO, 1.0), Err(QuatError::ZeroAxis));
    }

    #[test]
    fn constructor_validation() {
        assert!(matches!(UnitQuat::new(0.9, 0.0, 0.0, 0.0), Err(QuatError::NotUnit { .. })));
        assert!(matches!(UnitQuat::new(f64::NAN, 0.0, 0.0, 0.0), Err(QuatError::NonFinite)));
        let q = UnitQuat::new(1.0 + 5e-7, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(q.w(), 1.0);
        assert!(UnitQuat::normalize(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn geodesic_cases() {
        let q = UnitQuat::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.9).unwrap();
        assert_eq!(q.geodesic_distance(q), 0.0);
        assert_eq!(q.geodesic_distance(-q), 0.0);
        assert_abs_diff_eq!(
            UnitQuat::IDENTITY.geodesic_distance(UnitQuat::yaw(FRAC_PI_2)),
            FRAC_PI_2,
            epsilon = 1e-15
        );
        // result stays sharp far below acos resolution
        let tiny = UnitQuat::yaw(1e-10);
        assert_abs_diff_eq!(UnitQuat::IDENTITY.geodesic_distance(tiny), 1e-10, epsilon = 1e-20);
    }

    #[test]
    fn slerp_cases() {
        let q = UnitQuat::from_axis_angle(Vec3::Y, 0.4).unwrap();
        assert_same_rotation(q.slerp(q, 0.37), q, 1e-12);
        let mid = UnitQuat::IDENTITY.slerp(UnitQuat::yaw(FRAC_PI_2), 0.5);
        assert_same_rotation(mid, UnitQuat::yaw(FRAC_PI_4), 1e-12);
        // shortest path through the double cover
        let far = -UnitQuat::yaw(FRAC_PI_2);
        assert_same_rotation(UnitQuat::IDENTITY.slerp(far, 0.5), UnitQuat::yaw(FRAC_PI_4), 1e-12);
        assert_eq!(q.slerp(UnitQuat::IDENTITY, 0.0), q);
    }

    #[test]
    fn rotation_vector_round_trip() {
        let v = Vec3::new(0.3, -1.2, 0.8);
        let r = UnitQuat::from_rotation_vector(v).to_rotation_vector();
        assert_abs_diff_eq!((r - v).norm(), 0.0, epsilon = 1e-12);
        let small = Vec3::new(1e-14, 0.0, -2e-14);
        let r = UnitQuat::from_rotation_vector(small).to_rotation_vector();
        assert_abs_diff_eq!((r - small).norm(), 0.0, epsilon = 1e-26);
    }

    #[test]
    fn serde_uses_scalar_first_arrays() {
        let json = serde_json::to_string(&UnitQuat::IDENTITY).unwrap();
        assert_eq!(json, "[1.0,0.0,0.0,0.0]");
        assert!(serde_json::from_str::<UnitQuat>("[0.5,0.0,0.0,0.0]").is_err());
        let v: Vec3 = serde_json::from_str("[1.0,2.0,3.0]").unwrap();
        assert_eq!(v, Vec3::new(1.0, 2.0, 3.0));
    }
}
