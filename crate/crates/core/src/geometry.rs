//! Rigid-body math: vectors, unit quaternions, poses and the bi-invariant
//! rotation distance used for tracking-error reports.
//!
//! Quaternions are stored `(w, x, y, z)` and kept on the `w >= 0` hemisphere,
//! so `q` and `-q` always produce the same stored value.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("quaternion has zero or non-finite norm")]
    DegenerateQuaternion,
    #[error("vector has non-finite components")]
    NonFinite,
}

/// Coordinate frames of the teleoperation setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameTag {
    /// Tracker base station.
    S,
    /// Tracker mounted on the glove.
    H,
    /// Manipulator base.
    R,
    /// Instrument tip.
    T,
}

impl FrameTag {
    pub fn describe(self) -> &'static str {
        match self {
            FrameTag::S => "tracker base",
            FrameTag::H => "tracker",
            FrameTag::R => "manipulator base",
            FrameTag::T => "instrument tip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn unit_x() -> Self {
        Self::new(T::one(), T::zero(), T::zero())
    }

    pub fn unit_y() -> Self {
        Self::new(T::zero(), T::one(), T::zero())
    }

    pub fn unit_z() -> Self {
        Self::new(T::zero(), T::zero(), T::one())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Largest absolute component.
    pub fn max_abs(self) -> T {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn lerp(self, o: Self, s: T) -> Self {
        self + (o - self) * s
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64_lossy()),
            U::lit(self.y.to_f64_lossy()),
            U::lit(self.z.to_f64_lossy()),
        )
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real + Serialize> Serialize for Vec3<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.z].serialize(s)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for Vec3<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let a = <[T; 3]>::deserialize(d)?;
        let v = Vec3::from_array(a);
        if !v.is_finite() {
            return Err(serde::de::Error::custom(GeometryError::NonFinite));
        }
        Ok(v)
    }
}

/// Unit quaternion `(w, x, y, z)` with `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuat<T> {
    w: T,
    x: T,
    y: T,
    z: T,
}

impl<T: Real> Default for UnitQuat<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> UnitQuat<T> {
    pub fn identity() -> Self {
        Self {
            w: T::one(),
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    /// Normalizes and canonicalizes arbitrary components.
    pub fn from_wxyz(w: T, x: T, y: T, z: T) -> Result<Self, GeometryError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(GeometryError::DegenerateQuaternion);
        }
        Ok(Self::canonical(w / n, x / n, y / n, z / n))
    }

    pub fn from_array(q: [T; 4]) -> Result<Self, GeometryError> {
        Self::from_wxyz(q[0], q[1], q[2], q[3])
    }

    // Picks the w >= 0 representative; on the w == 0 great sphere the first
    // non-zero vector component is made positive.
    fn canonical(w: T, x: T, y: T, z: T) -> Self {
        let flip = if w != T::zero() {
            w < T::zero()
        } else if x != T::zero() {
            x < T::zero()
        } else if y != T::zero() {
            y < T::zero()
        } else {
            z < T::zero()
        };
        if flip {
            Self { w: -w, x: -x, y: -y, z: -z }
        } else {
            Self { w, x, y, z }
        }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        match axis.normalized() {
            Some(a) => {
                let half = angle / T::lit(2.0);
                let s = half.sin();
                Self::from_wxyz(half.cos(), a.x * s, a.y * s, a.z * s)
                    .unwrap_or_else(|_| Self::identity())
            }
            None => Self::identity(),
        }
    }

    /// Shortest-arc rotation taking direction `from` onto direction `to`.
    pub fn rotation_between(from: Vec3<T>, to: Vec3<T>) -> Self {
        let (Some(a), Some(b)) = (from.normalized(), to.normalized()) else {
            return Self::identity();
        };
        let c = a.dot(b);
        if c < T::lit(-1.0 + 1e-12) {
            // antiparallel: any perpendicular axis works
            let helper = if a.x.abs() < T::lit(0.9) { Vec3::unit_x() } else { Vec3::unit_y() };
            return Self::from_axis_angle(a.cross(helper), T::PI());
        }
        let v = a.cross(b);
        Self::from_wxyz(T::one() + c, v.x, v.y, v.z).unwrap_or_else(|_| Self::identity())
    }

    pub fn rot_x(angle: T) -> Self {
        Self::from_axis_angle(Vec3::unit_x(), angle)
    }

    pub fn rot_y(angle: T) -> Self {
        Self::from_axis_angle(Vec3::unit_y(), angle)
    }

    pub fn rot_z(angle: T) -> Self {
        Self::from_axis_angle(Vec3::unit_z(), angle)
    }

    /// Exponential map from a rotation vector (axis * angle).
    pub fn exp(omega: Vec3<T>) -> Self {
        let theta = omega.norm();
        let half = theta / T::lit(2.0);
        if theta < T::lit(1e-8) {
            // second-order series keeps the map smooth through zero
            let w = T::one() - theta * theta / T::lit(8.0);
            let v = omega * (T::lit(0.5) - theta * theta / T::lit(48.0));
            return Self::from_wxyz(w, v.x, v.y, v.z).unwrap_or_else(|_| Self::identity());
        }
        let k = half.sin() / theta;
        Self::from_wxyz(half.cos(), omega.x * k, omega.y * k, omega.z * k)
            .unwrap_or_else(|_| Self::identity())
    }

    /// Logarithm map: rotation vector with angle in `[0, pi]`.
    pub fn log(self) -> Vec3<T> {
        let v = self.vector();
        let s = v.norm();
        if s < T::lit(1e-12) {
            return v * (T::lit(2.0) / self.w);
        }
        let angle = T::lit(2.0) * s.atan2(self.w);
        v * (angle / s)
    }

    pub fn w(self) -> T {
        self.w
    }
    pub fn x(self) -> T {
        self.x
    }
    pub fn y(self) -> T {
        self.y
    }
    pub fn z(self) -> T {
        self.z
    }

    pub fn vector(self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Inverse rotation (the conjugate, for unit quaternions).
    pub fn inverse(self) -> Self {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(self, o: Self) -> T {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(self) -> T {
        T::lit(2.0) * self.vector().norm().atan2(self.w.abs())
    }

    pub fn is_identity(self) -> bool {
        self.x == T::zero() && self.y == T::zero() && self.z == T::zero()
    }

    /// Rotates a vector: `q v q*`.
    pub fn rotate(self, v: Vec3<T>) -> Vec3<T> {
        let u = self.vector();
        let two = T::lit(2.0);
        let t = u.cross(v) * two;
        v + t * self.w + u.cross(t)
    }

    /// Geodesic interpolation: `s = 0` gives `self`, `s = 1` gives `o`.
    pub fn slerp(self, o: Self, s: T) -> Self {
        let rel = self.inverse() * o;
        self * Self::exp(rel.log() * s)
    }

    /// Rotates toward `target` by at most `max_angle` radians along the geodesic.
    /// Lands exactly on `target` when within reach.
    pub fn step_towards(self, target: Self, max_angle: T) -> Self {
        let rel = self.inverse() * target;
        let angle = rel.angle();
        if angle <= max_angle {
            target
        } else {
            self * Self::exp(rel.log() * (max_angle / angle))
        }
    }

    pub fn cast<U: Real>(self) -> UnitQuat<U> {
        let a = self.to_array().map(|c| U::lit(c.to_f64_lossy()));
        UnitQuat::from_array(a).unwrap_or_else(|_| UnitQuat::identity())
    }

    // Grouped as w1 w2 - v1.v2 and (w1 v2 + w2 v1) + v1 x v2 so that q* q
    // cancels to an exact zero vector part.
    fn hamilton(self, o: Self) -> [T; 4] {
        let (a, b) = (self.vector(), o.vector());
        let w = self.w * o.w - a.dot(b);
        let v = (b * self.w + a * o.w) + a.cross(b);
        [w, v.x, v.y, v.z]
    }
}

impl<T: Real> Mul for UnitQuat<T> {
    type Output = Self;

    /// Hamilton product. The result is renormalized only once rounding drift
    /// exceeds a few ulps, so products with the exact identity keep their bits.
    fn mul(self, o: Self) -> Self {
        let [w, x, y, z] = self.hamilton(o);
        let n2 = w * w + x * x + y * y + z * z;
        if (n2 - T::one()).abs() > T::epsilon() * T::lit(16.0) {
            let n = n2.sqrt();
            Self::canonical(w / n, x / n, y / n, z / n)
        } else {
            Self::canonical(w, x, y, z)
        }
    }
}

impl<T: Real> fmt::Display for UnitQuat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.w, self.x, self.y, self.z)
    }
}

impl<T: Real + Serialize> Serialize for UnitQuat<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for UnitQuat<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let a = <[T; 4]>::deserialize(d)?;
        let n2 = a.iter().fold(T::zero(), |acc, &c| acc + c * c);
        if !((n2 - T::one()).abs() <= T::lit(1e-6)) {
            return Err(serde::de::Error::custom("quaternion is not unit length"));
        }
        // Values within the unit tolerance are kept bit-for-bit.
        if (n2 - T::one()).abs() <= T::lit(1e-9) {
            Ok(UnitQuat::canonical(a[0], a[1], a[2], a[3]))
        } else {
            UnitQuat::from_array(a).map_err(serde::de::Error::custom)
        }
    }
}

/// Bi-invariant distance on SO(3): the geodesic angle between two rotations,
/// in `[0, pi]`.
pub fn rotation_distance<T: Real>(a: UnitQuat<T>, b: UnitQuat<T>) -> T {
    let rel = a.inverse().hamilton(b);
    let v = Vec3::new(rel[1], rel[2], rel[3]).norm();
    T::lit(2.0) * v.atan2(rel[0].abs())
}

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Pose<T: Real> {
    #[serde(rename = "pos")]
    pub position: Vec3<T>,
    #[serde(rename = "quat")]
    pub orientation: UnitQuat<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(position: Vec3<T>, orientation: UnitQuat<T>) -> Self {
        Self { position, orientation }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zero(), UnitQuat::identity())
    }

    pub fn from_translation(t: Vec3<T>) -> Self {
        Self::new(t, UnitQuat::identity())
    }

    pub fn from_rotation(q: UnitQuat<T>) -> Self {
        Self::new(Vec3::zero(), q)
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.position + self.orientation.rotate(other.position),
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Self {
        let q = self.orientation.inverse();
        Self::new(-q.rotate(self.position), q)
    }

    pub fn transform_point(&self, p: Vec3<T>) -> Vec3<T> {
        self.position + self.orientation.rotate(p)
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose::new(self.position.cast(), self.orientation.cast())
    }
}

impl<T: Real> Mul for Pose<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.compose(&o)
    }
}

pub fn compose<T: Real>(a: &Pose<T>, b: &Pose<T>) -> Pose<T> {
    a.compose(b)
}

pub fn inverse<T: Real>(p: &Pose<T>) -> Pose<T> {
    p.inverse()
}
