//! Quaternion algebra and attitude-error calculus.
//!
//! Quaternions are scalar-first `[w, x, y, z]` and, when unit, describe the
//! rotation from the body frame to the reference frame:
//! `v_world = q ⊗ [0, v_body] ⊗ q*`. `q` and `-q` encode the same rotation;
//! nothing in this module canonicalizes implicitly.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance used to decide whether an input quaternion or axis is unit.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Pitch distance from ±π/2 below which Euler extraction treats the attitude
/// as gimbal locked.
pub const GIMBAL_LOCK_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quaternion {
    fn from(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        q.to_array()
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.w, self.x, self.y, self.z)
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub const fn identity() -> Self {
        Self::IDENTITY
    }

    pub fn from_scalar_vector(w: f64, v: Vec3) -> Self {
        Quaternion::new(w, v.x, v.y, v.z)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn scalar(self) -> f64 {
        self.w
    }

    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Four-dimensional inner product.
    pub fn dot(self, p: Quaternion) -> f64 {
        self.w * p.w + self.x * p.x + self.y * p.y + self.z * p.z
    }

    pub fn scale(self, s: f64) -> Self {
        Quaternion::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn conjugate(self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn normalize(self) -> Result<Self> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid(format!("cannot normalize quaternion {self}")));
        }
        Ok(self.scale(1.0 / n))
    }

    /// Representative with `w >= 0`; when `w == 0` the first non-zero vector
    /// component is made non-negative.
    pub fn canonical(self) -> Self {
        let sign_source = [self.w, self.x, self.y, self.z]
            .into_iter()
            .find(|c| *c != 0.0)
            .unwrap_or(0.0);
        if sign_source < 0.0 {
            -self
        } else {
            self
        }
    }

    /// `[cos(θ/2), sin(θ/2)·û]`.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self> {
        if (axis.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!(
                "rotation axis must be unit, |axis| = {}",
                axis.norm()
            )));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        Ok(Quaternion::from_scalar_vector(c, axis * s))
    }

    /// Exponential map of a rotation vector: rotation by `|v|` about `v/|v|`.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = v.norm();
        if angle < 1e-12 {
            // second-order expansion keeps the result unit to rounding
            let half = v * 0.5;
            return Quaternion::from_scalar_vector(1.0 - half.norm_squared() / 2.0, half)
                .normalize()
                .unwrap_or(Quaternion::IDENTITY);
        }
        let (s, c) = (angle / 2.0).sin_cos();
        Quaternion::from_scalar_vector(c, v * (s / angle))
    }

    /// Inverse of [`Quaternion::from_rotation_vector`] on the shortest arc.
    pub fn to_rotation_vector(self) -> Vec3 {
        let q = if self.w < 0.0 { -self } else { self };
        let v = q.vector();
        let s = v.norm();
        if s < 1e-12 {
            return v * 2.0;
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    /// Body-to-world rotation matrix of a unit quaternion.
    pub fn rotation_matrix(self) -> Matrix3<f64> {
        let Quaternion { w, x, y, z } = self;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// `R v`: body vector expressed in the world frame.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        (self * Quaternion::from_scalar_vector(0.0, v) * self.conjugate()).vector()
    }

    /// `Rᵀ v`: world vector expressed in the body frame.
    pub fn inverse_rotate(self, v: Vec3) -> Vec3 {
        (self.conjugate() * Quaternion::from_scalar_vector(0.0, v) * self).vector()
    }

    /// Shortest-arc spherical interpolation between unit quaternions.
    pub fn slerp(self, other: Quaternion, t: f64) -> Self {
        let mut d = self.dot(other);
        let mut b = other;
        if d < 0.0 {
            d = -d;
            b = -b;
        }
        let d = d.min(1.0);
        if d > 1.0 - 1e-12 {
            let q = self.scale(1.0 - t) + b.scale(t);
            return q.normalize().unwrap_or(self);
        }
        let theta = d.acos();
        let s = theta.sin();
        let wa = ((1.0 - t) * theta).sin() / s;
        let wb = (t * theta).sin() / s;
        (self.scale(wa) + b.scale(wb)).normalize().unwrap_or(self)
    }

    pub fn from_euler(e: EulerAngles) -> Self {
        euler_to_quat(e)
    }

    pub fn to_euler(self) -> Result<EulerAngles> {
        quat_to_euler(self)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;

    fn add(self, p: Quaternion) -> Quaternion {
        Quaternion::new(self.w + p.w, self.x + p.x, self.y + p.y, self.z + p.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;

    fn sub(self, p: Quaternion) -> Quaternion {
        Quaternion::new(self.w - p.w, self.x - p.x, self.y - p.y, self.z - p.z)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, p: Quaternion) -> Quaternion {
        hamilton_product(self, p)
    }
}

/// `q ⊗ p`.
pub fn hamilton_product(q: Quaternion, p: Quaternion) -> Quaternion {
    Quaternion::new(
        q.w * p.w - q.x * p.x - q.y * p.y - q.z * p.z,
        q.w * p.x + q.x * p.w + q.y * p.z - q.z * p.y,
        q.w * p.y - q.x * p.z + q.y * p.w + q.z * p.x,
        q.w * p.z + q.x * p.y - q.y * p.x + q.z * p.w,
    )
}

pub fn conjugate(q: Quaternion) -> Quaternion {
    q.conjugate()
}

/// Roll, pitch, yaw in radians (intrinsic Z-Y-X order).
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        EulerAngles { roll, pitch, yaw }
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Self {
        EulerAngles::new(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }
}

pub fn euler_to_quat(e: EulerAngles) -> Quaternion {
    let (sr, cr) = (e.roll / 2.0).sin_cos();
    let (sp, cp) = (e.pitch / 2.0).sin_cos();
    let (sy, cy) = (e.yaw / 2.0).sin_cos();
    Quaternion::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    )
}

/// Inverse of [`euler_to_quat`].
///
/// Within [`GIMBAL_LOCK_TOLERANCE`] of pitch = ±π/2 roll is set to 0 and yaw
/// carries the whole free angle.
pub fn quat_to_euler(q: Quaternion) -> Result<EulerAngles> {
    check_unit(q, "quat_to_euler")?;
    let Quaternion { w, x, y, z } = q;
    let sin_pitch = (2.0 * (w * y - x * z)).clamp(-1.0, 1.0);
    let pitch = sin_pitch.asin();
    if FRAC_PI_2 - pitch.abs() <= GIMBAL_LOCK_TOLERANCE {
        let pitch = FRAC_PI_2.copysign(pitch);
        return Ok(EulerAngles::new(0.0, pitch, wrap_angle(2.0 * z.atan2(w))));
    }
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    Ok(EulerAngles::new(wrap_angle(roll), pitch, wrap_angle(yaw)))
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

fn check_unit(q: Quaternion, what: &str) -> Result<()> {
    if !q.is_finite() || !q.is_unit(UNIT_TOLERANCE) {
        return Err(Error::invalid(format!(
            "{what}: expected unit quaternion, got {q} (norm {})",
            q.norm()
        )));
    }
    Ok(())
}

/// `q_true ⊗ q_est*`, the rotation taking the estimate onto the truth.
pub fn error_quat(q_true: Quaternion, q_est: Quaternion) -> Result<Quaternion> {
    check_unit(q_true, "error_quat(q_true)")?;
    check_unit(q_est, "error_quat(q_est)")?;
    Ok(q_true * q_est.conjugate())
}

/// Angle of a (unit) error quaternion, `2·acos(|w|)`, in `[0, π]`.
///
/// Evaluated as `2·atan2(‖v‖, |w|)`, which keeps full precision near zero.
pub fn rotation_angle(q_err: Quaternion) -> f64 {
    2.0 * q_err.vector().norm().atan2(q_err.w.abs())
}

/// Total rotation error between two attitudes in radians, `[0, π]`.
pub fn error_angle(q_true: Quaternion, q_est: Quaternion) -> Result<f64> {
    error_quat(q_true, q_est).map(rotation_angle)
}

/// Splits an error quaternion into a rotation about z (heading, `e_h`) and the
/// shortest residual rotation (inclination, `e_i`).
///
/// `e_h` is `2·atan(q_z/q_w)` evaluated sign-safely, so `q` and `-q` agree and
/// the result lies in (−π, π]. For `q_w = q_z = 0` heading is reported as 0
/// and inclination as π.
pub fn heading_inclination_errors(q_err: Quaternion) -> (f64, f64) {
    let s = if q_err.w < 0.0 { -1.0 } else { 1.0 };
    let heading = wrap_angle(2.0 * (s * q_err.z).atan2(s * q_err.w));
    let r = (q_err.w * q_err.w + q_err.z * q_err.z).sqrt();
    let tilt = (q_err.x * q_err.x + q_err.y * q_err.y).sqrt();
    let inclination = 2.0 * tilt.atan2(r);
    (heading, inclination)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttitudeError {
    pub q_err: Quaternion,
    pub angle: f64,
    pub heading: f64,
    pub inclination: f64,
}

pub fn attitude_error(q_true: Quaternion, q_est: Quaternion) -> Result<AttitudeError> {
    let q_err = error_quat(q_true, q_est)?;
    let (heading, inclination) = heading_inclination_errors(q_err);
    Ok(AttitudeError {
        q_err,
        angle: rotation_angle(q_err),
        heading,
        inclination,
    })
}

/// Root mean square of a sequence of angles.
pub fn rmse_angle(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::invalid("rmse of an empty error sequence"));
    }
    let sum: f64 = errors.iter().map(|e| e * e).sum();
    Ok((sum / errors.len() as f64).sqrt())
}

pub fn axis_angle_to_quat(axis: Vec3, angle: f64) -> Result<Quaternion> {
    Quaternion::from_axis_angle(axis, angle)
}
