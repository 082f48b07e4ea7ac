//! Frames, rotation algebra and WGS-84 conversions.
//!
//! Quaternions are Hamilton, scalar-first and body-to-reference: `q_wb`
//! rotates vectors expressed in the body frame into the world frame.
//! Attitude perturbations are applied on the right, `q ⊞ δθ = q ⊗ Exp(δθ)`.
//!
//! Frames:
//! - `World` (w): local frame anchored at the trajectory origin. In this
//!   crate it is aligned with `Nav`, so `R_nw = I` unless a caller supplies
//!   another rotation.
//! - `Nav` (n): east-north-up at the geodetic origin.
//! - `Ecef` (e): WGS-84 earth-centred earth-fixed.
//! - `Body` (b): IMU frame.
//! - `Mount` (m): vehicle frame, right-forward-up.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// WGS-84 semi-major axis (m).
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// Standard gravity (m/s²), used as a flat-earth constant.
pub const GRAVITY: f64 = 9.806_65;
/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const SMALL_ANGLE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameTag {
    World,
    Nav,
    Ecef,
    Body,
    Mount,
}

/// Skew-symmetric matrix `⌊a×⌋` such that `skew(a) * b = a × b`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// SO(3) exponential map returning a rotation matrix.
pub fn exp_so3(phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < SMALL_ANGLE {
        return Mat3::identity() + k + 0.5 * k * k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Mat3::identity() + a * k + b * k * k
}

/// SO(3) logarithm of a rotation matrix, as a rotation vector.
pub fn log_so3(r: &Mat3) -> Vec3 {
    rot_to_quat(r).scaled_axis()
}

/// Right Jacobian of SO(3).
pub fn right_jacobian(phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < SMALL_ANGLE {
        return Mat3::identity() - 0.5 * k + k * k / 6.0;
    }
    let t2 = theta * theta;
    Mat3::identity() - (1.0 - theta.cos()) / t2 * k + (theta - theta.sin()) / (t2 * theta) * k * k
}

/// Inverse of the right Jacobian of SO(3).
pub fn right_jacobian_inv(phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < SMALL_ANGLE {
        return Mat3::identity() + 0.5 * k + k * k / 12.0;
    }
    let c = 1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
    Mat3::identity() + 0.5 * k + c * k * k
}

pub fn quat_to_rot(q: &Quat) -> Mat3 {
    q.to_rotation_matrix().into_inner()
}

pub fn rot_to_quat(r: &Mat3) -> Quat {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r))
}

/// Quaternion from a rotation vector.
pub fn quat_exp(phi: &Vec3) -> Quat {
    UnitQuaternion::from_scaled_axis(*phi)
}

/// Generalized minus on the rotation manifold: the rotation vector of `q2⁻¹ ⊗ q1`.
pub fn quat_boxminus(q1: &Quat, q2: &Quat) -> Vec3 {
    (q2.inverse() * q1).scaled_axis()
}

/// Right-perturbation update `q ⊗ Exp(δθ)`.
pub fn quat_boxplus(q: &Quat, dtheta: &Vec3) -> Quat {
    q * quat_exp(dtheta)
}

/// Normalizes a raw quaternion. The flag is set when the input norm
/// deviated from one by more than `1e-6`.
pub fn normalize_checked(q: nalgebra::Quaternion<f64>) -> (Quat, bool) {
    let n = q.norm();
    let warn = (n - 1.0).abs() > 1e-6;
    if warn {
        log::warn!("quaternion norm {n} renormalized");
    }
    (UnitQuaternion::from_quaternion(q), warn)
}

/// Rotation from roll/pitch/yaw (rad), `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn rot_from_rpy(roll: f64, pitch: f64, yaw: f64) -> Mat3 {
    Rotation3::from_euler_angles(roll, pitch, yaw).into_inner()
}

/// Roll/pitch/yaw (rad) of a rotation matrix, inverse of [`rot_from_rpy`].
pub fn rpy_from_rot(r: &Mat3) -> Vec3 {
    let (roll, pitch, yaw) = Rotation3::from_matrix_unchecked(*r).euler_angles();
    Vec3::new(roll, pitch, yaw)
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % std::f64::consts::TAU;
    if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    } else if x <= -std::f64::consts::PI {
        x += std::f64::consts::TAU;
    }
    x
}

/// Geodetic anchor of the navigation frame on the WGS-84 ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticOrigin {
    /// Latitude (rad).
    pub lat: f64,
    /// Longitude (rad).
    pub lon: f64,
    /// Ellipsoidal height (m).
    pub height: f64,
}

impl GeodeticOrigin {
    pub fn new(lat: f64, lon: f64, height: f64) -> crate::Result<Self> {
        if !(lat.abs() <= std::f64::consts::FRAC_PI_2) || !lon.is_finite() || !height.is_finite() {
            return Err(crate::Error::InvalidInput(format!(
                "geodetic origin out of range: lat={lat}, lon={lon}, h={height}"
            )));
        }
        Ok(Self { lat, lon, height })
    }

    pub fn to_ecef(&self) -> Vec3 {
        geodetic_to_ecef(self.lat, self.lon, self.height)
    }

    /// `R_en`: columns are the local east, north and up unit vectors in ECEF.
    pub fn ecef_enu_rotation(&self) -> Mat3 {
        ecef_enu_rotation(self)
    }

    pub fn enu_to_ecef(&self, enu: &Vec3) -> Vec3 {
        self.to_ecef() + self.ecef_enu_rotation() * enu
    }

    pub fn ecef_to_enu(&self, ecef: &Vec3) -> Vec3 {
        self.ecef_enu_rotation().transpose() * (ecef - self.to_ecef())
    }
}

pub fn geodetic_to_ecef(lat: f64, lon: f64, h: f64) -> Vec3 {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let (slat, clat) = lat.sin_cos();
    let (slon, clon) = lon.sin_cos();
    let n = WGS84_A / (1.0 - e2 * slat * slat).sqrt();
    Vec3::new(
        (n + h) * clat * clon,
        (n + h) * clat * slon,
        (n * (1.0 - e2) + h) * slat,
    )
}

/// ECEF to (lat, lon, h) by fixed-point iteration on latitude.
pub fn ecef_to_geodetic(p: &Vec3) -> (f64, f64, f64) {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let lon = p.y.atan2(p.x);
    let rho = (p.x * p.x + p.y * p.y).sqrt();
    if rho < 1e-9 {
        let b = WGS84_A * (1.0 - WGS84_F);
        let lat = std::f64::consts::FRAC_PI_2.copysign(p.z);
        return (lat, lon, p.z.abs() - b);
    }
    let mut lat = (p.z / (rho * (1.0 - e2))).atan();
    let mut h = 0.0;
    for _ in 0..20 {
        let s = lat.sin();
        let n = WGS84_A / (1.0 - e2 * s * s).sqrt();
        h = rho / lat.cos() - n;
        let next = (p.z / (rho * (1.0 - e2 * n / (n + h)))).atan();
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    (lat, lon, h)
}

pub fn ecef_enu_rotation(origin: &GeodeticOrigin) -> Mat3 {
    let (sl, cl) = origin.lat.sin_cos();
    let (so, co) = origin.lon.sin_cos();
    let east = Vec3::new(-so, co, 0.0);
    let north = Vec3::new(-sl * co, -sl * so, cl);
    let up = Vec3::new(cl * co, cl * so, sl);
    Mat3::from_columns(&[east, north, up])
}

/// Azimuth (from north, clockwise) and elevation of `target` seen from `from` (both ECEF).
pub fn azimuth_elevation(origin: &GeodeticOrigin, from: &Vec3, target: &Vec3) -> (f64, f64) {
    let d = ecef_enu_rotation(origin).transpose() * (target - from);
    let horiz = (d.x * d.x + d.y * d.y).sqrt();
    (d.x.atan2(d.y), d.z.atan2(horiz))
}
