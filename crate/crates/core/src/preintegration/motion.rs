//! Zero-velocity and non-holonomic constraint detection over a 1 s window.

use serde::{Deserialize, Serialize};

use super::{ImuSample, OdoSample};
use crate::geomath::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionConstraint {
    Zupt,
    Nhc,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionThresholds {
    /// ZUPT gate on the mean angular rate (rad/s).
    pub zupt_gyro: f64,
    /// ZUPT also requires the mean odometer speed below this (m/s).
    pub zupt_speed: f64,
    /// NHC gate on the mean angular rate (rad/s).
    pub nhc_gyro: f64,
    /// NHC requires the mean forward speed above this (m/s).
    pub nhc_speed: f64,
    /// Per-axis standard deviation of the window-mean gyro due to white
    /// noise (rad/s); the ZUPT gate is never tighter than four of these.
    pub gyro_mean_sigma: f64,
    /// Required window length (s).
    pub window: f64,
}

impl Default for MotionThresholds {
    fn default() -> Self {
        Self {
            zupt_gyro: 0.05f64.to_radians(),
            zupt_speed: 0.02,
            nhc_gyro: 5f64.to_radians(),
            nhc_speed: 1.0,
            gyro_mean_sigma: 0.0,
            window: 1.0,
        }
    }
}

/// Classifies a window of inertial and odometer samples. The result depends
/// only on the window means, so sample order inside the window is irrelevant.
pub fn detect_motion(imu: &[ImuSample], odo: &[OdoSample], bg: &Vec3, thr: &MotionThresholds) -> MotionConstraint {
    let span = |ts: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = ts.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
        hi - lo
    };
    if imu.is_empty() || odo.is_empty() {
        return MotionConstraint::None;
    }
    let tol = 1e-9;
    if span(&mut imu.iter().map(|s| s.t)) < thr.window - tol || span(&mut odo.iter().map(|s| s.t)) < thr.window - tol {
        return MotionConstraint::None;
    }
    let gyro = imu.iter().fold(Vec3::zeros(), |a, s| a + s.gyro) / imu.len() as f64 - bg;
    let rate = gyro.norm();
    let speed = odo.iter().map(|s| s.v).sum::<f64>() / odo.len() as f64;
    let zupt_gate = thr.zupt_gyro.max(4.0 * thr.gyro_mean_sigma);
    if rate < zupt_gate && speed.abs() < thr.zupt_speed {
        MotionConstraint::Zupt
    } else if rate < thr.nhc_gyro && speed > thr.nhc_speed {
        MotionConstraint::Nhc
    } else {
        MotionConstraint::None
    }
}
