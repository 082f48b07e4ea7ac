//! IMU and odometer preintegration, plus ZUPT/NHC motion detection.

pub mod imu;
pub mod io;
pub mod motion;
pub mod odo;

use serde::{Deserialize, Serialize};

use crate::geomath::Vec3;
use crate::{Error, Result};

pub use imu::{imu_preintegrate, ImuNoise, ImuPreintegrated};
pub use motion::{detect_motion, MotionConstraint, MotionThresholds};
pub use odo::{odo_body_rates, odo_preintegrate, odo_project, OdoExtrinsic, OdoNoise, OdoPreintegrated};

/// Maximum spacing between consecutive inertial samples inside an interval.
pub const MAX_SAMPLE_GAP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force (m/s²), body frame.
    pub accel: Vec3,
    /// Angular rate ω_ib (rad/s), body frame.
    pub gyro: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdoSample {
    pub t: f64,
    /// Forward speed (m/s).
    pub v: f64,
    /// Bearing rate about the vehicle up axis (rad/s).
    pub omega: f64,
}

/// Odometer scale factors and their random-walk densities (1/√s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometerIntrinsics {
    pub s_v: f64,
    pub s_w: f64,
    pub rw_s_v: f64,
    pub rw_s_w: f64,
}

impl OdometerIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(1.0 + self.s_v > 0.0 && 1.0 + self.s_w > 0.0) {
            return Err(Error::InvalidInput(format!(
                "scale factors must exceed -1 (s_v = {}, s_w = {})",
                self.s_v, self.s_w
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_monotonic(ts: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for t in ts {
        if !(t > prev) {
            return Err(Error::Timing(format!("{what} timestamps not strictly increasing at t = {t}")));
        }
        prev = t;
    }
    Ok(())
}

/// Samples of `data` covering `[t0, t1]`, with the end points linearly
/// interpolated when they fall between samples.
pub(crate) fn slice_interval<T: Copy>(
    data: &[T],
    t0: f64,
    t1: f64,
    time: impl Fn(&T) -> f64,
    lerp: impl Fn(&T, &T, f64) -> T,
) -> Result<Vec<T>> {
    if data.is_empty() || !(t1 > t0) {
        return Err(Error::InvalidInput(format!("empty interval [{t0}, {t1}]")));
    }
    let eps = 1e-9;
    if time(&data[0]) > t0 + eps || time(&data[data.len() - 1]) < t1 - eps {
        return Err(Error::Timing(format!("samples do not cover [{t0}, {t1}]")));
    }
    let at = |t: f64| -> T {
        let i = data.partition_point(|s| time(s) <= t);
        if i == 0 {
            return data[0];
        }
        let a = &data[i - 1];
        if (time(a) - t).abs() <= eps || i == data.len() {
            return *a;
        }
        let b = &data[i];
        lerp(a, b, (t - time(a)) / (time(b) - time(a)))
    };
    let mut out = vec![at(t0)];
    let start = data.partition_point(|s| time(s) <= t0 + eps);
    for s in &data[start..] {
        if time(s) >= t1 - eps {
            break;
        }
        out.push(*s);
    }
    out.push(at(t1));
    Ok(out)
}

pub fn imu_interval(data: &[ImuSample], t0: f64, t1: f64) -> Result<Vec<ImuSample>> {
    slice_interval(data, t0, t1, |s| s.t, |a, b, f| ImuSample {
        t: a.t + f * (b.t - a.t),
        accel: a.accel.lerp(&b.accel, f),
        gyro: a.gyro.lerp(&b.gyro, f),
    })
}

pub fn odo_interval(data: &[OdoSample], t0: f64, t1: f64) -> Result<Vec<OdoSample>> {
    slice_interval(data, t0, t1, |s| s.t, |a, b, f| OdoSample {
        t: a.t + f * (b.t - a.t),
        v: a.v + f * (b.v - a.v),
        omega: a.omega + f * (b.omega - a.omega),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_interpolates_end_points() {
        let data: Vec<_> = (0..10).map(|i| OdoSample { t: i as f64 * 0.1, v: i as f64, omega: 0.0 }).collect();
        let s = odo_interval(&data, 0.15, 0.5).unwrap();
        assert!((s[0].t - 0.15).abs() < 1e-12 && (s[0].v - 1.5).abs() < 1e-9);
        assert!((s.last().unwrap().t - 0.5).abs() < 1e-12);
        assert_eq!(s.len(), 5);
        assert!(odo_interval(&data, 0.5, 1.5).is_err());
    }

    #[test]
    fn intrinsics_guard() {
        let mut i = OdometerIntrinsics { s_v: 0.0, s_w: 0.0, rw_s_v: 0.0, rw_s_w: 0.0 };
        assert!(i.validate().is_ok());
        i.s_v = -1.0;
        assert!(i.validate().is_err());
    }
}
