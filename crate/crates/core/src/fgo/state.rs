//! Estimator state types.

use std::collections::BTreeMap;

use nalgebra::SVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geomath::{quat_boxplus, quat_exp, quat_to_rot, rot_to_quat, Mat3, Quat, Vec3};
use crate::gnss::SatId;

/// Pose, velocity and biases of the IMU at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    /// Body-to-world attitude.
    pub q: Quat,
    pub ba: Vec3,
    pub bg: Vec3,
}

impl NavState {
    pub fn identity(t: f64) -> Self {
        Self { t, p: Vec3::zeros(), v: Vec3::zeros(), q: Quat::identity(), ba: Vec3::zeros(), bg: Vec3::zeros() }
    }

    pub fn rotation(&self) -> Mat3 {
        quat_to_rot(&self.q)
    }

    pub fn set_rotation(&mut self, r: &Mat3) {
        self.q = rot_to_quat(r);
    }

    /// Applies a 15-dof perturbation `[δp, δv, δθ, δb_a, δb_g]`.
    pub fn boxplus(&self, d: &SVector<f64, 15>) -> Self {
        Self {
            t: self.t,
            p: self.p + d.fixed_rows::<3>(0),
            v: self.v + d.fixed_rows::<3>(3),
            q: quat_boxplus(&self.q, &d.fixed_rows::<3>(6).into_owned()),
            ba: self.ba + d.fixed_rows::<3>(9),
            bg: self.bg + d.fixed_rows::<3>(12),
        }
    }

    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let mut v = |s: f64| Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s));
        Self { t: 0.0, p: v(10.0), v: v(2.0), q: quat_exp(&v(2.0)), ba: v(0.1), bg: v(0.01) }
    }
}

/// Odometer intrinsics and IMU-odometer extrinsics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibState {
    pub s_v: f64,
    pub s_w: f64,
    /// Odometer origin in the body frame.
    pub p_bm: Vec3,
    /// Mount-to-body rotation.
    pub q_bm: Quat,
    /// IMU-to-antenna lever arm when it is estimated.
    pub lever: Option<Vec3>,
}

impl CalibState {
    pub fn r_bm(&self) -> Mat3 {
        quat_to_rot(&self.q_bm)
    }
}

/// One single-differenced ambiguity (cycles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdAmbiguity {
    pub value: f64,
    pub fixed: Option<i64>,
}

/// Receiver clock drift and single-differenced ambiguities of one epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GnssState {
    /// Receiver clock drift (s/s).
    pub clock_drift: f64,
    pub ambiguities: BTreeMap<(SatId, u8), SdAmbiguity>,
}
