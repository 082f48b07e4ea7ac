//! On-manifold IMU preintegration with midpoint integration.
//!
//! Error-state ordering is `[δp, δv, δθ, δb_a, δb_g]`. Rotation errors are
//! right perturbations of the preintegrated rotation.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::{check_monotonic, ImuSample, MAX_SAMPLE_GAP};
use crate::fgo::state::NavState;
use crate::geomath::{exp_so3, log_so3, right_jacobian, right_jacobian_inv, skew, Mat3, Vec3, GRAVITY};
use crate::{Error, Result};

pub type Mat15 = SMatrix<f64, 15, 15>;
pub type Vec15 = SVector<f64, 15>;
pub type Mat15x12 = SMatrix<f64, 15, 12>;

pub fn gravity_w() -> Vec3 {
    Vec3::new(0.0, 0.0, -GRAVITY)
}

/// Discrete IMU noise: per-sample white noise and bias random walk densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuNoise {
    /// Accelerometer white noise per sample (m/s²).
    pub accel_sigma: f64,
    /// Gyroscope white noise per sample (rad/s).
    pub gyro_sigma: f64,
    /// Accelerometer bias random walk (m/s²/√s).
    pub accel_bias_rw: f64,
    /// Gyroscope bias random walk (rad/s/√s).
    pub gyro_bias_rw: f64,
}

impl ImuNoise {
    /// From velocity random walk (m/s/√h), angle random walk (°/√h) and sample rate.
    pub fn from_random_walks(vrw: f64, arw_deg: f64, rate_hz: f64, accel_bias_rw: f64, gyro_bias_rw: f64) -> Self {
        let dt = 1.0 / rate_hz;
        Self {
            accel_sigma: vrw / 60.0 / dt.sqrt(),
            gyro_sigma: arw_deg.to_radians() / 60.0 / dt.sqrt(),
            accel_bias_rw,
            gyro_bias_rw,
        }
    }
}

/// Nominal preintegrated deltas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuDelta {
    pub dp: Vec3,
    pub dv: Vec3,
    pub dr: Mat3,
}

impl ImuDelta {
    pub fn identity() -> Self {
        Self { dp: Vec3::zeros(), dv: Vec3::zeros(), dr: Mat3::identity() }
    }

    /// One midpoint step between two samples with bias `(ba, bg)`.
    pub fn step(&self, s0: &ImuSample, s1: &ImuSample, ba: &Vec3, bg: &Vec3) -> Self {
        let dt = s1.t - s0.t;
        let w = 0.5 * (s0.gyro + s1.gyro) - bg;
        let dr1 = self.dr * exp_so3(&(w * dt));
        let acc = 0.5 * (self.dr * (s0.accel - ba) + dr1 * (s1.accel - ba));
        Self { dp: self.dp + self.dv * dt + 0.5 * acc * dt * dt, dv: self.dv + acc * dt, dr: dr1 }
    }
}

/// Error-state transition `F` and noise input `G` of one midpoint step.
/// Noise ordering is `[n_a, n_g, n_ba, n_bg]`.
pub fn step_jacobians(delta: &ImuDelta, s0: &ImuSample, s1: &ImuSample, ba: &Vec3, bg: &Vec3) -> (Mat15, Mat15x12) {
    let dt = s1.t - s0.t;
    let phi = (0.5 * (s0.gyro + s1.gyro) - bg) * dt;
    let e = exp_so3(&phi);
    let jr = right_jacobian(&phi);
    let r0 = delta.dr;
    let r1 = r0 * e;
    let a0 = s0.accel - ba;
    let a1 = s1.accel - ba;

    let a_th = -0.5 * (r0 * skew(&a0) + r1 * skew(&a1) * e.transpose());
    let a_ba = -0.5 * (r0 + r1);
    let a_bg = 0.5 * r1 * skew(&a1) * jr * dt;

    let mut f = Mat15::identity();
    let half_dt2 = 0.5 * dt * dt;
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Mat3::identity() * dt));
    f.fixed_view_mut::<3, 3>(0, 6).copy_from(&(a_th * half_dt2));
    f.fixed_view_mut::<3, 3>(0, 9).copy_from(&(a_ba * half_dt2));
    f.fixed_view_mut::<3, 3>(0, 12).copy_from(&(a_bg * half_dt2));
    f.fixed_view_mut::<3, 3>(3, 6).copy_from(&(a_th * dt));
    f.fixed_view_mut::<3, 3>(3, 9).copy_from(&(a_ba * dt));
    f.fixed_view_mut::<3, 3>(3, 12).copy_from(&(a_bg * dt));
    f.fixed_view_mut::<3, 3>(6, 6).copy_from(&e.transpose());
    f.fixed_view_mut::<3, 3>(6, 12).copy_from(&(-jr * dt));

    let mut g = Mat15x12::zeros();
    g.fixed_view_mut::<3, 3>(0, 0).copy_from(&(a_ba * half_dt2));
    g.fixed_view_mut::<3, 3>(0, 3).copy_from(&(a_bg * half_dt2));
    g.fixed_view_mut::<3, 3>(3, 0).copy_from(&(a_ba * dt));
    g.fixed_view_mut::<3, 3>(3, 3).copy_from(&(a_bg * dt));
    g.fixed_view_mut::<3, 3>(6, 3).copy_from(&(-jr * dt));
    g.fixed_view_mut::<3, 3>(9, 6).copy_from(&Mat3::identity());
    g.fixed_view_mut::<3, 3>(12, 9).copy_from(&Mat3::identity());
    (f, g)
}

#[derive(Debug, Clone)]
pub struct ImuPreintegrated {
    pub t0: f64,
    pub t1: f64,
    pub delta: ImuDelta,
    pub ba_lin: Vec3,
    pub bg_lin: Vec3,
    pub cov: Mat15,
    /// Cumulative error transition; bias Jacobians are its last six columns.
    pub phi: Mat15,
    pub noise: ImuNoise,
    pub samples: Vec<ImuSample>,
}

pub fn imu_preintegrate(samples: &[ImuSample], ba: &Vec3, bg: &Vec3, noise: &ImuNoise) -> Result<ImuPreintegrated> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("IMU preintegration needs at least two samples".into()));
    }
    check_monotonic(samples.iter().map(|s| s.t), "IMU")?;
    let mut delta = ImuDelta::identity();
    let mut cov = Mat15::zeros();
    let mut phi = Mat15::identity();
    for w in samples.windows(2) {
        let dt = w[1].t - w[0].t;
        if dt > MAX_SAMPLE_GAP + 1e-9 {
            return Err(Error::Timing(format!("IMU gap of {dt} s at t = {}", w[0].t)));
        }
        let (f, g) = step_jacobians(&delta, &w[0], &w[1], ba, bg);
        let mut q = SMatrix::<f64, 12, 12>::zeros();
        for i in 0..3 {
            q[(i, i)] = noise.accel_sigma.powi(2);
            q[(3 + i, 3 + i)] = noise.gyro_sigma.powi(2);
            q[(6 + i, 6 + i)] = noise.accel_bias_rw.powi(2) * dt;
            q[(9 + i, 9 + i)] = noise.gyro_bias_rw.powi(2) * dt;
        }
        cov = f * cov * f.transpose() + g * q * g.transpose();
        cov = 0.5 * (cov + cov.transpose());
        phi = f * phi;
        delta = delta.step(&w[0], &w[1], ba, bg);
    }
    Ok(ImuPreintegrated {
        t0: samples[0].t,
        t1: samples[samples.len() - 1].t,
        delta,
        ba_lin: *ba,
        bg_lin: *bg,
        cov,
        phi,
        noise: *noise,
        samples: samples.to_vec(),
    })
}

/// Residual and Jacobians of the IMU factor, before whitening.
pub struct ImuResidual {
    pub r: Vec15,
    pub j_i: Mat15,
    pub j_j: Mat15,
}

impl ImuPreintegrated {
    pub fn dt(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn jp_ba(&self) -> Mat3 {
        self.phi.fixed_view::<3, 3>(0, 9).into_owned()
    }
    pub fn jp_bg(&self) -> Mat3 {
        self.phi.fixed_view::<3, 3>(0, 12).into_owned()
    }
    pub fn jv_ba(&self) -> Mat3 {
        self.phi.fixed_view::<3, 3>(3, 9).into_owned()
    }
    pub fn jv_bg(&self) -> Mat3 {
        self.phi.fixed_view::<3, 3>(3, 12).into_owned()
    }
    pub fn jr_bg(&self) -> Mat3 {
        self.phi.fixed_view::<3, 3>(6, 12).into_owned()
    }

    /// Deltas corrected to first order for a new bias.
    pub fn corrected(&self, ba: &Vec3, bg: &Vec3) -> ImuDelta {
        let dba = ba - self.ba_lin;
        let dbg = bg - self.bg_lin;
        ImuDelta {
            dp: self.delta.dp + self.jp_ba() * dba + self.jp_bg() * dbg,
            dv: self.delta.dv + self.jv_ba() * dba + self.jv_bg() * dbg,
            dr: self.delta.dr * exp_so3(&(self.jr_bg() * dbg)),
        }
    }

    /// Re-integrates the stored samples at a new bias linearization point.
    pub fn reintegrate(&self, ba: &Vec3, bg: &Vec3) -> Result<Self> {
        imu_preintegrate(&self.samples, ba, bg, &self.noise)
    }

    /// Propagates `xi` through the interval (biases carried over).
    pub fn predict(&self, xi: &NavState) -> NavState {
        let d = self.corrected(&xi.ba, &xi.bg);
        let dt = self.dt();
        let ri = xi.rotation();
        let g = gravity_w();
        let mut out = xi.clone();
        out.t = xi.t + dt;
        out.p = xi.p + xi.v * dt + 0.5 * g * dt * dt + ri * d.dp;
        out.v = xi.v + g * dt + ri * d.dv;
        out.set_rotation(&(ri * d.dr));
        out
    }

    pub fn residual(&self, xi: &NavState, xj: &NavState) -> ImuResidual {
        let dt = self.dt();
        let g = gravity_w();
        let ri = xi.rotation();
        let rj = xj.rotation();
        let rit = ri.transpose();
        let dbg = xi.bg - self.bg_lin;
        let d = self.corrected(&xi.ba, &xi.bg);

        let dp_w = xj.p - xi.p - xi.v * dt - 0.5 * g * dt * dt;
        let dv_w = xj.v - xi.v - g * dt;
        let r_p = rit * dp_w - d.dp;
        let r_v = rit * dv_w - d.dv;
        let r_th = log_so3(&(d.dr.transpose() * rit * rj));

        let mut r = Vec15::zeros();
        r.fixed_rows_mut::<3>(0).copy_from(&r_p);
        r.fixed_rows_mut::<3>(3).copy_from(&r_v);
        r.fixed_rows_mut::<3>(6).copy_from(&r_th);
        r.fixed_rows_mut::<3>(9).copy_from(&(xj.ba - xi.ba));
        r.fixed_rows_mut::<3>(12).copy_from(&(xj.bg - xi.bg));

        let jri = right_jacobian_inv(&r_th);
        let corr = self.jr_bg() * dbg;
        let mut j_i = Mat15::zeros();
        let mut j_j = Mat15::zeros();
        let eye = Mat3::identity();
        // position rows
        j_i.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-rit));
        j_i.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-rit * dt));
        j_i.fixed_view_mut::<3, 3>(0, 6).copy_from(&skew(&(rit * dp_w)));
        j_i.fixed_view_mut::<3, 3>(0, 9).copy_from(&(-self.jp_ba()));
        j_i.fixed_view_mut::<3, 3>(0, 12).copy_from(&(-self.jp_bg()));
        j_j.fixed_view_mut::<3, 3>(0, 0).copy_from(&rit);
        // velocity rows
        j_i.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-rit));
        j_i.fixed_view_mut::<3, 3>(3, 6).copy_from(&skew(&(rit * dv_w)));
        j_i.fixed_view_mut::<3, 3>(3, 9).copy_from(&(-self.jv_ba()));
        j_i.fixed_view_mut::<3, 3>(3, 12).copy_from(&(-self.jv_bg()));
        j_j.fixed_view_mut::<3, 3>(3, 3).copy_from(&rit);
        // rotation rows
        j_i.fixed_view_mut::<3, 3>(6, 6).copy_from(&(-jri * rj.transpose() * ri));
        j_i.fixed_view_mut::<3, 3>(6, 12)
            .copy_from(&(-jri * exp_so3(&r_th).transpose() * right_jacobian(&corr) * self.jr_bg()));
        j_j.fixed_view_mut::<3, 3>(6, 6).copy_from(&jri);
        // bias rows
        j_i.fixed_view_mut::<3, 3>(9, 9).copy_from(&(-eye));
        j_j.fixed_view_mut::<3, 3>(9, 9).copy_from(&eye);
        j_i.fixed_view_mut::<3, 3>(12, 12).copy_from(&(-eye));
        j_j.fixed_view_mut::<3, 3>(12, 12).copy_from(&eye);
        ImuResidual { r, j_i, j_j }
    }
}
