//! Odometer preintegration in the IMU body frame.
//!
//! The odometer reports forward speed and bearing rate in the mount frame
//! (right-forward-up). Between two estimator epochs the body-frame rotation
//! is integrated from the odometer bearing rate and the position from the
//! body-frame velocity `R_bm e₂ (1+s_v) v̂ − ⌊u×⌋ p_bm`, where
//! `u = R_bm e₃ (1+s_ω) ω̂` is the body rate seen by the odometer. The
//! lever-arm term deliberately uses `u` rather than the gyro: raw gyro noise
//! would act as spurious excitation of `p_bm` along the rotation axis.
//!
//! Sensitivities of the deltas to `[s_v, s_ω, p_bm, θ_bm]` are propagated
//! exactly per step; the covariance over `(δp, δθ, δs_v, δs_ω)` uses a
//! first-order discretization.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::{check_monotonic, OdoSample, OdometerIntrinsics, MAX_SAMPLE_GAP};
use crate::fgo::state::{CalibState, NavState};
use crate::geomath::{exp_so3, log_so3, right_jacobian, right_jacobian_inv, skew, Mat3, Vec3};
use crate::{Error, Result};

pub type Mat8 = SMatrix<f64, 8, 8>;
pub type Mat8x4 = SMatrix<f64, 8, 4>;
pub type Mat3x8 = SMatrix<f64, 3, 8>;
pub type Vec8 = SVector<f64, 8>;
pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;

const E2: Vec3 = Vec3::new(0.0, 1.0, 0.0);
const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// Maps scalar odometer outputs into the mount frame: `v^m = v e₂`, `ω^m = ω e₃`.
pub fn odo_project(v: f64, omega: f64) -> (Vec3, Vec3) {
    (E2 * v, E3 * omega)
}

/// Projection from the 2-vector `(v, ω)` into the stacked `[v^m; ω^m]`.
pub fn projection_matrix() -> SMatrix<f64, 6, 2> {
    let mut p = SMatrix::<f64, 6, 2>::zeros();
    p[(1, 0)] = 1.0;
    p[(5, 1)] = 1.0;
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdoExtrinsic {
    /// Mount-to-body rotation.
    pub r_bm: Mat3,
    /// Mount origin in the body frame (m).
    pub p_bm: Vec3,
}

impl OdoExtrinsic {
    pub fn from_calib(c: &CalibState) -> Self {
        Self { r_bm: c.r_bm(), p_bm: c.p_bm }
    }
}

/// Body-frame velocity of the IMU and angular rate implied by the odometer.
pub fn odo_body_rates(v_m: &Vec3, w_m: &Vec3, extr: &OdoExtrinsic) -> (Vec3, Vec3) {
    let u = extr.r_bm * w_m;
    (extr.r_bm * v_m - u.cross(&extr.p_bm), u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdoNoise {
    /// Forward-speed noise per sample (m/s).
    pub v_sigma: f64,
    /// Bearing-rate noise per sample (rad/s).
    pub w_sigma: f64,
    /// Isotropic position process noise (m/√s) keeping the covariance regular.
    pub floor_pos: f64,
    /// Isotropic rotation process noise (rad/√s).
    pub floor_rot: f64,
}

impl Default for OdoNoise {
    fn default() -> Self {
        Self { v_sigma: 0.01, w_sigma: 1f64.to_radians(), floor_pos: 3e-3, floor_rot: 2e-4 }
    }
}

/// Averaged inputs of one odometer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdoStep {
    pub dt: f64,
    pub v: f64,
    pub w: f64,
}

/// Nominal odometer deltas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdoDelta {
    pub dp: Vec3,
    pub dr: Mat3,
}

/// Per-step body velocity `w` and body rate `u` for parameters `(s_v, s_ω)`.
pub fn step_rates(step: &OdoStep, s_v: f64, s_w: f64, extr: &OdoExtrinsic) -> (Vec3, Vec3) {
    let (vm, wm) = odo_project((1.0 + s_v) * step.v, (1.0 + s_w) * step.w);
    odo_body_rates(&vm, &wm, extr)
}

pub(crate) fn advance(d: &OdoDelta, w: &Vec3, u: &Vec3, dt: f64) -> OdoDelta {
    let dr1 = d.dr * exp_so3(&(u * dt));
    OdoDelta { dp: d.dp + 0.5 * (d.dr + dr1) * w * dt, dr: dr1 }
}

/// Continuous error dynamics over `(δp, δθ, δs_v, δs_ω)` with noise
/// `[n_v, n_ω, n_sv, n_sω]`.
pub fn error_dynamics(
    r: &Mat3,
    w: &Vec3,
    u: &Vec3,
    extr: &OdoExtrinsic,
    v: f64,
    omega: f64,
    s_v: f64,
    s_w: f64,
) -> (Mat8, Mat8x4) {
    let r_bm = &extr.r_bm;
    let lever = skew(&extr.p_bm) * r_bm * E3;
    let mut f = Mat8::zeros();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-r * skew(w)));
    f.fixed_view_mut::<3, 1>(0, 6).copy_from(&(r * r_bm * E2 * v));
    f.fixed_view_mut::<3, 1>(0, 7).copy_from(&(r * lever * omega));
    f.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-skew(u)));
    f.fixed_view_mut::<3, 1>(3, 7).copy_from(&(r_bm * E3 * omega));
    let mut g = Mat8x4::zeros();
    g.fixed_view_mut::<3, 1>(0, 0).copy_from(&(r * r_bm * E2 * (1.0 + s_v)));
    g.fixed_view_mut::<3, 1>(0, 1).copy_from(&(r * lever * (1.0 + s_w)));
    g.fixed_view_mut::<3, 1>(3, 1).copy_from(&(r_bm * E3 * (1.0 + s_w)));
    g[(6, 2)] = 1.0;
    g[(7, 3)] = 1.0;
    (f, g)
}

#[derive(Debug, Clone)]
pub struct OdoPreintegrated {
    pub t0: f64,
    pub t1: f64,
    pub delta: OdoDelta,
    pub s_v_lin: f64,
    pub s_w_lin: f64,
    pub extr_lin: OdoExtrinsic,
    pub cov: Mat8,
    /// Sensitivities w.r.t. `[s_v, s_ω, p_bm, θ_bm]`.
    pub j_p: Mat3x8,
    pub j_r: Mat3x8,
    pub steps: Vec<OdoStep>,
    pub intrinsics: OdometerIntrinsics,
    pub noise: OdoNoise,
}

/// Builds averaged steps from odometer samples covering one interval.
pub fn build_steps(odo: &[OdoSample]) -> Result<Vec<OdoStep>> {
    if odo.len() < 2 {
        return Err(Error::InvalidInput("odometer preintegration needs at least two samples".into()));
    }
    check_monotonic(odo.iter().map(|s| s.t), "odometer")?;
    odo.windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            if dt > MAX_SAMPLE_GAP + 1e-9 {
                return Err(Error::Timing(format!("odometer gap of {dt} s at t = {}", w[0].t)));
            }
            Ok(OdoStep { dt, v: 0.5 * (w[0].v + w[1].v), w: 0.5 * (w[0].omega + w[1].omega) })
        })
        .collect()
}

/// Preintegrates odometer samples (end points on the epoch times).
pub fn odo_preintegrate(
    odo: &[OdoSample],
    intr: &OdometerIntrinsics,
    extr: &OdoExtrinsic,
    noise: &OdoNoise,
) -> Result<OdoPreintegrated> {
    let steps = build_steps(odo)?;
    integrate_steps(odo[0].t, steps, intr, extr, noise)
}

pub fn integrate_steps(
    t0: f64,
    steps: Vec<OdoStep>,
    intr: &OdometerIntrinsics,
    extr: &OdoExtrinsic,
    noise: &OdoNoise,
) -> Result<OdoPreintegrated> {
    intr.validate()?;
    let (s_v, s_w) = (intr.s_v, intr.s_w);
    let mut d = OdoDelta { dp: Vec3::zeros(), dr: Mat3::identity() };
    let mut cov = Mat8::zeros();
    let mut j_p = Mat3x8::zeros();
    let mut j_r = Mat3x8::zeros();
    let mut t1 = t0;
    for st in &steps {
        let dt = st.dt;
        t1 += dt;
        let (w, u) = step_rates(st, s_v, s_w, extr);

        // Partial derivatives of w and u w.r.t. [s_v, s_ω, p_bm, θ_bm].
        let mut du = Mat3x8::zeros();
        du.fixed_view_mut::<3, 1>(0, 1).copy_from(&(extr.r_bm * E3 * st.w));
        du.fixed_view_mut::<3, 3>(0, 5).copy_from(&(-extr.r_bm * skew(&(E3 * (1.0 + s_w) * st.w))));
        let mut dw = skew(&extr.p_bm) * du;
        dw.fixed_view_mut::<3, 1>(0, 0).copy_from(&(extr.r_bm * E2 * st.v));
        dw.fixed_view_mut::<3, 3>(0, 2).copy_from(&(-skew(&u)));
        let dth = dw.fixed_view::<3, 3>(0, 5) - extr.r_bm * skew(&(E2 * (1.0 + s_v) * st.v));
        dw.fixed_view_mut::<3, 3>(0, 5).copy_from(&dth);

        let phi = u * dt;
        let e = exp_so3(&phi);
        let r0 = d.dr;
        let r1 = r0 * e;
        let j_r1 = e.transpose() * j_r + right_jacobian(&phi) * dt * du;
        j_p += -0.5 * dt * (r0 * skew(&w) * j_r + r1 * skew(&w) * j_r1) + 0.5 * dt * (r0 + r1) * dw;

        let (f, g) = error_dynamics(&r0, &w, &u, extr, st.v, st.w, s_v, s_w);
        let big_phi = Mat8::identity() + f * dt;
        let q = SMatrix::<f64, 4, 4>::from_diagonal(&nalgebra::Vector4::new(
            (noise.v_sigma * dt).powi(2),
            (noise.w_sigma * dt).powi(2),
            intr.rw_s_v.powi(2) * dt,
            intr.rw_s_w.powi(2) * dt,
        ));
        cov = big_phi * cov * big_phi.transpose() + g * q * g.transpose();
        for i in 0..3 {
            cov[(i, i)] += noise.floor_pos.powi(2) * dt;
            cov[(3 + i, 3 + i)] += noise.floor_rot.powi(2) * dt;
        }
        cov = 0.5 * (cov + cov.transpose());

        d = advance(&d, &w, &u, dt);
        j_r = j_r1;
    }
    Ok(OdoPreintegrated {
        t0,
        t1,
        delta: d,
        s_v_lin: s_v,
        s_w_lin: s_w,
        extr_lin: *extr,
        cov,
        j_p,
        j_r,
        steps,
        intrinsics: *intr,
        noise: *noise,
    })
}

/// Parameter increments of `calib` relative to the linearization point, and
/// the Jacobian of those increments w.r.t. the calibration tangent.
fn param_delta(pre: &OdoPreintegrated, s_v: f64, s_w: f64, calib: &CalibState) -> (Vec8, Mat3) {
    let dth = log_so3(&(pre.extr_lin.r_bm.transpose() * calib.r_bm()));
    let mut d = Vec8::zeros();
    d[0] = s_v - pre.s_v_lin;
    d[1] = s_w - pre.s_w_lin;
    d.fixed_rows_mut::<3>(2).copy_from(&(calib.p_bm - pre.extr_lin.p_bm));
    d.fixed_rows_mut::<3>(5).copy_from(&dth);
    (d, right_jacobian_inv(&dth))
}

/// Residual of the odometer factor with Jacobians w.r.t. the start state,
/// end state (15 each) and the calibration `[s_v, s_ω, p_bm, θ_bm]` (8).
pub struct OdoResidual {
    pub r: Vec6,
    pub j_i: SMatrix<f64, 6, 15>,
    pub j_j: SMatrix<f64, 6, 15>,
    pub j_c: SMatrix<f64, 6, 8>,
}

impl OdoPreintegrated {
    pub fn dt(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Deltas corrected to first order for new parameters.
    pub fn corrected(&self, s_v: f64, s_w: f64, calib: &CalibState) -> OdoDelta {
        let (d, _) = param_delta(self, s_v, s_w, calib);
        OdoDelta { dp: self.delta.dp + self.j_p * d, dr: self.delta.dr * exp_so3(&(self.j_r * d)) }
    }

    pub fn reintegrate(&self, s_v: f64, s_w: f64, calib: &CalibState) -> Result<Self> {
        let intr = OdometerIntrinsics { s_v, s_w, ..self.intrinsics };
        integrate_steps(self.t0, self.steps.clone(), &intr, &OdoExtrinsic::from_calib(calib), &self.noise)
    }

    /// Covariance of `(δp, δθ)`.
    pub fn pose_cov(&self) -> Mat6 {
        self.cov.fixed_view::<6, 6>(0, 0).into_owned()
    }

    /// Residual with scale factors `(s_v, s_ω)` of the start epoch.
    pub fn residual(&self, xi: &NavState, xj: &NavState, s_v: f64, s_w: f64, calib: &CalibState) -> OdoResidual {
        let (d, jdth) = param_delta(self, s_v, s_w, calib);
        let corr = self.j_r * d;
        let dp_hat = self.delta.dp + self.j_p * d;
        let dr_hat = self.delta.dr * exp_so3(&corr);
        let ri = xi.rotation();
        let rj = xj.rotation();
        let rit = ri.transpose();
        let dpw = xj.p - xi.p;
        let r_p = rit * dpw - dp_hat;
        let r_th = log_so3(&(dr_hat.transpose() * rit * rj));
        let mut r = Vec6::zeros();
        r.fixed_rows_mut::<3>(0).copy_from(&r_p);
        r.fixed_rows_mut::<3>(3).copy_from(&r_th);

        let jri = right_jacobian_inv(&r_th);
        let mut j_i = SMatrix::<f64, 6, 15>::zeros();
        let mut j_j = SMatrix::<f64, 6, 15>::zeros();
        j_i.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-rit));
        j_i.fixed_view_mut::<3, 3>(0, 6).copy_from(&skew(&(rit * dpw)));
        j_j.fixed_view_mut::<3, 3>(0, 0).copy_from(&rit);
        j_i.fixed_view_mut::<3, 3>(3, 6).copy_from(&(-jri * rj.transpose() * ri));
        j_j.fixed_view_mut::<3, 3>(3, 6).copy_from(&jri);

        // Chain through the parameter increment; the rotation part of the
        // increment is a log-map of the extrinsic rotation.
        let mut dd = Mat8::identity();
        dd.fixed_view_mut::<3, 3>(5, 5).copy_from(&jdth);
        let mut j_c = SMatrix::<f64, 6, 8>::zeros();
        j_c.fixed_view_mut::<3, 8>(0, 0).copy_from(&(-self.j_p * dd));
        j_c.fixed_view_mut::<3, 8>(3, 0)
            .copy_from(&(-jri * exp_so3(&r_th).transpose() * right_jacobian(&corr) * self.j_r * dd));
        OdoResidual { r, j_i, j_j, j_c }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomath::{quat_boxplus, quat_exp, rot_from_rpy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rv(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
        Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
    }

    fn intr(s_v: f64, s_w: f64) -> OdometerIntrinsics {
        OdometerIntrinsics { s_v, s_w, rw_s_v: 1e-4, rw_s_w: 1e-4 }
    }

    fn odo_const(v: f64, w: f64, t1: f64) -> Vec<OdoSample> {
        (0..=((t1 * 25.0).round() as usize)).map(|i| OdoSample { t: i as f64 * 0.04, v, omega: w }).collect()
    }

    fn identity_extr() -> OdoExtrinsic {
        OdoExtrinsic { r_bm: Mat3::identity(), p_bm: Vec3::zeros() }
    }

    #[test]
    fn projection() {
        let (v, w) = odo_project(2.0, 0.5);
        assert_eq!(v, Vec3::new(0.0, 2.0, 0.0));
        assert_eq!(w, Vec3::new(0.0, 0.0, 0.5));
        let (v, w) = odo_project(0.0, 0.0);
        assert_eq!(v + w, Vec3::zeros());
        let p = projection_matrix();
        assert_eq!(p.rank(1e-12), 2);
        assert_eq!(p[(1, 0)], 1.0);
        assert_eq!(p[(5, 1)], 1.0);
    }

    #[test]
    fn body_rates() {
        let extr = OdoExtrinsic { r_bm: Mat3::identity(), p_bm: Vec3::new(0.5, 0.0, 0.0) };
        let (vb, _) = odo_body_rates(&Vec3::new(0.0, 1.0, 0.0), &Vec3::z(), &extr);
        assert!((vb - Vec3::new(0.0, 0.5, 0.0)).norm() < 1e-15);

        // Component-wise expansion oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let r = exp_so3(&rv(&mut rng, 3.0));
            let p = rv(&mut rng, 1.0);
            let vm = rv(&mut rng, 2.0);
            let wm = rv(&mut rng, 1.0);
            let (vb, wb) = odo_body_rates(&vm, &wm, &OdoExtrinsic { r_bm: r, p_bm: p });
            let w = r * wm;
            let cross = Vec3::new(w.y * p.z - w.z * p.y, w.z * p.x - w.x * p.z, w.x * p.y - w.y * p.x);
            let mut rv_ = Vec3::zeros();
            let mut rw_ = Vec3::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    rv_[i] += r[(i, j)] * vm[j];
                    rw_[i] += r[(i, j)] * wm[j];
                }
            }
            assert!((vb - (rv_ - cross)).norm() < 1e-12);
            assert!((wb - rw_).norm() < 1e-12);
        }
    }

    #[test]
    fn straight_line_and_pure_rotation() {
        let n = OdoNoise::default();
        let p = odo_preintegrate(&odo_const(1.0, 0.0, 1.0), &intr(0.0, 0.0), &identity_extr(), &n)
            .unwrap();
        assert!((p.delta.dp - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        assert!((p.delta.dr - Mat3::identity()).norm() < 1e-12);

        let w = std::f64::consts::FRAC_PI_2;
        let p = odo_preintegrate(&odo_const(0.0, w, 1.0), &intr(0.0, 0.0), &identity_extr(), &n)
            .unwrap();
        assert!((p.delta.dr - rot_from_rpy(0.0, 0.0, w)).abs().max() < 1e-12);
        assert!(p.delta.dp.norm() < 1e-12);
    }

    #[test]
    fn arc_matches_closed_form() {
        // Constant speed and yaw rate with identity extrinsics: a circular arc.
        let (v, w, t) = (1.0, 0.5, 1.0);
        let p = odo_preintegrate(&odo_const(v, w, t), &intr(0.0, 0.0), &identity_extr(), &OdoNoise::default())
            .unwrap();
        let r = v / w;
        let th = w * t;
        let expect = Vec3::new(-r * (1.0 - th.cos()), r * th.sin(), 0.0);
        assert!((p.delta.dp - expect).norm() < 1e-4);
    }

    fn random_inputs(rng: &mut ChaCha8Rng) -> (Vec<OdoSample>, OdoExtrinsic) {
        let odo: Vec<_> = (0..=25)
            .map(|i| OdoSample { t: i as f64 * 0.04, v: 1.0 + rng.random_range(-0.5..0.5), omega: rng.random_range(-0.4..0.4) })
            .collect();
        let extr = OdoExtrinsic { r_bm: exp_so3(&rv(rng, 0.2)), p_bm: rv(rng, 0.5) };
        (odo, extr)
    }

    fn calib_of(extr: &OdoExtrinsic) -> CalibState {
        CalibState { s_v: 0.0, s_w: 0.0, p_bm: extr.p_bm, q_bm: crate::geomath::rot_to_quat(&extr.r_bm), lever: None }
    }

    #[test]
    fn first_order_scale_correction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (odo, extr) = random_inputs(&mut rng);
        let n = OdoNoise::default();
        let base = odo_preintegrate(&odo, &intr(0.0, 0.0), &extr, &n).unwrap();
        let calib = calib_of(&extr);
        let re = base.reintegrate(1e-3, 0.0, &calib).unwrap();
        let corr = base.corrected(1e-3, 0.0, &calib);
        assert!((re.delta.dp - corr.dp).norm() < 1e-5);
    }

    #[test]
    fn covariance_grows_and_stays_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (odo, extr) = random_inputs(&mut rng);
        let n = OdoNoise::default();
        let short = odo_preintegrate(&odo[..13], &intr(0.0, 0.0), &extr, &n).unwrap();
        let long = odo_preintegrate(&odo, &intr(0.0, 0.0), &extr, &n).unwrap();
        assert!(long.cov.trace() > short.cov.trace());
        assert!(long.cov.symmetric_eigen().eigenvalues.min() > 0.0);
    }

    fn random_nav(rng: &mut ChaCha8Rng) -> NavState {
        NavState::random(rng)
    }

    #[test]
    fn residual_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let (odo, extr) = random_inputs(&mut rng);
            let pre = odo_preintegrate(&odo, &intr(0.01, -0.02), &extr, &OdoNoise::default()).unwrap();
            let mut calib = calib_of(&extr);
            calib.p_bm += rv(&mut rng, 0.02);
            calib.q_bm = quat_boxplus(&calib.q_bm, &rv(&mut rng, 0.02));
            let (s_v, s_w) = (0.015, -0.01);
            let xi = random_nav(&mut rng);
            let xj = random_nav(&mut rng);
            let res = pre.residual(&xi, &xj, s_v, s_w, &calib);
            let h = 1e-6;
            for k in 0..38 {
                let eval = |sgn: f64| {
                    let mut e = SVector::<f64, 15>::zeros();
                    let (mut a, mut b, mut c) = (xi.clone(), xj.clone(), calib.clone());
                    let (mut sv, mut sw) = (s_v, s_w);
                    if k < 15 {
                        e[k] = sgn * h;
                        a = a.boxplus(&e);
                    } else if k < 30 {
                        e[k - 15] = sgn * h;
                        b = b.boxplus(&e);
                    } else {
                        match k - 30 {
                            0 => sv += sgn * h,
                            1 => sw += sgn * h,
                            i @ 2..=4 => c.p_bm[i - 2] += sgn * h,
                            i => {
                                let mut d = Vec3::zeros();
                                d[i - 5] = sgn * h;
                                c.q_bm = quat_boxplus(&c.q_bm, &d);
                            }
                        }
                    }
                    pre.residual(&a, &b, sv, sw, &c).r
                };
                let col = (eval(1.0) - eval(-1.0)) / (2.0 * h);
                let a = match k {
                    0..=14 => res.j_i.column(k).into_owned(),
                    15..=29 => res.j_j.column(k - 15).into_owned(),
                    _ => res.j_c.column(k - 30).into_owned(),
                };
                assert!((col - a).norm() / a.norm().max(1e-2) < 1e-5, "column {k}: {col} vs {a}");
            }
        }
    }

    #[test]
    fn residual_scale_and_yaw_geometry() {
        // Straight 1 s at 1 m/s, truth states consistent with s_v = 0.
        let pre = odo_preintegrate(&odo_const(1.0, 0.0, 1.0), &intr(0.0, 0.0), &identity_extr(), &OdoNoise::default())
            .unwrap();
        let xi = NavState::identity(0.0);
        let mut xj = NavState::identity(1.0);
        xj.p = Vec3::new(0.0, 1.0, 0.0);
        let calib = calib_of(&identity_extr());
        assert!(pre.residual(&xi, &xj, 0.0, 0.0, &calib).r.norm() < 1e-12);
        let r = pre.residual(&xi, &xj, 0.01, 0.0, &calib).r;
        assert!((r[1] + 0.01).abs() < 1e-9);
        // Mount yawed left by 3° makes the odometer predict motion to the left.
        let mut c = calib.clone();
        c.q_bm = quat_exp(&Vec3::new(0.0, 0.0, 3f64.to_radians()));
        let r = pre.residual(&xi, &xj, 0.0, 0.0, &c).r;
        assert!((r[0] - 3f64.to_radians().sin()).abs() < 1e-3 && r[0] > 0.0);
    }
}
