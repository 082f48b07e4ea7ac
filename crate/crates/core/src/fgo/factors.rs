//! Factors of the sliding-window graph. Every factor returns a whitened
//! residual and one Jacobian block per key, w.r.t. the right-perturbation
//! tangent of that key.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::state::NavState;
use super::values::{Epoch, Key, Values};
use crate::ambiguity::ar_residual;
use crate::geomath::{log_so3, quat_to_rot, right_jacobian_inv, skew, Mat3, Quat, Vec3, SPEED_OF_LIGHT};
use crate::gnss::{dd_range, DdMeasurement};
use crate::preintegration::{ImuPreintegrated, OdoPreintegrated};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FactorKind {
    Imu,
    Odometer,
    Pseudorange,
    Carrier,
    Doppler,
    Zupt,
    Nhc,
    AmbiguityFix,
    ClockWalk,
    ScaleWalk,
    Prior,
    Marginal,
}

pub trait Factor: Debug + Send + Sync {
    fn kind(&self) -> FactorKind;
    fn keys(&self) -> Vec<Key>;
    /// Whitened residual and Jacobians aligned with [`Factor::keys`].
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>);
    /// Huber threshold on the whitened residual norm.
    fn huber(&self) -> Option<f64> {
        None
    }
    /// Re-integrates preintegrated measurements whose linearization point
    /// has drifted from the current estimate.
    fn refresh(&mut self, _v: &Values) -> Result<()> {
        Ok(())
    }
}

/// Residual and Jacobians after the robust kernel (IRLS form).
#[derive(Debug, Clone)]
pub struct Linearized {
    pub r: DVector<f64>,
    pub jac: Vec<(Key, DMatrix<f64>)>,
    /// Robust cost `ρ(‖r‖)`, equal to `½‖r‖²` inside the Huber threshold.
    pub cost: f64,
    /// IRLS weight applied to `r` and `J` (before the square root).
    pub weight: f64,
}

pub fn huber_cost(s: f64, delta: Option<f64>) -> (f64, f64) {
    match delta {
        Some(d) if s > d => (d * s - 0.5 * d * d, d / s),
        _ => (0.5 * s * s, 1.0),
    }
}

pub fn linearize(f: &dyn Factor, v: &Values) -> Linearized {
    let (mut r, mut jac) = f.evaluate(v);
    let (cost, weight) = huber_cost(r.norm(), f.huber());
    if weight < 1.0 {
        let w = weight.sqrt();
        r *= w;
        for j in &mut jac {
            *j *= w;
        }
    }
    Linearized { r, jac: f.keys().into_iter().zip(jac).collect(), cost, weight }
}

/// Robust cost only.
pub fn cost(f: &dyn Factor, v: &Values) -> f64 {
    let (r, _) = f.evaluate(v);
    huber_cost(r.norm(), f.huber()).0
}

/// Fourth-order central-difference Jacobians, for validating the analytic ones.
pub fn numerical_jacobians(f: &dyn Factor, v: &Values, h: f64) -> Vec<DMatrix<f64>> {
    let (r0, _) = f.evaluate(v);
    let at = |k: &Key, c: usize, s: f64| {
        let mut d = vec![0.0; k.dim()];
        d[c] = s;
        let mut vp = v.clone();
        vp.retract(k, &d);
        f.evaluate(&vp).0
    };
    f.keys()
        .iter()
        .map(|k| {
            let mut j = DMatrix::zeros(r0.len(), k.dim());
            for c in 0..k.dim() {
                let d1 = (at(k, c, h) - at(k, c, -h)) / (2.0 * h);
                let d2 = (at(k, c, 2.0 * h) - at(k, c, -2.0 * h)) / (4.0 * h);
                j.set_column(c, &((d1 * 4.0 - d2) / 3.0));
            }
            j
        })
        .collect()
}

/// Finite-difference step suited to a factor: GNSS residuals involve
/// satellite ranges of ~2e7 m, so a small step drowns in rounding.
pub fn fd_step(kind: FactorKind) -> f64 {
    match kind {
        FactorKind::Pseudorange | FactorKind::Carrier | FactorKind::Doppler => 1e-2,
        _ => 1e-5,
    }
}

/// `‖J_analytic − J_numeric‖_F / ‖J_numeric‖_F` over all blocks.
pub fn jacobian_relative_error(f: &dyn Factor, v: &Values, h: f64) -> f64 {
    let (_, ja) = f.evaluate(v);
    let jn = numerical_jacobians(f, v, h);
    let (mut num, mut den) = (0.0, 0.0);
    for (a, n) in ja.iter().zip(&jn) {
        num += (a - n).norm_squared();
        den += n.norm_squared();
    }
    num.sqrt() / den.sqrt().max(1e-300)
}

/// Upper-triangular square-root information `L⁻¹` for `cov = L Lᵀ`.
pub fn sqrt_information<const N: usize>(cov: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    let l = cov.cholesky().ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?.l();
    l.solve_lower_triangular(&SMatrix::<f64, N, N>::identity())
        .ok_or_else(|| Error::Numerical("singular covariance factor".into()))
}

fn dm<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

fn dv<const R: usize>(m: &SVector<f64, R>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Bias changes beyond which the IMU interval is re-integrated instead of
/// first-order corrected.
const IMU_REINT_BA: f64 = 1e-3;
const IMU_REINT_BG: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct ImuFactor {
    pub i: Epoch,
    pub j: Epoch,
    pub pre: ImuPreintegrated,
    pub sqrt_info: SMatrix<f64, 15, 15>,
}

impl ImuFactor {
    pub fn new(i: Epoch, j: Epoch, pre: ImuPreintegrated) -> Result<Self> {
        let sqrt_info = sqrt_information(&pre.cov)?;
        Ok(Self { i, j, pre, sqrt_info })
    }
}

impl Factor for ImuFactor {
    fn kind(&self) -> FactorKind {
        FactorKind::Imu
    }
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.i), Key::Nav(self.j)]
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let res = self.pre.residual(v.nav(self.i), v.nav(self.j));
        let w = &self.sqrt_info;
        (dv(&(w * res.r)), vec![dm(&(w * res.j_i)), dm(&(w * res.j_j))])
    }
    fn refresh(&mut self, v: &Values) -> Result<()> {
        let x = v.nav(self.i);
        if (x.ba - self.pre.ba_lin).norm() > IMU_REINT_BA || (x.bg - self.pre.bg_lin).norm() > IMU_REINT_BG {
            *self = Self::new(self.i, self.j, self.pre.reintegrate(&x.ba, &x.bg)?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OdoFactor {
    pub i: Epoch,
    pub j: Epoch,
    pub pre: OdoPreintegrated,
    pub sqrt_info: SMatrix<f64, 6, 6>,
}

impl OdoFactor {
    pub fn new(i: Epoch, j: Epoch, pre: OdoPreintegrated) -> Result<Self> {
        let sqrt_info = sqrt_information(&pre.pose_cov())?;
        Ok(Self { i, j, pre, sqrt_info })
    }
}

impl Factor for OdoFactor {
    fn kind(&self) -> FactorKind {
        FactorKind::Odometer
    }
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.i), Key::Nav(self.j), Key::Scale(self.i), Key::Extrinsic]
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let [s_v, s_w] = v.scale(self.i);
        let res = self.pre.residual(v.nav(self.i), v.nav(self.j), s_v, s_w, &v.calib(self.i));
        let w = &self.sqrt_info;
        let jc = w * res.j_c;
        (
            dv(&(w * res.r)),
            vec![
                dm(&(w * res.j_i)),
                dm(&(w * res.j_j)),
                dm(&jc.fixed_columns::<2>(0).into_owned()),
                dm(&jc.fixed_columns::<6>(2).into_owned()),
            ],
        )
    }
    fn refresh(&mut self, v: &Values) -> Result<()> {
        let [s_v, s_w] = v.scale(self.i);
        let c = v.calib(self.i);
        let p = &self.pre;
        let moved = (s_v - p.s_v_lin).abs()
            + (s_w - p.s_w_lin).abs()
            + (c.p_bm - p.extr_lin.p_bm).norm()
            + (c.r_bm() - p.extr_lin.r_bm).norm();
        if moved > 1e-9 {
            *self = Self::new(self.i, self.j, p.reintegrate(s_v, s_w, &c)?)?;
        }
        Ok(())
    }
}

/// Local ENU frame anchored in ECEF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin_ecef: Vec3,
    /// ENU-to-ECEF rotation.
    pub r_en: Mat3,
}

/// Antenna position (absolute ECEF) with its Jacobians w.r.t. `p`, `θ` and the lever arm.
struct Antenna {
    a: Vec3,
    d_p: Mat3,
    d_th: Mat3,
    d_l: Mat3,
}

fn antenna(nav: &NavState, lever: &Vec3, f: &Frame) -> Antenna {
    let r = nav.rotation();
    Antenna {
        a: f.origin_ecef + f.r_en * (nav.p + r * lever),
        d_p: f.r_en,
        d_th: -f.r_en * r * skew(lever),
        d_l: f.r_en * r,
    }
}

fn nav_block(rows: usize, cols: &[(usize, DMatrix<f64>)]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(rows, 15);
    for (c, m) in cols {
        j.view_mut((0, *c), (rows, 3)).copy_from(m);
    }
    j
}

/// Row Jacobian of `−dd_range` w.r.t. the rover antenna position.
fn dd_gradient(dd: &DdMeasurement, a: &Vec3) -> SMatrix<f64, 1, 3> {
    let u_j = (dd.sat_pos - a).normalize();
    let u_i = (dd.ref_pos - a).normalize();
    (u_j - u_i).transpose()
}

#[derive(Debug, Clone)]
pub struct PseudorangeFactor {
    pub epoch: Epoch,
    pub dd: DdMeasurement,
    pub base: Vec3,
    pub frame: Frame,
    pub huber: Option<f64>,
}

impl Factor for PseudorangeFactor {
    fn kind(&self) -> FactorKind {
        FactorKind::Pseudorange
    }
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.epoch), Key::Lever]
    }
    fn huber(&self) -> Option<f64> {
        self.huber
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let ant = antenna(v.nav(self.epoch), &v.lever, &self.frame);
        let w = 1.0 / self.dd.var_pseudorange.sqrt();
        let obs = self.dd.pseudorange.unwrap_or(f64::NAN);
        let r = (obs - dd_range(&self.dd, &ant.a, &self.base)) * w;
        let g = dd_gradient(&self.dd, &ant.a) * w;
        let jn = nav_block(1, &[(0, dm(&(g * ant.d_p))), (6, dm(&(g * ant.d_th)))]);
        (DVector::from_element(1, r), vec![jn, dm(&(g * ant.d_l))])
    }
}

#[derive(Debug, Clone)]
pub struct CarrierFactor {
    pub epoch: Epoch,
    pub dd: DdMeasurement,
    pub base: Vec3,
    pub frame: Frame,
    pub amb_ref: Key,
    pub amb_sat: Key,
    pub huber: Option<f64>,
}

impl Factor for CarrierFactor {
    fn kind(&self) -> FactorKind {
        FactorKind::Carrier
    }
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.epoch), Key::Lever, self.amb_ref, self.amb_sat]
    }
    fn huber(&self) -> Option<f64> {
        self.huber
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let ant = antenna(v.nav(self.epoch), &v.lever, &self.frame);
        let w = 1.0 / self.dd.var_carrier.sqrt();
        let lam = self.dd.wavelength;
        let obs = self.dd.carrier.unwrap_or(f64::NAN);
        let n = v.amb(&self.amb_sat) - v.amb(&self.amb_ref);
        let r = (obs - dd_range(&self.dd, &ant.a, &self.base) - lam * n) * w;
        let g = dd_gradient(&self.dd, &ant.a) * w;
        let jn = nav_block(1, &[(0, dm(&(g * ant.d_p))), (6, dm(&(g * ant.d_th)))]);
        (
            DVector::from_element(1, r),
            vec![
                jn,
                dm(&(g * ant.d_l)),
                DMatrix::from_element(1, 1, lam * w),
                DMatrix::from_element(1, 1, -lam * w),
            ],
        )
    }
}

/// Undifferenced rover Doppler; the clock key holds the receiver drift in m/s.
#[derive(Debug, Clone)]
pub struct DopplerFactor {
    pub epoch: Epoch,
    pub sat_pos: Vec3,
    pub sat_vel: Vec3,
    pub sat_drift: f64,
    /// Observed `λD` (m/s).
    pub range_rate: f64,
    pub sigma: f64,
    /// Raw gyro at the epoch (rad/s).
    pub gyro: Vec3,
    pub frame: Frame,
    pub huber: Option<f64>,
}

impl Factor for DopplerFactor {
    fn kind(&self) -> FactorKind {
        FactorKind::Doppler
    }
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.epoch), Key::Lever, Key::Clock(self.epoch)]
    }
    fn huber(&self) -> Option<f64> {
        self.huber
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let nav = v.nav(self.epoch);
        let l = v.lever;
        let rot = nav.rotation();
        let wb = self.gyro - nav.bg;
        let c = wb.cross(&l);
        let ant = antenna(nav, &l, &self.frame);
        let va = self.frame.r_en * (nav.v + rot * c);
        let d = self.sat_pos - ant.a;
        let rho = d.norm();
        let u = d / rho;
        let wrel = self.sat_vel - va;
        let pred = u.dot(&wrel) + v.clock[&self.epoch] - SPEED_OF_LIGHT * self.sat_drift;
        let s = 1.0 / self.sigma;
        let r = (self.range_rate - pred) * s;

        let g_a = ((wrel - u * u.dot(&wrel)) / rho).transpose() * s;
        let g_v = u.transpose() * s;
        let d_va_th = -self.frame.r_en * rot * skew(&c);
        let d_va_l = self.frame.r_en * rot * skew(&wb);
        let d_va_bg = self.frame.r_en * rot * skew(&l);
        let jn = nav_block(
            1,
            &[
                (0, dm(&(g_a * ant.d_p))),
                (3, dm(&(g_v * self.frame.r_en))),
                (6, dm(&(g_a * ant.d_th + g_v * d_va_th))),
                (12, dm(&(g_v * d_va_bg))),
            ],
        );
        let jl = g_a * ant.d_l + g_v * d_va_l;
        (DVector::from_element(1, r), vec![jn, dm(&jl), DMatrix::from_element(1, 1, -s)])
    }
}

#[derive(Debug, Clone)]
pub struct ZuptFactor {
    pub epoch: Epoch,
    pub sigma: f64,
}

impl Factor for ZuptFactor {
    fn kind(&self) -> FactorKind {
        FactorKind::Zupt
    }
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.epoch)]
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let s = 1.0 / self.sigma;
        let mut j = DMatrix::zeros(3, 15);
        j.view_mut((0, 3), (3, 3)).fill_with_identity();
        j *= s;
        (dv(&(v.nav(self.epoch).v * s)), vec![j])
    }
}

/// Lateral and vertical odometer-frame velocity, including the lever term.
#[derive(Debug, Clone)]
pub struct NhcFactor {
    pub epoch: Epoch,
    pub gyro: Vec3,
    pub sigma: f64,
}

impl Factor for NhcFactor {
    fn kind(&self) -> FactorKind {
        FactorKind::Nhc
    }
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.epoch), Key::Extrinsic]
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let nav = v.nav(self.epoch);
        let rwb = nav.rotation();
        let rbm = quat_to_rot(&v.q_bm);
        let wb = self.gyro - nav.bg;
        let vb = rwb.transpose() * nav.v;
        let m = rbm.transpose() * (vb + wb.cross(&v.p_bm));
        let s = 1.0 / self.sigma;
        let sel = |x: &Mat3| {
            let mut o = DMatrix::zeros(2, 3);
            o.row_mut(0).copy_from(&x.row(0));
            o.row_mut(1).copy_from(&x.row(2));
            o * s
        };
        let jn = nav_block(
            2,
            &[
                (3, sel(&(rbm.transpose() * rwb.transpose()))),
                (6, sel(&(rbm.transpose() * skew(&vb)))),
                (12, sel(&(rbm.transpose() * skew(&v.p_bm)))),
            ],
        );
        let mut je = DMatrix::zeros(2, 6);
        je.view_mut((0, 0), (2, 3)).copy_from(&sel(&(rbm.transpose() * skew(&wb))));
        je.view_mut((0, 3), (2, 3)).copy_from(&sel(&skew(&m)));
        (DVector::from_vec(vec![m.x * s, m.z * s]), vec![jn, je])
    }
}

#[derive(Debug, Clone)]
pub struct AmbiguityFixFactor {
    pub amb_ref: Key,
    pub amb_sat: Key,
    pub fixed: i64,
}

impl Factor for AmbiguityFixFactor {
    fn kind(&self) -> FactorKind {
        FactorKind::AmbiguityFix
    }
    fn keys(&self) -> Vec<Key> {
        vec![self.amb_ref, self.amb_sat]
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let (r, [ji, jj]) = ar_residual(self.fixed, v.amb(&self.amb_ref), v.amb(&self.amb_sat));
        (DVector::from_element(1, r), vec![DMatrix::from_element(1, 1, ji), DMatrix::from_element(1, 1, jj)])
    }
}

/// Random walk between two consecutive values of a vector variable.
#[derive(Debug, Clone)]
pub struct RandomWalkFactor {
    pub from: Key,
    pub to: Key,
    pub sigma: Vec<f64>,
}

impl Factor for RandomWalkFactor {
    fn kind(&self) -> FactorKind {
        match self.from {
            Key::Clock(_) => FactorKind::ClockWalk,
            _ => FactorKind::ScaleWalk,
        }
    }
    fn keys(&self) -> Vec<Key> {
        vec![self.from, self.to]
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let a = vector_value(v, &self.from);
        let b = vector_value(v, &self.to);
        let n = self.sigma.len();
        let r = DVector::from_fn(n, |i, _| (b[i] - a[i]) / self.sigma[i]);
        let w = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| 1.0 / self.sigma[i]));
        (r, vec![-w.clone(), w])
    }
}

/// Values of the Euclidean variables.
pub fn vector_value(v: &Values, k: &Key) -> Vec<f64> {
    match k {
        Key::Lever => v.lever.iter().copied().collect(),
        Key::Clock(e) => vec![v.clock[e]],
        Key::Scale(e) => v.scale(*e).to_vec(),
        Key::Amb(..) => vec![v.amb(k)],
        Key::Extrinsic | Key::Nav(_) => panic!("{k:?} is not Euclidean"),
    }
}

/// Diagonal Gaussian prior on a Euclidean variable.
#[derive(Debug, Clone)]
pub struct VectorPrior {
    pub key: Key,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Factor for VectorPrior {
    fn kind(&self) -> FactorKind {
        FactorKind::Prior
    }
    fn keys(&self) -> Vec<Key> {
        vec![self.key]
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let x = vector_value(v, &self.key);
        let n = x.len();
        let r = DVector::from_fn(n, |i, _| (x[i] - self.mean[i]) / self.sigma[i]);
        (r, vec![DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| 1.0 / self.sigma[i]))])
    }
}

/// Diagonal prior on a navigation state: `[p, v, θ, b_a, b_g]`.
#[derive(Debug, Clone)]
pub struct NavPrior {
    pub epoch: Epoch,
    pub mean: NavState,
    pub sigma: SVector<f64, 15>,
}

impl Factor for NavPrior {
    fn kind(&self) -> FactorKind {
        FactorKind::Prior
    }
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.epoch)]
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let x = v.nav(self.epoch);
        let m = &self.mean;
        let dth = log_so3(&(m.rotation().transpose() * x.rotation()));
        let mut r = SVector::<f64, 15>::zeros();
        r.fixed_rows_mut::<3>(0).copy_from(&(x.p - m.p));
        r.fixed_rows_mut::<3>(3).copy_from(&(x.v - m.v));
        r.fixed_rows_mut::<3>(6).copy_from(&dth);
        r.fixed_rows_mut::<3>(9).copy_from(&(x.ba - m.ba));
        r.fixed_rows_mut::<3>(12).copy_from(&(x.bg - m.bg));
        let mut j = SMatrix::<f64, 15, 15>::identity();
        j.fixed_view_mut::<3, 3>(6, 6).copy_from(&right_jacobian_inv(&dth));
        let w = SMatrix::<f64, 15, 15>::from_diagonal(&self.sigma.map(|s| 1.0 / s));
        (dv(&(w * r)), vec![dm(&(w * j))])
    }
}

/// Diagonal prior on `[p_bm, θ_bm]`.
#[derive(Debug, Clone)]
pub struct ExtrinsicPrior {
    pub p_bm: Vec3,
    pub q_bm: Quat,
    pub sigma_p: f64,
    pub sigma_rot: f64,
}

impl Factor for ExtrinsicPrior {
    fn kind(&self) -> FactorKind {
        FactorKind::Prior
    }
    fn keys(&self) -> Vec<Key> {
        vec![Key::Extrinsic]
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let dth = log_so3(&(quat_to_rot(&self.q_bm).transpose() * quat_to_rot(&v.q_bm)));
        let dp = v.p_bm - self.p_bm;
        let (a, b) = (1.0 / self.sigma_p, 1.0 / self.sigma_rot);
        let r = DVector::from_vec(vec![dp.x * a, dp.y * a, dp.z * a, dth.x * b, dth.y * b, dth.z * b]);
        let mut j = DMatrix::zeros(6, 6);
        j.view_mut((0, 0), (3, 3)).fill_with_identity();
        j.view_mut((0, 0), (3, 3)).scale_mut(a);
        j.view_mut((3, 3), (3, 3)).copy_from(&(right_jacobian_inv(&dth) * b));
        (r, vec![j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_downweights_large_residuals() {
        let (c, w) = huber_cost(1.0, Some(1.345));
        assert_eq!((c, w), (0.5, 1.0));
        let (c, w) = huber_cost(10.0, Some(1.345));
        assert!((c - (13.45 - 0.5 * 1.345 * 1.345)).abs() < 1e-12);
        assert!((w - 0.1345).abs() < 1e-12);
    }
}
