//! Self-checks against independent oracles: finite-difference Jacobians,
//! exact double differences on synthetic epochs, and exhaustive integer
//! search. Used by the unit tests and the acceptance suite.

use nalgebra::{DMatrix, DVector, SVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ambiguity::{ils_fix, FloatAmbiguitySet};
use crate::fgo::factors::{
    fd_step, jacobian_relative_error, AmbiguityFixFactor, CarrierFactor, DopplerFactor, ExtrinsicPrior, Factor,
    FactorKind, Frame, ImuFactor, NavPrior, NhcFactor, OdoFactor, PseudorangeFactor, RandomWalkFactor, VectorPrior,
    ZuptFactor,
};
use crate::fgo::state::{CalibState, NavState};
use crate::fgo::values::{Key, Values};
use crate::geomath::{exp_so3, log_so3, quat_boxplus, quat_exp, rot_to_quat, GeodeticOrigin, Mat3, Vec3, GRAVITY, SPEED_OF_LIGHT};
use crate::gnss::{dd_range, form_double_differences, wavelength, DdMeasurement, GnssNoise, GnssRawMeasurement, SatId};
use crate::preintegration::imu::{step_jacobians, ImuDelta};
use crate::preintegration::odo::{advance, error_dynamics, step_rates, OdoDelta, OdoStep};
use crate::preintegration::{
    imu_preintegrate, odo_preintegrate, ImuNoise, ImuSample, OdoExtrinsic, OdoNoise, OdoSample, OdometerIntrinsics,
};

pub fn rv(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

/// `‖a − n‖ / max(‖n‖, floor)`.
fn rel(a: &DVector<f64>, n: &DVector<f64>, floor: f64) -> f64 {
    (a - n).norm() / n.norm().max(floor)
}

fn dv<const N: usize>(v: SVector<f64, N>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

// ---------------------------------------------------------------- GNSS

/// Worst double-difference errors over synthetic noiseless epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdCheck {
    /// max |P_DD − ρ_DD| (m)
    pub code: f64,
    /// max |(L_DD − ρ_DD)/λ − N_DD| (cycles)
    pub cycles: f64,
    pub measurements: usize,
}

/// Random short-baseline epochs with receiver and satellite clock offsets of
/// up to `clock_max` seconds and random integer ambiguities.
pub fn dd_exactness(rng: &mut ChaCha8Rng, epochs: usize, clock_max: f64) -> DdCheck {
    let origin = GeodeticOrigin::new(rng.random_range(-1.2..1.2), rng.random_range(-3.0..3.0), 50.0).unwrap();
    let base = origin.to_ecef();
    let up = origin.ecef_enu_rotation().transpose().column(2).into_owned();
    let noise = GnssNoise::default();
    let mut out = DdCheck { code: 0.0, cycles: 0.0, measurements: 0 };
    for _ in 0..epochs {
        let rover = base + origin.ecef_enu_rotation().transpose() * rv(rng, 2000.0);
        let (dt_rover, dt_base) = (rng.random_range(-clock_max..clock_max), rng.random_range(-clock_max..clock_max));
        let n_sats = rng.random_range(4..12);
        let mut r_obs = Vec::new();
        let mut b_obs = Vec::new();
        let mut ints = std::collections::BTreeMap::new();
        for prn in 1..=n_sats {
            let dir = (up * 1.2 + rv(rng, 1.0)).normalize();
            let sat_pos = base + dir * rng.random_range(2.0e7..2.6e7);
            let dt_sat = rng.random_range(-clock_max..clock_max);
            let el = rng.random_range(0.2..1.5);
            for band in [1u8, 2] {
                let lambda = wavelength('G', band).unwrap();
                let (n_r, n_b): (i64, i64) = (rng.random_range(-1_000_000..1_000_000), rng.random_range(-1_000_000..1_000_000));
                ints.insert((prn, band), n_r - n_b);
                let mk = |pos: &Vec3, dt_rx: f64, n: i64| {
                    let rho = (sat_pos - pos).norm();
                    let clk = SPEED_OF_LIGHT * (dt_rx - dt_sat);
                    GnssRawMeasurement {
                        t: 0.0,
                        sat: SatId::new('G', prn),
                        band,
                        wavelength: lambda,
                        pseudorange: rho + clk,
                        carrier: rho + clk + lambda * n as f64,
                        doppler: 0.0,
                        sat_pos,
                        sat_vel: Vec3::zeros(),
                        sat_clock: dt_sat,
                        sat_clock_drift: 0.0,
                        elevation: el,
                        azimuth: 0.0,
                        lli: false,
                    }
                };
                r_obs.push(mk(&rover, dt_rover, n_r));
                b_obs.push(mk(&base, dt_base, n_b));
            }
        }
        let ep = form_double_differences(&r_obs, &b_obs, &rover, &noise, &[]).unwrap();
        for dd in &ep.measurements {
            let rho = dd_range(dd, &rover, &base);
            let n = ints[&(dd.sat.prn, dd.band)] - ints[&(dd.reference.prn, dd.band)];
            out.code = out.code.max((dd.pseudorange.unwrap() - rho).abs());
            out.cycles = out.cycles.max(((dd.carrier.unwrap() - rho) / dd.wavelength - n as f64).abs());
            out.measurements += 1;
        }
    }
    out
}

// ---------------------------------------------------------------- ambiguity

/// Cost of an integer candidate in the original space.
pub fn ils_cost(a: &DVector<f64>, qinv: &DMatrix<f64>, x: &[i64]) -> f64 {
    let d = DVector::from_iterator(a.len(), x.iter().zip(a.iter()).map(|(&xi, &ai)| xi as f64 - ai));
    (d.transpose() * qinv * &d)[(0, 0)]
}

/// Exhaustive search over a box that provably contains the two best
/// candidates; `None` when the box is too large to enumerate.
pub fn exhaustive_search(a: &DVector<f64>, q: &DMatrix<f64>) -> Option<(Vec<i64>, f64, f64)> {
    let n = a.len();
    let qinv = q.clone().try_inverse()?;
    // Rounding plus each single-coordinate second-nearest neighbour:
    // n + 1 distinct integers, so their second-smallest cost bounds q₂.
    let r: Vec<i64> = a.iter().map(|x| x.round() as i64).collect();
    let mut costs = vec![ils_cost(a, &qinv, &r)];
    for i in 0..n {
        let mut c = r.clone();
        c[i] += if a[i] > r[i] as f64 { 1 } else { -1 };
        costs.push(ils_cost(a, &qinv, &c));
    }
    costs.sort_by(f64::total_cmp);
    let chi2 = costs[1] * (1.0 + 1e-9) + 1e-12;
    let lo: Vec<i64> = (0..n).map(|i| (a[i] - (chi2 * q[(i, i)]).sqrt()).floor() as i64).collect();
    let hi: Vec<i64> = (0..n).map(|i| (a[i] + (chi2 * q[(i, i)]).sqrt()).ceil() as i64).collect();
    let count: f64 = (0..n).map(|i| (hi[i] - lo[i] + 1) as f64).product();
    if count > 2e5 {
        return None;
    }
    let mut x = lo.clone();
    let mut best = (Vec::new(), f64::INFINITY);
    let mut second = f64::INFINITY;
    loop {
        let c = ils_cost(a, &qinv, &x);
        if c < best.1 {
            second = best.1;
            best = (x.clone(), c);
        } else if c < second {
            second = c;
        }
        let mut i = 0;
        loop {
            if i == n {
                return Some((best.0, best.1, second));
            }
            x[i] += 1;
            if x[i] <= hi[i] {
                break;
            }
            x[i] = lo[i];
            i += 1;
        }
    }
}

/// Random correlated SPD matrix of dimension `n`.
pub fn random_q(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.01..0.3)));
    &a * d * a.transpose() + DMatrix::identity(n, n) * 1e-3
}

pub fn float_set(a: &[f64], q: DMatrix<f64>) -> FloatAmbiguitySet {
    let n = a.len();
    let s = SatId::new('G', 1);
    FloatAmbiguitySet { a: DVector::from_column_slice(a), q, pairs: vec![(s, s, 1); n], sd_index: vec![(0, 0); n] }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IlsCheck {
    pub compared: usize,
    pub mismatches: usize,
}

/// Compares the integer search with exhaustive enumeration on `problems`
/// random problems of dimension 1..=`max_dim` (best candidate and both costs).
pub fn ils_vs_exhaustive(rng: &mut ChaCha8Rng, problems: usize, max_dim: usize) -> IlsCheck {
    let mut out = IlsCheck { compared: 0, mismatches: 0 };
    while out.compared < problems {
        let n = rng.random_range(1..=max_dim);
        let q = random_q(rng, n);
        let a = DVector::from_fn(n, |_, _| rng.random_range(-20.0..20.0));
        let Some((best, q1, q2)) = exhaustive_search(&a, &q) else { continue };
        out.compared += 1;
        let ok = ils_fix(&float_set(a.as_slice(), q), 3.0).is_ok_and(|f| {
            f.best == best && (f.q1 - q1).abs() < 1e-8 * q1.max(1.0) && (f.q2 - q2).abs() < 1e-8 * q2.max(1.0)
        });
        out.mismatches += usize::from(!ok);
    }
    out
}

// ---------------------------------------------------------------- odometer

/// One integrator step of the nonlinear odometer model (either sign of `h`).
fn odo_flow(p: &Vec3, r: &Mat3, s_v: f64, s_w: f64, v: f64, w: f64, extr: &OdoExtrinsic, h: f64) -> (Vec3, Mat3) {
    let st = OdoStep { dt: h, v, w };
    let (wv, u) = step_rates(&st, s_v, s_w, extr);
    let d = advance(&OdoDelta { dp: *p, dr: *r }, &wv, &u, h);
    (d.dp, d.dr)
}

/// Worst column error of the continuous odometer error dynamics `F`, `G`
/// against central differences of the nonlinear flow, over `trials` states.
pub fn odo_error_dynamics(rng: &mut ChaCha8Rng, trials: usize) -> f64 {
    type Vec8 = SVector<f64, 8>;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let p0 = rv(rng, 2.0);
        let r0 = exp_so3(&rv(rng, 3.0));
        let extr = OdoExtrinsic { r_bm: exp_so3(&rv(rng, 0.2)), p_bm: rv(rng, 0.5) };
        let (v, w) = (rng.random_range(0.2..2.0), rng.random_range(-0.5..0.5));
        let (s_v, s_w) = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let (wv, u) = step_rates(&OdoStep { dt: 0.0, v, w }, s_v, s_w, &extr);
        let (f, g) = error_dynamics(&r0, &wv, &u, &extr, v, w, s_v, s_w);

        // Error rate for an initial error e and input perturbation n.
        let rate = |e: &Vec8, n: &SVector<f64, 4>| -> Vec8 {
            let h = 1e-4;
            let pert = |hh: f64| {
                let p = p0 + e.fixed_rows::<3>(0);
                let r = r0 * exp_so3(&e.fixed_rows::<3>(3).into_owned());
                let (pp, rp) = odo_flow(&p, &r, s_v + e[6] + n[2] * hh, s_w + e[7] + n[3] * hh, v + n[0], w + n[1], &extr, hh);
                let (pn, rn) = odo_flow(&p0, &r0, s_v, s_w, v, w, &extr, hh);
                let mut out = Vec8::zeros();
                out.fixed_rows_mut::<3>(0).copy_from(&(pp - pn));
                out.fixed_rows_mut::<3>(3).copy_from(&log_so3(&(rn.transpose() * rp)));
                out[6] = e[6] + n[2] * hh;
                out[7] = e[7] + n[3] * hh;
                out
            };
            (pert(h) - pert(-h)) / (2.0 * h)
        };
        let eps = 1e-5;
        for k in 0..8 {
            let mut e = Vec8::zeros();
            e[k] = eps;
            let col = (rate(&e, &SVector::zeros()) - rate(&-e, &SVector::zeros())) / (2.0 * eps);
            worst = worst.max(rel(&dv(f.column(k).into_owned()), &dv(col), 1e-2));
        }
        for k in 0..4 {
            let mut n = SVector::<f64, 4>::zeros();
            n[k] = eps;
            let col = (rate(&Vec8::zeros(), &n) - rate(&Vec8::zeros(), &-n)) / (2.0 * eps);
            worst = worst.max(rel(&dv(g.column(k).into_owned()), &dv(col), 1e-2));
        }
    }
    worst
}

pub fn random_odo(rng: &mut ChaCha8Rng) -> (Vec<OdoSample>, OdoExtrinsic) {
    let odo: Vec<_> = (0..=25)
        .map(|i| OdoSample { t: i as f64 * 0.04, v: 1.0 + rng.random_range(-0.5..0.5), omega: rng.random_range(-0.4..0.4) })
        .collect();
    let extr = OdoExtrinsic { r_bm: exp_so3(&rv(rng, 0.2)), p_bm: rv(rng, 0.5) };
    (odo, extr)
}

/// Worst error of the preintegrated odometer sensitivities to
/// `(s_v, s_ω, p_bm, θ_bm)` against re-integration.
pub fn odo_parameter_jacobians(rng: &mut ChaCha8Rng, trials: usize) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (odo, extr) = random_odo(rng);
        let (s_v, s_w) = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let intr = OdometerIntrinsics { s_v, s_w, rw_s_v: 1e-4, rw_s_w: 1e-4 };
        let base = odo_preintegrate(&odo, &intr, &extr, &OdoNoise::default()).unwrap();
        let calib = CalibState { s_v: 0.0, s_w: 0.0, p_bm: extr.p_bm, q_bm: rot_to_quat(&extr.r_bm), lever: None };
        let h = 1e-6;
        for k in 0..8 {
            let run = |sgn: f64| {
                let mut c = calib.clone();
                let (mut sv, mut sw) = (s_v, s_w);
                match k {
                    0 => sv += sgn * h,
                    1 => sw += sgn * h,
                    2..=4 => c.p_bm[k - 2] += sgn * h,
                    _ => {
                        let mut d = Vec3::zeros();
                        d[k - 5] = sgn * h;
                        c.q_bm = quat_boxplus(&c.q_bm, &d);
                    }
                }
                base.reintegrate(sv, sw, &c).unwrap().delta
            };
            let (a, b) = (run(1.0), run(-1.0));
            let fd_p = (a.dp - b.dp) / (2.0 * h);
            let fd_r = log_so3(&(b.dr.transpose() * a.dr)) / (2.0 * h);
            worst = worst.max(rel(&dv(base.j_p.column(k).into_owned()), &dv(fd_p), 1e-3));
            worst = worst.max(rel(&dv(base.j_r.column(k).into_owned()), &dv(fd_r), 1e-3));
        }
    }
    worst
}

// ---------------------------------------------------------------- IMU

pub fn random_imu(rng: &mut ChaCha8Rng, n: usize, dt: f64) -> Vec<ImuSample> {
    (0..n)
        .map(|i| ImuSample { t: i as f64 * dt, accel: rv(rng, 2.0) + Vec3::new(0.0, 0.0, GRAVITY), gyro: rv(rng, 0.5) })
        .collect()
}

fn imu_noise() -> ImuNoise {
    ImuNoise { accel_sigma: 0.02, gyro_sigma: 0.003, accel_bias_rw: 1e-3, gyro_bias_rw: 1e-4 }
}

fn delta_diff(a: &ImuDelta, b: &ImuDelta) -> DVector<f64> {
    let mut v = DVector::zeros(9);
    v.rows_mut(0, 3).copy_from(&(a.dp - b.dp));
    v.rows_mut(3, 3).copy_from(&(a.dv - b.dv));
    v.rows_mut(6, 3).copy_from(&log_so3(&(b.dr.transpose() * a.dr)));
    v
}

/// Worst column error of the discrete IMU step transition against central
/// differences, over `trials` random deltas, samples and biases.
pub fn imu_step_jacobians(rng: &mut ChaCha8Rng, trials: usize) -> f64 {
    type Vec15 = SVector<f64, 15>;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let s = random_imu(rng, 2, 0.01);
        let d = ImuDelta { dp: rv(rng, 1.0), dv: rv(rng, 1.0), dr: exp_so3(&rv(rng, 2.0)) };
        let (ba, bg) = (rv(rng, 0.1), rv(rng, 0.05));
        let (f, _) = step_jacobians(&d, &s[0], &s[1], &ba, &bg);
        let nominal = d.step(&s[0], &s[1], &ba, &bg);
        let h = 1e-6;
        for k in 0..15 {
            let mut e = Vec15::zeros();
            e[k] = h;
            let run = |e: &Vec15| {
                let p = ImuDelta {
                    dp: d.dp + e.fixed_rows::<3>(0),
                    dv: d.dv + e.fixed_rows::<3>(3),
                    dr: d.dr * exp_so3(&e.fixed_rows::<3>(6).into_owned()),
                };
                p.step(&s[0], &s[1], &(ba + e.fixed_rows::<3>(9)), &(bg + e.fixed_rows::<3>(12)))
            };
            let col = (delta_diff(&run(&e), &nominal) - delta_diff(&run(&-e), &nominal)) / (2.0 * h);
            let analytic = DVector::from_column_slice(f.fixed_view::<9, 1>(0, k).into_owned().as_slice());
            worst = worst.max(rel(&analytic, &col, 1e-3));
        }
    }
    worst
}

/// Worst error of the preintegrated bias Jacobians against re-integration.
pub fn imu_bias_jacobians(rng: &mut ChaCha8Rng, trials: usize) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let s = random_imu(rng, 51, 0.01);
        let (ba, bg) = (rv(rng, 0.1), rv(rng, 0.02));
        let p = imu_preintegrate(&s, &ba, &bg, &imu_noise()).unwrap();
        let h = 1e-6;
        for k in 0..6 {
            let mut db = SVector::<f64, 6>::zeros();
            db[k] = h;
            let run = |sgn: f64| {
                let ba2 = ba + sgn * db.fixed_rows::<3>(0);
                let bg2 = bg + sgn * db.fixed_rows::<3>(3);
                imu_preintegrate(&s, &ba2, &bg2, &imu_noise()).unwrap().delta
            };
            let col = (delta_diff(&run(1.0), &p.delta) - delta_diff(&run(-1.0), &p.delta)) / (2.0 * h);
            let analytic = DVector::from_column_slice(p.phi.fixed_view::<9, 1>(0, 9 + k).into_owned().as_slice());
            worst = worst.max(rel(&analytic, &col, 1e-3));
        }
    }
    worst
}

// ---------------------------------------------------------------- factors

pub fn amb_keys() -> (Key, Key) {
    (Key::Amb(SatId::new('G', 1), 1, 0), Key::Amb(SatId::new('G', 2), 1, 0))
}

/// Two random navigation epochs with clocks, scales, calibration, lever arm
/// and a pair of ambiguities.
pub fn random_values(rng: &mut ChaCha8Rng) -> Values {
    let mut v = Values::new(rv(rng, 0.5), quat_exp(&rv(rng, 0.1)), rv(rng, 1.0));
    for e in 0..2 {
        let mut x = NavState::random(rng);
        x.t = e as f64;
        v.nav.insert(e, x);
        v.clock.insert(e, rng.random_range(-100.0..100.0));
        v.scale.insert(e, [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)]);
    }
    let (a, b) = amb_keys();
    for k in [a, b] {
        if let Key::Amb(s, band, arc) = k {
            v.amb.insert((s, band, arc), rng.random_range(-1e3..1e3));
        }
    }
    v
}

pub fn test_frame() -> Frame {
    let o = GeodeticOrigin::new(0.39, 1.99, 5.0).unwrap();
    Frame { origin_ecef: o.to_ecef(), r_en: o.ecef_enu_rotation() }
}

pub fn random_dd(rng: &mut ChaCha8Rng, f: &Frame) -> (DdMeasurement, Vec3) {
    let up = f.r_en.column(2).into_owned();
    let sat = |rng: &mut ChaCha8Rng| f.origin_ecef + (up + rv(rng, 0.7)).normalize() * 2.2e7;
    let (s_i, s_j) = (sat(rng), sat(rng));
    let dd = DdMeasurement {
        t: 0.0,
        reference: SatId::new('G', 1),
        sat: SatId::new('G', 2),
        band: 1,
        pseudorange: Some(rng.random_range(-50.0..50.0)),
        carrier: Some(rng.random_range(-50.0..50.0)),
        wavelength: 0.19,
        var_pseudorange: 0.36,
        var_carrier: 3.6e-5,
        los_reference: Vec3::z(),
        los_sat: Vec3::z(),
        ref_pos: s_i,
        sat_pos: s_j,
        elevation: 0.8,
    };
    (dd, f.origin_ecef + f.r_en * Vec3::new(300.0, 200.0, 0.0))
}

/// One factor of every kind, connected to the keys of [`random_values`].
pub fn all_factors(rng: &mut ChaCha8Rng, v: &Values) -> Vec<Box<dyn Factor>> {
    let f = test_frame();
    let a = rv(rng, 2.0) + Vec3::new(0.0, 0.0, 9.8);
    let g = rv(rng, 0.3);
    let imu: Vec<ImuSample> =
        (0..=100).map(|i| ImuSample { t: i as f64 * 0.01, accel: a + rv(rng, 0.1), gyro: g + rv(rng, 0.01) }).collect();
    let noise = ImuNoise { accel_sigma: 0.05, gyro_sigma: 0.005, accel_bias_rw: 1e-3, gyro_bias_rw: 1e-4 };
    let (x0, x1) = (v.nav(0), v.nav(1));
    let pre = imu_preintegrate(&imu, &(x0.ba + rv(rng, 0.01)), &(x0.bg + rv(rng, 0.001)), &noise).unwrap();
    let odo: Vec<OdoSample> = (0..=25)
        .map(|i| OdoSample { t: i as f64 * 0.04, v: 1.0 + rng.random_range(-0.1..0.1), omega: rng.random_range(-0.3..0.3) })
        .collect();
    let c = v.calib(0);
    let intr = OdometerIntrinsics { s_v: c.s_v + 0.01, s_w: c.s_w - 0.01, rw_s_v: 1e-4, rw_s_w: 1e-4 };
    let extr = OdoExtrinsic { r_bm: c.r_bm() * exp_so3(&rv(rng, 0.02)), p_bm: c.p_bm + rv(rng, 0.05) };
    let opre = odo_preintegrate(&odo, &intr, &extr, &OdoNoise::default()).unwrap();
    let (dd, base) = random_dd(rng, &f);
    let (ka, kb) = amb_keys();
    let mut mean = x1.clone();
    mean.p += rv(rng, 1.0);
    mean.q = quat_exp(&rv(rng, 0.3)) * mean.q;
    vec![
        Box::new(ImuFactor::new(0, 1, pre).unwrap()),
        Box::new(OdoFactor::new(0, 1, opre).unwrap()),
        Box::new(PseudorangeFactor { epoch: 1, dd: dd.clone(), base, frame: f, huber: None }),
        Box::new(CarrierFactor { epoch: 1, dd, base, frame: f, amb_ref: ka, amb_sat: kb, huber: None }),
        Box::new(DopplerFactor {
            epoch: 1,
            sat_pos: f.origin_ecef + f.r_en * Vec3::new(1e7, 5e6, 2e7),
            sat_vel: rv(rng, 3000.0),
            sat_drift: 1e-11,
            range_rate: 10.0,
            sigma: 0.05,
            gyro: x1.bg + rv(rng, 0.5),
            frame: f,
            huber: None,
        }),
        Box::new(ZuptFactor { epoch: 0, sigma: 0.01 }),
        Box::new(NhcFactor { epoch: 1, gyro: x1.bg + rv(rng, 0.5), sigma: 0.05 }),
        Box::new(AmbiguityFixFactor { amb_ref: ka, amb_sat: kb, fixed: 7 }),
        Box::new(RandomWalkFactor { from: Key::Clock(0), to: Key::Clock(1), sigma: vec![0.05] }),
        Box::new(RandomWalkFactor { from: Key::Scale(0), to: Key::Scale(1), sigma: vec![1e-3, 2e-3] }),
        Box::new(VectorPrior { key: Key::Lever, mean: vec![0.1, 0.2, 0.3], sigma: vec![0.3, 0.3, 0.3] }),
        Box::new(NavPrior { epoch: 1, mean, sigma: SVector::<f64, 15>::from_element(0.1) }),
        Box::new(ExtrinsicPrior { p_bm: Vec3::zeros(), q_bm: quat_exp(&rv(rng, 0.2)), sigma_p: 0.5, sigma_rot: 0.08 }),
    ]
}

/// Worst relative Jacobian error per factor kind over `trials` random states.
pub fn factor_jacobians(rng: &mut ChaCha8Rng, trials: usize) -> Vec<(FactorKind, f64)> {
    let mut worst: Vec<(FactorKind, f64)> = Vec::new();
    for _ in 0..trials {
        let v = random_values(rng);
        for f in all_factors(rng, &v) {
            let err = jacobian_relative_error(f.as_ref(), &v, fd_step(f.kind()));
            match worst.iter_mut().find(|(k, _)| *k == f.kind()) {
                Some(w) => w.1 = w.1.max(err),
                None => worst.push((f.kind(), err)),
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn synthetic_double_differences_are_exact() {
        let c = dd_exactness(&mut rng(1), 20, 1e-3);
        assert!(c.measurements > 100);
        assert!(c.code < 1e-6 && c.cycles < 1e-6, "{c:?}");
    }

    #[test]
    fn integer_search_matches_enumeration() {
        let c = ils_vs_exhaustive(&mut rng(17), 200, 6);
        assert_eq!(c.mismatches, 0);
    }

    #[test]
    fn odometer_jacobians() {
        assert!(odo_error_dynamics(&mut rng(12), 20) < 1e-4);
        assert!(odo_parameter_jacobians(&mut rng(4), 10) < 1e-4);
    }

    #[test]
    fn imu_jacobians() {
        assert!(imu_step_jacobians(&mut rng(7), 20) < 1e-5);
        assert!(imu_bias_jacobians(&mut rng(11), 5) < 1e-4);
    }

    #[test]
    fn every_factor_jacobian() {
        let w = factor_jacobians(&mut rng(42), 20);
        assert_eq!(w.len(), 11);
        for (k, e) in w {
            assert!(e < 1e-4, "{k:?}: {e:e}");
        }
    }
}
