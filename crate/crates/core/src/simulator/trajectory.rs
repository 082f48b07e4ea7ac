//! Planar vehicle trajectories built from motion phases.
//!
//! The vehicle (mount frame) moves forward along its y axis with heading
//! `ψ` measured counter-clockwise from north, so the forward direction in
//! ENU is `Rz(ψ) e₂`. Speed and heading rate are blended across phase
//! boundaries so velocity stays continuous. Kinematics are integrated with
//! RK4 on a 1 kHz grid.

use serde::{Deserialize, Serialize};

use crate::geomath::{rot_from_rpy, skew, Mat3, Vec3};
use crate::{Error, Result};

pub const GRID_DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phase {
    Stationary {
        duration: f64,
    },
    /// Constant acceleration until `v_target` is reached.
    StraightAccel {
        accel: f64,
        v_target: f64,
    },
    StraightConst {
        duration: f64,
    },
    /// Constant-curvature arc. Speed is `radius·|omega|·(1 + m sin(2πτ/period))`
    /// with `m = speed_modulation`; the heading rate follows the same factor.
    Circle {
        radius: f64,
        omega: f64,
        duration: f64,
        #[serde(default)]
        speed_modulation: f64,
        #[serde(default = "default_period")]
        modulation_period: f64,
    },
}

fn default_period() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub phases: Vec<Phase>,
    /// Initial heading (rad, counter-clockwise from north).
    pub start_heading: f64,
    /// Blend time for speed and heading-rate changes between phases (s).
    pub ramp: f64,
}

impl TrajectorySpec {
    /// Stationary, straight acceleration to 0.25 m/s, constant speed, then
    /// circling from 45 s to 150 s.
    pub fn calibration_default() -> Self {
        Self {
            phases: vec![
                Phase::Stationary { duration: 20.0 },
                Phase::StraightAccel { accel: 0.125, v_target: 0.25 },
                Phase::StraightConst { duration: 23.0 },
                Phase::Circle {
                    radius: 2.0,
                    omega: 0.125,
                    duration: 105.0,
                    speed_modulation: 0.4,
                    modulation_period: 20.0,
                },
            ],
            start_heading: 0.0,
            ramp: 2.0,
        }
    }

    /// Calibration phases followed by a 300 s drive at 1.5 m/s with turns.
    pub fn with_drive_default() -> Self {
        let mut s = Self::calibration_default();
        s.phases.extend(drive_phases(300.0));
        s
    }

    pub fn duration(&self) -> f64 {
        let mut t = 0.0;
        let mut v = 0.0;
        for p in &self.phases {
            let (d, v1) = phase_extent(p, v);
            t += d;
            v = v1;
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::InvalidInput("trajectory has no phases".into()));
        }
        let mut v = 0.0;
        for p in &self.phases {
            match *p {
                Phase::Stationary { duration } | Phase::StraightConst { duration } if !(duration > 0.0) => {
                    return Err(Error::InvalidInput("phase duration must be positive".into()))
                }
                Phase::StraightAccel { accel, v_target } if !(v_target >= 0.0) || accel == 0.0 || (v_target - v) * accel <= 0.0 => {
                    return Err(Error::InvalidInput(format!("cannot reach {v_target} m/s from {v} m/s with {accel} m/s²")))
                }
                Phase::Circle { radius, duration, speed_modulation, .. }
                    if !(radius > 0.0 && duration > 0.0 && speed_modulation.abs() < 1.0) =>
                {
                    return Err(Error::InvalidInput("invalid circle phase".into()))
                }
                _ => {}
            }
            v = phase_extent(p, v).1;
        }
        if !(self.ramp >= 0.0) {
            return Err(Error::InvalidInput("ramp must be non-negative".into()));
        }
        Ok(())
    }
}

/// Straights at 1.5 m/s joined by alternating 90° turns, filling `total` seconds.
pub fn drive_phases(total: f64) -> Vec<Phase> {
    let v = 1.5;
    let accel = 0.3;
    let radius = 20.0;
    let omega = v / radius;
    let turn = std::f64::consts::FRAC_PI_2 / omega;
    let straight = 40.0;
    let mut phases = vec![Phase::StraightAccel { accel, v_target: v }];
    let mut t = v / accel;
    let mut left = true;
    loop {
        let rest = total - t;
        if rest <= straight + turn {
            phases.push(Phase::StraightConst { duration: rest });
            break;
        }
        phases.push(Phase::StraightConst { duration: straight });
        phases.push(Phase::Circle {
            radius,
            omega: if left { omega } else { -omega },
            duration: turn,
            speed_modulation: 0.0,
            modulation_period: default_period(),
        });
        left = !left;
        t += straight + turn;
    }
    phases
}

fn phase_extent(p: &Phase, v_in: f64) -> (f64, f64) {
    match *p {
        Phase::Stationary { duration } => (duration, 0.0),
        Phase::StraightAccel { accel, v_target } => ((v_target - v_in) / accel, v_target),
        Phase::StraightConst { duration } => (duration, v_in),
        Phase::Circle { radius, omega, duration, speed_modulation, modulation_period } => {
            let f = 1.0 + speed_modulation * (std::f64::consts::TAU * duration / modulation_period).sin();
            (duration, radius * omega.abs() * f)
        }
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Speed and heading-rate profile as a function of time.
#[derive(Debug, Clone)]
pub struct Profile {
    /// (start time, phase, speed at phase start, heading rate at phase start).
    segments: Vec<(f64, Phase, f64, f64)>,
    ramp: f64,
    end: f64,
}

impl Profile {
    pub fn new(spec: &TrajectorySpec) -> Result<Self> {
        spec.validate()?;
        let mut t = 0.0;
        let (mut v, mut w) = (0.0, 0.0);
        let mut out = Self { segments: Vec::new(), ramp: spec.ramp, end: 0.0 };
        for p in &spec.phases {
            let (d, _) = phase_extent(p, v);
            out.segments.push((t, p.clone(), v, w));
            t += d;
            (v, w) = out.eval_in(out.segments.len() - 1, t);
        }
        out.end = t;
        Ok(out)
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// (speed, heading rate) at time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let idx = self.segments.partition_point(|s| s.0 <= t).saturating_sub(1);
        self.eval_in(idx, t)
    }

    fn eval_in(&self, idx: usize, t: f64) -> (f64, f64) {
        let (t0, ref phase, v0, w0) = self.segments[idx];
        let tau = (t - t0).max(0.0);
        let blend = |target: f64, start: f64| {
            if self.ramp > 0.0 {
                start + smoothstep(tau / self.ramp) * (target - start)
            } else {
                target
            }
        };
        match *phase {
            Phase::Stationary { .. } => (0.0, blend(0.0, w0)),
            Phase::StraightAccel { accel, v_target } => {
                let v = v0 + accel * tau;
                let v = if accel > 0.0 { v.min(v_target) } else { v.max(v_target) };
                (v, blend(0.0, w0))
            }
            Phase::StraightConst { .. } => (v0, blend(0.0, w0)),
            Phase::Circle { radius, omega, speed_modulation, modulation_period, .. } => {
                let f = 1.0 + speed_modulation * (std::f64::consts::TAU * tau / modulation_period).sin();
                (blend(radius * omega.abs() * f, v0), blend(omega * f, w0))
            }
        }
    }
}

/// Kinematic state of the mount frame on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinSample {
    pub t: f64,
    /// Mount origin in the world (ENU) frame.
    pub p: Vec3,
    pub heading: f64,
    pub speed: f64,
    pub heading_rate: f64,
    pub speed_dot: f64,
    pub heading_acc: f64,
}

/// True IMU state derived from the mount kinematics and extrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyTruth {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    /// World-frame acceleration of the IMU.
    pub a: Vec3,
    pub r_wb: Mat3,
    /// Body angular rate.
    pub w: Vec3,
    /// Mount-frame forward speed and heading rate.
    pub speed: f64,
    pub heading_rate: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<KinSample>,
}

pub fn generate_trajectory(spec: &TrajectorySpec) -> Result<Trajectory> {
    let prof = Profile::new(spec)?;
    let n = (prof.end() / GRID_DT).round() as usize;
    let fwd = |psi: f64| Vec3::new(-psi.sin(), psi.cos(), 0.0);
    let deriv = |t: f64| {
        let h = 1e-6;
        let (a, b) = (prof.eval(t + h), prof.eval((t - h).max(0.0)));
        let span = t + h - (t - h).max(0.0);
        ((a.0 - b.0) / span, (a.1 - b.1) / span)
    };
    let mut samples = Vec::with_capacity(n + 1);
    let mut p = Vec3::zeros();
    let mut psi = spec.start_heading;
    for i in 0..=n {
        let t = i as f64 * GRID_DT;
        let (v, w) = prof.eval(t);
        let (vd, wd) = deriv(t);
        samples.push(KinSample { t, p, heading: psi, speed: v, heading_rate: w, speed_dot: vd, heading_acc: wd });
        // RK4 on (p, ψ).
        let f = |tt: f64, psi_: f64| {
            let (v, w) = prof.eval(tt);
            (fwd(psi_) * v, w)
        };
        let h = GRID_DT;
        let (k1p, k1s) = f(t, psi);
        let (k2p, k2s) = f(t + h / 2.0, psi + h / 2.0 * k1s);
        let (k3p, k3s) = f(t + h / 2.0, psi + h / 2.0 * k2s);
        let (k4p, k4s) = f(t + h, psi + h * k3s);
        p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        psi += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
    }
    Ok(Trajectory { samples })
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Grid index of time `t` (which must lie on the grid).
    pub fn index(&self, t: f64) -> Option<usize> {
        let i = (t / GRID_DT).round();
        (i >= 0.0 && (i as usize) < self.samples.len()).then_some(i as usize)
    }

    /// IMU truth at grid index `i` for extrinsics `(r_bm, p_bm)`.
    pub fn body(&self, i: usize, r_bm: &Mat3, p_bm: &Vec3) -> BodyTruth {
        let k = &self.samples[i];
        let r_wm = rot_from_rpy(0.0, 0.0, k.heading);
        let r_wb = r_wm * r_bm.transpose();
        let e2 = Vec3::new(0.0, 1.0, 0.0);
        let e1 = Vec3::new(1.0, 0.0, 0.0);
        let v_m = r_wm * e2 * k.speed;
        let a_m = r_wm * (e2 * k.speed_dot - e1 * k.speed * k.heading_rate);
        let w_m = Vec3::new(0.0, 0.0, k.heading_rate);
        let wd_m = Vec3::new(0.0, 0.0, k.heading_acc);
        let w_b = r_bm * w_m;
        let wd_b = r_bm * wd_m;
        let lever_w = r_wb * p_bm;
        let p = k.p - lever_w;
        let v = v_m - r_wb * (skew(&w_b) * p_bm);
        let a = a_m - r_wb * ((skew(&wd_b) + skew(&w_b) * skew(&w_b)) * p_bm);
        BodyTruth { t: k.t, p, v, a, r_wb, w: w_b, speed: k.speed, heading_rate: k.heading_rate }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_has_zero_velocity() {
        let spec = TrajectorySpec { phases: vec![Phase::Stationary { duration: 20.0 }], start_heading: 0.3, ramp: 2.0 };
        let tr = generate_trajectory(&spec).unwrap();
        assert!(tr.samples.iter().all(|s| s.speed == 0.0 && s.p == Vec3::zeros()));
    }

    #[test]
    fn circle_kinematics() {
        let spec = TrajectorySpec {
            phases: vec![
                Phase::StraightAccel { accel: 0.5, v_target: 0.5 },
                Phase::Circle { radius: 5.0, omega: 0.1, duration: 40.0, speed_modulation: 0.0, modulation_period: 20.0 },
            ],
            start_heading: 0.0,
            ramp: 2.0,
        };
        let tr = generate_trajectory(&spec).unwrap();
        let i = tr.index(20.0).unwrap();
        let b = tr.body(i, &Mat3::identity(), &Vec3::zeros());
        assert!((b.v.norm() - 0.5).abs() < 1e-9);
        assert!((b.a.norm() - 0.05).abs() < 1e-9);
    }

    #[test]
    fn default_profile_shape() {
        let spec = TrajectorySpec::calibration_default();
        assert!((spec.duration() - 150.0).abs() < 1e-9);
        let prof = Profile::new(&spec).unwrap();
        for k in 0..=50 {
            let t = 40.0 + 0.1 * k as f64;
            assert!((prof.eval(t).0 - 0.25).abs() < 1e-12, "t = {t}");
        }
        assert_eq!(prof.eval(10.0), (0.0, 0.0));
        assert!(prof.eval(100.0).1 > 0.05);
    }

    #[test]
    fn velocity_is_derivative_of_position() {
        let spec = TrajectorySpec::with_drive_default();
        let tr = generate_trajectory(&spec).unwrap();
        let r_bm = rot_from_rpy(0.03, -0.02, 0.05);
        let p_bm = Vec3::new(0.2, -0.3, 0.1);
        let mut worst: f64 = 0.0;
        for i in (1..tr.samples.len() - 1).step_by(97) {
            let b0 = tr.body(i - 1, &r_bm, &p_bm);
            let b1 = tr.body(i, &r_bm, &p_bm);
            let b2 = tr.body(i + 1, &r_bm, &p_bm);
            // Skip the few samples that straddle a kink in the acceleration.
            if (b2.a - b0.a).norm() > 1e-3 {
                continue;
            }
            let fd = (b2.p - b0.p) / (2.0 * GRID_DT);
            worst = worst.max((fd - b1.v).norm());
        }
        assert!(worst < 1e-6, "worst {worst}");
    }

    #[test]
    fn velocity_continuous_across_phases() {
        let tr = generate_trajectory(&TrajectorySpec::with_drive_default()).unwrap();
        for w in tr.samples.windows(2) {
            assert!((w[1].speed - w[0].speed).abs() < 1e-3);
        }
    }
}
