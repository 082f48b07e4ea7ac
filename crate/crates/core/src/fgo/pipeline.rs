//! Epoch-by-epoch sliding-window estimation: screening, window build-up,
//! marginalization, optimization and ambiguity resolution, plus an
//! inertial/odometer-only dead-reckoning mode.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DVector, SVector};
use serde::{Deserialize, Serialize};

use super::config::{ArMode, FgoConfig, LeverMode};
use super::factors::{
    AmbiguityFixFactor, CarrierFactor, DopplerFactor, ExtrinsicPrior, FactorKind, Frame, ImuFactor, NavPrior,
    NhcFactor, OdoFactor, PseudorangeFactor, RandomWalkFactor, VectorPrior, ZuptFactor,
};
use super::marginal::marginalize;
use super::solver::{marginal_covariance, optimize, Graph, SolveReport};
use super::state::{CalibState, NavState};
use super::values::{Epoch, Key, Values};
use crate::ambiguity::{ils_fix, ils_fix_partial, sd_to_dd};
use crate::geomath::{rot_from_rpy, rot_to_quat, GeodeticOrigin, Mat3, Vec3, SPEED_OF_LIGHT};
use crate::gnss::{
    dd_range, form_double_differences, group_epochs, screen_stage2, DdEpoch, DopplerScreen, GnssRawMeasurement,
    OutlierReport, SatId,
};
use crate::preintegration::{
    detect_motion, imu_interval, imu_preintegrate, odo_interval, odo_preintegrate, ImuNoise, ImuSample,
    MotionConstraint, MotionThresholds, OdoExtrinsic, OdoNoise, OdoSample, OdometerIntrinsics,
};
use crate::{Error, Result};

/// Raw input streams.
#[derive(Debug, Clone, Copy)]
pub struct SensorData<'a> {
    pub rover: &'a [GnssRawMeasurement],
    pub base: &'a [GnssRawMeasurement],
    pub imu: &'a [ImuSample],
    pub odo: &'a [OdoSample],
}

/// Site geometry and the initial calibration guess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub origin: GeodeticOrigin,
    pub base_ecef: Vec3,
    /// Initial odometer scales and extrinsics.
    pub initial: CalibState,
    /// Assumed IMU-to-antenna lever arm (body frame).
    pub lever: Vec3,
    /// Initial IMU yaw (rad).
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibStd {
    pub p_bm: Vec3,
    /// Std of the extrinsic rotation perturbation (deg).
    pub rot_deg: Vec3,
    pub s_v: f64,
    pub s_w: f64,
    pub lever: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub t: f64,
    pub nav: NavState,
    /// Receiver clock drift (s/s).
    pub clock_drift: f64,
    pub calib: CalibState,
    pub std: CalibStd,
    /// Std of position, velocity and attitude (deg) of the newest state.
    pub nav_std: [f64; 9],
    pub n_dd: usize,
    pub n_rejected: usize,
    /// Ambiguities held by fixed-integer factors after this epoch.
    pub n_fixed: usize,
    pub ratio: Option<f64>,
    pub solve: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPair {
    pub reference: SatId,
    pub sat: SatId,
    pub band: u8,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixEvent {
    pub t: f64,
    pub ratio: f64,
    pub accepted: bool,
    /// Passed the post-fix carrier residual check (only meaningful when accepted).
    pub validated: bool,
    pub pairs: Vec<FixedPair>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRun {
    pub records: Vec<EpochRecord>,
    pub fixes: Vec<FixEvent>,
    pub outliers: Vec<OutlierReport>,
    pub warnings: Vec<String>,
}

impl CalibrationRun {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Latest record at or before `t`.
    pub fn at(&self, t: f64) -> Option<&EpochRecord> {
        let i = self.records.partition_point(|r| r.t <= t + 1e-9);
        i.checked_sub(1).map(|i| &self.records[i])
    }
}

/// Gap between states beyond which the window restarts.
const MAX_EPOCH_GAP: f64 = 5.0;
/// Half-width of the gyro average used for lever-arm velocity terms (s).
const GYRO_HALF_WINDOW: f64 = 0.5;
/// RMS of whitened carrier residuals above which a fix is withdrawn.
const FIX_RESIDUAL_RMS: f64 = 3.0;

struct Arc {
    id: u32,
    last_t: f64,
}

struct Estimator<'a> {
    cfg: &'a FgoConfig,
    data: SensorData<'a>,
    setup: &'a Setup,
    frame: Frame,
    imu_noise: ImuNoise,
    odo_noise: OdoNoise,
    motion: MotionThresholds,
    gnss: bool,
    graph: Graph,
    window: VecDeque<(Epoch, f64)>,
    next: Epoch,
    arcs: BTreeMap<(SatId, u8), Arc>,
    next_arc: BTreeMap<(SatId, u8), u32>,
    screen: DopplerScreen,
    /// ECEF antenna-position covariance predicted from the last solve.
    last_pv_cov: Option<(Mat3, Mat3)>,
    /// Preintegrated position covariance and length of the latest interval.
    last_step: Option<(Mat3, f64)>,
    run: CalibrationRun,
}

fn imu_rate(imu: &[ImuSample]) -> Result<f64> {
    if imu.len() < 2 {
        return Err(Error::InvalidInput("IMU stream needs at least two samples".into()));
    }
    let span = imu[imu.len() - 1].t - imu[0].t;
    Ok((imu.len() - 1) as f64 / span)
}

/// Mean raw gyro over `[t - half, t + half]`, clipped to the stream.
fn gyro_mean(imu: &[ImuSample], t: f64, half: f64) -> Vec3 {
    let lo = imu.partition_point(|s| s.t < t - half - 1e-9);
    let hi = imu.partition_point(|s| s.t <= t + half + 1e-9);
    if hi <= lo {
        return imu.get(lo.min(imu.len().saturating_sub(1))).map_or(Vec3::zeros(), |s| s.gyro);
    }
    imu[lo..hi].iter().fold(Vec3::zeros(), |a, s| a + s.gyro) / (hi - lo) as f64
}

/// Roll and pitch from the mean specific force of a static interval.
fn level(imu: &[ImuSample], t0: f64, t1: f64) -> (f64, f64) {
    let s: Vec<&ImuSample> = imu.iter().filter(|s| s.t >= t0 - 1e-9 && s.t <= t1 + 1e-9).collect();
    if s.is_empty() {
        return (0.0, 0.0);
    }
    let f = s.iter().fold(Vec3::zeros(), |a, x| a + x.accel) / s.len() as f64;
    (f.y.atan2(f.z), (-f.x).atan2((f.y * f.y + f.z * f.z).sqrt()))
}

impl<'a> Estimator<'a> {
    fn new(cfg: &'a FgoConfig, data: SensorData<'a>, setup: &'a Setup, gnss: bool) -> Result<Self> {
        cfg.validate()?;
        let rate = imu_rate(data.imu)?;
        let imu_noise = cfg.imu.noise(rate);
        let mut motion = cfg.motion;
        motion.gyro_mean_sigma = imu_noise.gyro_sigma / (rate * motion.window).sqrt();
        let frame = Frame { origin_ecef: setup.origin.to_ecef(), r_en: setup.origin.ecef_enu_rotation() };
        let values = Values::new(setup.initial.p_bm, setup.initial.q_bm, setup.lever);
        let mut graph = Graph::new(values);
        if cfg.lever_mode == LeverMode::Fixed || !gnss {
            graph.fixed.insert(Key::Lever);
        }
        Ok(Self {
            cfg,
            data,
            setup,
            frame,
            imu_noise,
            odo_noise: cfg.odo.noise(),
            motion,
            gnss,
            graph,
            window: VecDeque::new(),
            next: 0,
            arcs: BTreeMap::new(),
            next_arc: BTreeMap::new(),
            screen: DopplerScreen::new(cfg.outlier_k1, cfg.gnss),
            last_pv_cov: None,
            last_step: None,
            run: CalibrationRun::default(),
        })
    }

    fn huber(&self) -> Option<f64> {
        Some(self.cfg.huber_delta)
    }

    fn antenna_ecef(&self, nav: &NavState) -> Vec3 {
        self.frame.origin_ecef + self.frame.r_en * (nav.p + nav.rotation() * self.graph.values.lever)
    }

    /// Position and velocity from double-differenced code and Doppler.
    fn gnss_fix(&self, rover: &[GnssRawMeasurement], base: &[GnssRawMeasurement], excluded: &[(SatId, u8)]) -> Result<(Vec3, Vec3, f64)> {
        let mut a = self.frame.origin_ecef;
        for _ in 0..8 {
            let dd = form_double_differences(rover, base, &a, &self.cfg.gnss, excluded)?;
            let rows: Vec<_> = dd.measurements.iter().filter(|m| m.pseudorange.is_some()).collect();
            if rows.len() < 3 {
                return Err(Error::Degenerate("fewer than three double differences for initialization".into()));
            }
            let mut h = nalgebra::Matrix3::zeros();
            let mut g = Vec3::zeros();
            for m in rows {
                let u = ((m.sat_pos - a).normalize() - (m.ref_pos - a).normalize()) / m.var_pseudorange.sqrt();
                let r = (m.pseudorange.unwrap_or(0.0) - dd_range(m, &a, &self.setup.base_ecef)) / m.var_pseudorange.sqrt();
                h += u * u.transpose();
                g += u * r;
            }
            let step = h.cholesky().ok_or_else(|| Error::Degenerate("singular code geometry".into()))?.solve(&g);
            a -= step;
            if step.norm() < 1e-4 {
                break;
            }
        }
        // Velocity and clock drift from rover Doppler: u·v_a − d = u·v_s − c ṫˢ − λD.
        let mut h = nalgebra::Matrix4::zeros();
        let mut g = nalgebra::Vector4::zeros();
        for m in rover {
            let u = (m.sat_pos - a).normalize();
            let row = nalgebra::Vector4::new(u.x, u.y, u.z, -1.0);
            let y = u.dot(&m.sat_vel) - SPEED_OF_LIGHT * m.sat_clock_drift - m.range_rate_obs();
            h += row * row.transpose();
            g += row * y;
        }
        let x = h.cholesky().map(|c| c.solve(&g)).unwrap_or_else(nalgebra::Vector4::zeros);
        Ok((a, Vec3::new(x[0], x[1], x[2]), x[3]))
    }

    fn add_calibration_priors(&mut self) {
        let p = &self.cfg.priors;
        let init = &self.setup.initial;
        self.graph.add(ExtrinsicPrior {
            p_bm: init.p_bm,
            q_bm: init.q_bm,
            sigma_p: p.p_bm,
            sigma_rot: p.rot_bm_deg.to_radians(),
        });
        if !self.graph.fixed.contains(&Key::Lever) {
            let l = self.setup.lever;
            self.graph.add(VectorPrior { key: Key::Lever, mean: vec![l.x, l.y, l.z], sigma: vec![p.lever; 3] });
        }
    }

    fn initialize(&mut self, e: Epoch, t: f64, rover: &[GnssRawMeasurement], base: &[GnssRawMeasurement], excluded: &[(SatId, u8)]) -> Result<()> {
        let p = self.cfg.priors;
        let (roll, pitch) = level(self.data.imu, t, t + 1.0);
        let r = rot_from_rpy(roll, pitch, self.setup.heading);
        let mut nav = NavState { t, p: Vec3::zeros(), v: Vec3::zeros(), q: rot_to_quat(&r), ba: Vec3::zeros(), bg: Vec3::zeros() };
        let mut clock = 0.0;
        if self.gnss && !rover.is_empty() {
            let (a, va, d) = self.gnss_fix(rover, base, excluded)?;
            nav.p = self.frame.r_en.transpose() * (a - self.frame.origin_ecef) - r * self.graph.values.lever;
            nav.v = self.frame.r_en.transpose() * va;
            clock = d;
        }
        let (rp, yaw) = (p.roll_pitch_deg.to_radians(), p.yaw_deg.to_radians());
        let mut sigma = SVector::<f64, 15>::zeros();
        for i in 0..3 {
            sigma[i] = p.position;
            sigma[3 + i] = p.velocity;
            sigma[9 + i] = p.accel_bias;
            sigma[12 + i] = p.gyro_bias;
        }
        sigma[6] = rp;
        sigma[7] = rp;
        sigma[8] = yaw;
        let v = &mut self.graph.values;
        v.nav.insert(e, nav.clone());
        v.scale.insert(e, [self.setup.initial.s_v, self.setup.initial.s_w]);
        self.graph.add(NavPrior { epoch: e, mean: nav, sigma });
        self.graph.add(VectorPrior {
            key: Key::Scale(e),
            mean: vec![self.setup.initial.s_v, self.setup.initial.s_w],
            sigma: vec![p.scale; 2],
        });
        if self.gnss {
            self.graph.values.clock.insert(e, clock);
            self.graph.add(VectorPrior { key: Key::Clock(e), mean: vec![clock], sigma: vec![p.clock_drift] });
        }
        self.add_calibration_priors();
        Ok(())
    }

    /// Adds state `e` at `t` predicted from the newest state, with the
    /// inertial, odometer and random-walk factors linking them.
    fn propagate(&mut self, e: Epoch, t: f64) -> Result<()> {
        let (ep, tp) = *self.window.back().expect("non-empty window");
        let prev = self.graph.values.nav(ep).clone();
        let imu = imu_interval(self.data.imu, tp, t)?;
        let pre = imu_preintegrate(&imu, &prev.ba, &prev.bg, &self.imu_noise)?;
        let mut nav = pre.predict(&prev);
        nav.t = t;
        let odo = odo_interval(self.data.odo, tp, t)?;
        let calib = self.graph.values.calib(ep);
        let rw = self.cfg.odo.scale_sigma_rw();
        let intr = OdometerIntrinsics { s_v: calib.s_v, s_w: calib.s_w, rw_s_v: rw, rw_s_w: rw };
        let opre = odo_preintegrate(&odo, &intr, &OdoExtrinsic::from_calib(&calib), &self.odo_noise)?;
        let dt = t - tp;
        let r_wb = prev.rotation();
        let dp_cov = r_wb * pre.cov.fixed_view::<3, 3>(0, 0) * r_wb.transpose();
        self.last_step = Some((self.frame.r_en * dp_cov * self.frame.r_en.transpose(), dt));

        let v = &mut self.graph.values;
        v.nav.insert(e, nav);
        v.scale.insert(e, [calib.s_v, calib.s_w]);
        self.graph.add(ImuFactor::new(ep, e, pre)?);
        self.graph.add(OdoFactor::new(ep, e, opre)?);
        self.graph.add(RandomWalkFactor { from: Key::Scale(ep), to: Key::Scale(e), sigma: vec![rw * dt.sqrt(); 2] });
        if self.gnss {
            let c = self.graph.values.clock[&ep];
            self.graph.values.clock.insert(e, c);
            self.graph.add(RandomWalkFactor {
                from: Key::Clock(ep),
                to: Key::Clock(e),
                sigma: vec![self.cfg.clock_drift_rw * dt.sqrt()],
            });
        }
        self.add_motion_factor(e, t)?;
        Ok(())
    }

    fn add_motion_factor(&mut self, e: Epoch, t: f64) -> Result<()> {
        let w = self.motion.window;
        let t0 = self.data.imu[0].t.max(self.data.odo[0].t);
        if t - w < t0 - 1e-9 {
            return Ok(());
        }
        let imu = imu_interval(self.data.imu, t - w, t)?;
        let odo = odo_interval(self.data.odo, t - w, t)?;
        let bg = self.graph.values.nav(e).bg;
        match detect_motion(&imu, &odo, &bg, &self.motion) {
            MotionConstraint::Zupt => self.graph.add(ZuptFactor { epoch: e, sigma: self.cfg.zupt_sigma }),
            MotionConstraint::Nhc => {
                self.graph.add(NhcFactor { epoch: e, gyro: gyro_mean(self.data.imu, t, GYRO_HALF_WINDOW), sigma: self.cfg.nhc_sigma })
            }
            MotionConstraint::None => {}
        }
        Ok(())
    }

    /// Ambiguity key of the current arc of `(sat, band)`, opening a new arc
    /// on first sight, loss of lock or a tracking gap.
    fn arc_key(&mut self, sat: SatId, band: u8, t: f64, lli: bool, init: f64) -> Key {
        let gap = self.cfg.dr_interval.max(1.0) * 1.5;
        let fresh = match self.arcs.get(&(sat, band)) {
            Some(a) => lli || t - a.last_t > gap,
            None => true,
        };
        if fresh {
            let id = self.next_arc.entry((sat, band)).or_insert(0);
            let arc = *id;
            *id += 1;
            self.arcs.insert((sat, band), Arc { id: arc, last_t: t });
            self.graph.values.amb.insert((sat, band, arc), init);
            let key = Key::Amb(sat, band, arc);
            self.graph.add(VectorPrior { key, mean: vec![init], sigma: vec![self.cfg.priors.ambiguity_cycles] });
            key
        } else {
            let a = self.arcs.get_mut(&(sat, band)).expect("arc");
            a.last_t = t;
            Key::Amb(sat, band, a.id)
        }
    }

    fn add_gnss(&mut self, e: Epoch, t: f64, rover: &[GnssRawMeasurement], base: &[GnssRawMeasurement], excluded: &mut Vec<(SatId, u8)>) -> Result<DdEpoch> {
        let nav = self.graph.values.nav(e).clone();
        let ant = self.antenna_ecef(&nav);
        let mut dd = form_double_differences(rover, base, &ant, &self.cfg.gnss, excluded)?;
        if let (Some((pp, vv)), Some((dp, dt))) = (self.last_pv_cov, self.last_step) {
            let pcov = pp + vv * (dt * dt) + dp;
            let reports = screen_stage2(&dd.measurements, &ant, &pcov, &self.setup.base_ecef, self.cfg.outlier_k2);
            for r in &reports {
                if r.rejected {
                    excluded.push((r.sat, r.band));
                    for m in dd.measurements.iter_mut().filter(|m| m.sat == r.sat && m.band == r.band) {
                        m.pseudorange = None;
                    }
                }
            }
            self.run.outliers.extend(reports.into_iter().filter(|r| r.rejected));
        }

        let base_map: BTreeMap<(SatId, u8), &GnssRawMeasurement> = base.iter().map(|m| ((m.sat, m.band), m)).collect();
        let mut keys: BTreeMap<(SatId, u8), Key> = BTreeMap::new();
        let mut seen: BTreeSet<(SatId, u8)> = BTreeSet::new();
        for m in &dd.measurements {
            seen.insert((m.reference, m.band));
            seen.insert((m.sat, m.band));
        }
        for r in rover.iter().filter(|r| seen.contains(&(r.sat, r.band))) {
            let Some(b) = base_map.get(&(r.sat, r.band)) else { continue };
            let init = ((r.carrier - b.carrier) - (r.pseudorange - b.pseudorange)) / r.wavelength;
            let k = self.arc_key(r.sat, r.band, t, r.lli || b.lli, init);
            keys.insert((r.sat, r.band), k);
        }

        let huber = self.huber();
        for m in &dd.measurements {
            if m.pseudorange.is_some() {
                self.graph.add(PseudorangeFactor { epoch: e, dd: m.clone(), base: self.setup.base_ecef, frame: self.frame, huber });
            }
            if m.carrier.is_some() {
                let (Some(&ka), Some(&kb)) = (keys.get(&(m.reference, m.band)), keys.get(&(m.sat, m.band))) else {
                    continue;
                };
                self.graph.add(CarrierFactor {
                    epoch: e,
                    dd: m.clone(),
                    base: self.setup.base_ecef,
                    frame: self.frame,
                    amb_ref: ka,
                    amb_sat: kb,
                    huber,
                });
            }
        }
        let gyro = gyro_mean(self.data.imu, t, GYRO_HALF_WINDOW);
        for r in rover {
            let Ok(var) = crate::gnss::elevation_variance(r.elevation, self.cfg.gnss.doppler_sigma) else { continue };
            self.graph.add(DopplerFactor {
                epoch: e,
                sat_pos: r.sat_pos,
                sat_vel: r.sat_vel,
                sat_drift: r.sat_clock_drift,
                range_rate: r.range_rate_obs(),
                sigma: var.sqrt(),
                gyro,
                frame: self.frame,
                huber,
            });
        }
        Ok(dd)
    }

    /// Marginalizes the oldest state together with ambiguities that no
    /// longer appear in any remaining carrier factor.
    fn marginalize_oldest(&mut self, t: f64) -> Result<()> {
        let (e0, _) = self.window.pop_front().expect("window");
        let mut remove: BTreeSet<Key> = [Key::Nav(e0), Key::Clock(e0), Key::Scale(e0)]
            .into_iter()
            .filter(|k| self.graph.values.contains(k))
            .collect();
        let live: BTreeSet<Key> = self
            .graph
            .factors
            .iter()
            .filter(|f| f.kind() == FactorKind::Carrier && !f.keys().iter().any(|k| remove.contains(k)))
            .flat_map(|f| f.keys())
            .collect();
        for &(sat, band, arc) in self.graph.values.amb.keys() {
            let k = Key::Amb(sat, band, arc);
            let current = self.arcs.get(&(sat, band)).is_some_and(|a| a.id == arc && (a.last_t - t).abs() < 1e-6);
            if !live.contains(&k) && !current {
                remove.insert(k);
            }
        }
        let rep = marginalize(&mut self.graph, &remove)?;
        if rep.clamped < -1e-6 {
            self.run.warnings.push(format!("t={t}: marginal prior clamped eigenvalue {:.2e}", rep.clamped));
        }
        Ok(())
    }

    fn refresh(&mut self) -> Result<()> {
        let v = self.graph.values.clone();
        for f in &mut self.graph.factors {
            f.refresh(&v)?;
        }
        Ok(())
    }

    fn solve(&mut self) -> Result<SolveReport> {
        self.refresh()?;
        let rep = optimize(&mut self.graph, &self.cfg.solver)?;
        if !rep.final_cost.is_finite() {
            return Err(Error::Numerical("optimization diverged".into()));
        }
        Ok(rep)
    }

    fn carrier_rms(&self, e: Epoch) -> f64 {
        let r: Vec<f64> = self
            .graph
            .factors
            .iter()
            .filter(|f| f.kind() == FactorKind::Carrier && f.keys()[0] == Key::Nav(e))
            .map(|f| f.evaluate(&self.graph.values).0[0])
            .collect();
        if r.is_empty() {
            0.0
        } else {
            (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt()
        }
    }

    fn try_fix(&mut self, e: Epoch, t: f64, dd: &DdEpoch) -> Result<Option<FixEvent>> {
        let mut carriers: BTreeMap<(SatId, u8), Key> = BTreeMap::new();
        let mut refs: BTreeMap<(char, u8), SatId> = BTreeMap::new();
        let mut elev: BTreeMap<(SatId, u8), f64> = BTreeMap::new();
        for f in &self.graph.factors {
            if f.kind() != FactorKind::Carrier || f.keys()[0] != Key::Nav(e) {
                continue;
            }
            for k in &f.keys()[2..] {
                if let Key::Amb(s, b, _) = *k {
                    carriers.insert((s, b), *k);
                }
            }
        }
        for m in dd.measurements.iter().filter(|m| m.carrier.is_some()) {
            refs.insert((m.reference.constellation, m.band), m.reference);
            elev.insert((m.sat, m.band), m.elevation);
        }
        if carriers.len() < 2 {
            return Ok(None);
        }
        let sb: Vec<(SatId, u8)> = carriers.keys().copied().collect();
        let keys: Vec<Key> = carriers.values().copied().collect();
        let Some(q) = marginal_covariance(&self.graph, &keys) else {
            self.run.warnings.push(format!("t={t}: singular information, AR skipped"));
            return Ok(None);
        };
        let a = DVector::from_iterator(keys.len(), keys.iter().map(|k| self.graph.values.amb(k)));
        let q = 0.5 * (&q + q.transpose());
        let float = match sd_to_dd(&sb, &a, &q, &refs) {
            Ok(f) if f.dim() > 0 => f,
            Ok(_) => return Ok(None),
            Err(err) => {
                self.run.warnings.push(format!("t={t}: {err}"));
                return Ok(None);
            }
        };
        let fix = if self.cfg.partial_ar {
            let els: Vec<f64> = float.pairs.iter().map(|&(_, s, b)| elev.get(&(s, b)).copied().unwrap_or(0.0)).collect();
            ils_fix_partial(&float, &els, self.cfg.ratio_threshold, self.cfg.partial_min_elevation_deg.to_radians())?
        } else {
            ils_fix(&float, self.cfg.ratio_threshold)?
        };
        let mut event = FixEvent { t, ratio: fix.ratio, accepted: fix.accepted, validated: false, pairs: Vec::new() };
        if !fix.accepted {
            return Ok(Some(event));
        }
        let new: Vec<AmbiguityFixFactor> = fix
            .indices
            .iter()
            .zip(&fix.best)
            .map(|(&i, &value)| {
                let (ri, si) = float.sd_index[i];
                AmbiguityFixFactor { amb_ref: keys[ri], amb_sat: keys[si], fixed: value }
            })
            .collect();
        event.pairs = fix
            .indices
            .iter()
            .zip(&fix.best)
            .map(|(&i, &value)| {
                let (reference, sat, band) = float.pairs[i];
                FixedPair { reference, sat, band, value }
            })
            .collect();

        let before = self.graph.values.clone();
        let n_old = self.graph.factors.len();
        for f in new {
            self.graph.add(f);
        }
        self.solve()?;
        if self.carrier_rms(e) > FIX_RESIDUAL_RMS {
            self.graph.factors.truncate(n_old);
            self.graph.values = before;
            self.run.warnings.push(format!("t={t}: fix withdrawn after residual check"));
            return Ok(Some(event));
        }
        // The new fixes supersede older ones.
        let old = std::mem::take(&mut self.graph.factors);
        self.graph.factors = old
            .into_iter()
            .enumerate()
            .filter(|(i, f)| *i >= n_old || f.kind() != FactorKind::AmbiguityFix)
            .map(|(_, f)| f)
            .collect();
        event.validated = true;
        Ok(Some(event))
    }

    fn record(&mut self, e: Epoch, t: f64, n_dd: usize, n_rejected: usize, ratio: Option<f64>, solve: SolveReport) {
        let v = &self.graph.values;
        let nav = v.nav(e).clone();
        let mut keys = vec![Key::Nav(e)];
        let calib_active = !self.graph.fixed.contains(&Key::Extrinsic);
        if calib_active {
            keys.push(Key::Extrinsic);
            keys.push(Key::Scale(e));
        }
        let lever_active = !self.graph.fixed.contains(&Key::Lever);
        if lever_active {
            keys.push(Key::Lever);
        }
        let cov = marginal_covariance(&self.graph, &keys);
        let sd = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());
        let mut nav_std = [0.0; 9];
        for (i, s) in nav_std.iter_mut().enumerate() {
            *s = if i >= 6 { sd(i).to_degrees() } else { sd(i) };
        }
        if let Some(c) = &cov {
            let pp = c.fixed_view::<3, 3>(0, 0).into_owned();
            let vv = c.fixed_view::<3, 3>(3, 3).into_owned();
            let r = self.frame.r_en;
            self.last_pv_cov = Some((r * pp * r.transpose(), r * vv * r.transpose()));
        }
        let std = if calib_active {
            CalibStd {
                p_bm: Vec3::new(sd(15), sd(16), sd(17)),
                rot_deg: Vec3::new(sd(18), sd(19), sd(20)).map(f64::to_degrees),
                s_v: sd(21),
                s_w: sd(22),
                lever: lever_active.then(|| Vec3::new(sd(23), sd(24), sd(25))),
            }
        } else {
            CalibStd { p_bm: Vec3::zeros(), rot_deg: Vec3::zeros(), s_v: 0.0, s_w: 0.0, lever: None }
        };
        let mut calib = v.calib(e);
        if !lever_active {
            calib.lever = None;
        }
        let n_fixed = self.graph.factors.iter().filter(|f| f.kind() == FactorKind::AmbiguityFix).count();
        self.run.records.push(EpochRecord {
            t,
            nav,
            clock_drift: v.clock.get(&e).copied().unwrap_or(0.0) / SPEED_OF_LIGHT,
            calib,
            std,
            nav_std,
            n_dd,
            n_rejected,
            n_fixed,
            ratio,
            solve,
        });
    }

    fn restart(&mut self, e: Epoch, t: f64, why: &str) -> Result<()> {
        self.run.warnings.push(format!("t={t}: window restarted ({why})"));
        log::warn!("t={t}: window restarted ({why})");
        let last = self.run.records.last().cloned();
        let values = &self.graph.values;
        let mut fresh = Values::new(values.p_bm, values.q_bm, values.lever);
        let fixed = self.graph.fixed.clone();
        self.window.clear();
        self.arcs.clear();
        self.last_pv_cov = None;
        self.last_step = None;
        let Some(last) = last else {
            self.graph = Graph { values: fresh, factors: Vec::new(), fixed };
            return Ok(());
        };
        let p = self.cfg.priors;
        let mut nav = last.nav.clone();
        nav.t = t;
        fresh.nav.insert(e, nav.clone());
        fresh.scale.insert(e, [last.calib.s_v, last.calib.s_w]);
        self.graph = Graph { values: fresh, factors: Vec::new(), fixed };
        let mut sigma = SVector::<f64, 15>::zeros();
        for i in 0..3 {
            sigma[i] = p.position;
            sigma[3 + i] = p.velocity;
            sigma[6 + i] = p.roll_pitch_deg.to_radians();
            sigma[9 + i] = p.accel_bias;
            sigma[12 + i] = p.gyro_bias;
        }
        self.graph.add(NavPrior { epoch: e, mean: nav, sigma });
        // Carry the calibration over with its latest uncertainty.
        let s = &last.std;
        let floor = 1e-6;
        self.graph.add(ExtrinsicPrior {
            p_bm: last.calib.p_bm,
            q_bm: last.calib.q_bm,
            sigma_p: s.p_bm.max().max(floor),
            sigma_rot: s.rot_deg.max().to_radians().max(floor),
        });
        self.graph.add(VectorPrior {
            key: Key::Scale(e),
            mean: vec![last.calib.s_v, last.calib.s_w],
            sigma: vec![s.s_v.max(floor), s.s_w.max(floor)],
        });
        if self.gnss {
            let c = last.clock_drift * SPEED_OF_LIGHT;
            self.graph.values.clock.insert(e, c);
            self.graph.add(VectorPrior { key: Key::Clock(e), mean: vec![c], sigma: vec![p.clock_drift] });
        }
        if let (Some(l), Some(ls)) = (last.calib.lever, s.lever) {
            self.graph.values.lever = l;
            self.graph.add(VectorPrior { key: Key::Lever, mean: l.iter().copied().collect(), sigma: ls.iter().map(|x| x.max(floor)).collect() });
        }
        Ok(())
    }

    fn process(&mut self, t: f64, rover: &[GnssRawMeasurement], base: &[GnssRawMeasurement]) -> Result<()> {
        let reports = if self.gnss { self.screen.screen(rover) } else { Vec::new() };
        let mut excluded: Vec<(SatId, u8)> = reports.iter().filter(|r| r.rejected).map(|r| (r.sat, r.band)).collect();
        self.run.outliers.extend(reports.into_iter().filter(|r| r.rejected));
        let e = self.next;
        self.next += 1;

        let mut first = self.window.is_empty();
        if !first {
            let (_, tp) = *self.window.back().expect("window");
            let gap = t - tp;
            let step = if gap > MAX_EPOCH_GAP { Err(Error::Timing(format!("{gap:.3} s between states"))) } else { self.propagate(e, t) };
            if let Err(err) = step {
                match err {
                    Error::Timing(msg) => {
                        self.restart(e, t, &msg)?;
                        first = !self.graph.values.nav.contains_key(&e);
                    }
                    other => return Err(other),
                }
            }
        }
        if first {
            self.initialize(e, t, rover, base, &excluded)?;
        }
        self.window.push_back((e, t));

        let mut dd = DdEpoch::default();
        if self.gnss && !rover.is_empty() {
            dd = self.add_gnss(e, t, rover, base, &mut excluded)?;
        }
        if self.window.len() > self.cfg.window {
            self.marginalize_oldest(t)?;
        }
        let solve = self.solve()?;
        let mut ratio = None;
        if self.gnss && self.cfg.ar_mode == ArMode::TcAr {
            if let Some(ev) = self.try_fix(e, t, &dd)? {
                ratio = Some(ev.ratio);
                self.run.fixes.push(ev);
            }
        }
        excluded.sort();
        excluded.dedup();
        self.record(e, t, dd.measurements.len(), excluded.len(), ratio, solve);
        Ok(())
    }
}

/// Tightly coupled calibration over the GNSS epochs of `data` (or a regular
/// grid when there is no GNSS).
pub fn run_calibration(data: SensorData<'_>, setup: &Setup, cfg: &FgoConfig) -> Result<CalibrationRun> {
    let gnss = !data.rover.is_empty();
    let mut est = Estimator::new(cfg, data, setup, gnss)?;
    let (t_lo, t_hi) = span(&data, cfg)?;
    if gnss {
        let rover = group_epochs(data.rover);
        let base = group_epochs(data.base);
        for (k, obs) in rover.range(crate::gnss::epoch_key(t_lo)..=crate::gnss::epoch_key(t_hi)) {
            let t = obs[0].t;
            let b = base.get(k).map(Vec::as_slice).unwrap_or(&[]);
            est.process(t, obs, b)?;
        }
    } else {
        for t in grid(t_lo, t_hi, cfg.dr_interval) {
            est.process(t, &[], &[])?;
        }
    }
    Ok(est.run)
}

fn span(data: &SensorData<'_>, cfg: &FgoConfig) -> Result<(f64, f64)> {
    let (Some(i0), Some(i1)) = (data.imu.first(), data.imu.last()) else {
        return Err(Error::InvalidInput("empty IMU stream".into()));
    };
    let (Some(o0), Some(o1)) = (data.odo.first(), data.odo.last()) else {
        return Err(Error::InvalidInput("empty odometer stream".into()));
    };
    let lo = cfg.t_start.unwrap_or(f64::NEG_INFINITY).max(i0.t).max(o0.t);
    let hi = cfg.t_end.unwrap_or(f64::INFINITY).min(i1.t).min(o1.t);
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!("empty processing span [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

fn grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = ((t1 - t0) / dt + 1e-9).floor() as usize;
    (0..=n).map(|k| t0 + k as f64 * dt).collect()
}

/// Inertial/odometer dead reckoning from `init` with the calibration held
/// fixed. Returns the newest state after each solve.
pub fn dead_reckon(
    imu: &[ImuSample],
    odo: &[OdoSample],
    calib: &CalibState,
    init: &NavState,
    t_end: f64,
    cfg: &FgoConfig,
) -> Result<Vec<NavState>> {
    let setup = Setup {
        origin: GeodeticOrigin::new(0.0, 0.0, 0.0)?,
        base_ecef: Vec3::zeros(),
        initial: calib.clone(),
        lever: Vec3::zeros(),
        heading: 0.0,
    };
    let data = SensorData { rover: &[], base: &[], imu, odo };
    let mut est = Estimator::new(cfg, data, &setup, false)?;
    est.graph.fixed.insert(Key::Extrinsic);
    let d = cfg.dr_priors;
    let mut sigma = SVector::<f64, 15>::zeros();
    for i in 0..3 {
        sigma[i] = d.position;
        sigma[3 + i] = d.velocity;
        sigma[6 + i] = d.attitude_deg.to_radians();
        sigma[9 + i] = d.accel_bias;
        sigma[12 + i] = d.gyro_bias;
    }
    let times = grid(init.t, t_end.min(imu.last().map_or(init.t, |s| s.t)), cfg.dr_interval);
    let mut out = Vec::with_capacity(times.len());
    for (n, &t) in times.iter().enumerate() {
        let e = est.next;
        est.next += 1;
        if n == 0 {
            let mut x = init.clone();
            x.t = t;
            est.graph.values.nav.insert(e, x.clone());
            est.graph.values.scale.insert(e, [calib.s_v, calib.s_w]);
            est.graph.add(NavPrior { epoch: e, mean: x, sigma });
            est.add_motion_factor(e, t)?;
        } else {
            est.propagate(e, t)?;
        }
        est.graph.fixed.insert(Key::Scale(e));
        est.window.push_back((e, t));
        if est.window.len() > cfg.window {
            est.marginalize_oldest(t)?;
        }
        est.solve()?;
        out.push(est.graph.values.nav(e).clone());
    }
    Ok(out)
}
