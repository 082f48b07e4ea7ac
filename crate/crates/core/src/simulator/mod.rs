//! Synthetic GNSS/IMU/odometer datasets with a complete truth record.
//!
//! A scenario fixes the trajectory, constellation, sensor noise, true
//! calibration, clock behaviour and injected faults. Every random draw comes
//! from a ChaCha stream derived from the scenario seed, one stream per
//! purpose, so datasets are reproducible bit for bit.

pub mod constellation;
pub mod faults;
pub mod io;
pub mod trajectory;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::fgo::state::{CalibState, NavState};
use crate::geomath::{
    azimuth_elevation, rot_from_rpy, rot_to_quat, GeodeticOrigin, Quat, Vec3, GRAVITY, SPEED_OF_LIGHT,
};
use crate::gnss::{wavelength, GnssNoise, GnssRawMeasurement, SatId};
use crate::preintegration::{ImuNoise, ImuSample, OdoNoise, OdoSample};
use crate::{Error, Result};

pub use constellation::{generate_constellation, ConstellationSpec, Satellite};
pub use faults::{FaultSpec, InjectedOutlier, InjectedSlip, OutlierSpec, SlipSpec};
pub use trajectory::{generate_trajectory, Phase, Trajectory, TrajectorySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginSpec {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub height: f64,
}

impl OriginSpec {
    pub fn geodetic(&self) -> Result<GeodeticOrigin> {
        GeodeticOrigin::new(self.lat_deg.to_radians(), self.lon_deg.to_radians(), self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorNoiseSpec {
    pub pseudorange_sigma: f64,
    pub carrier_sigma: f64,
    /// Range-rate noise at zenith (m/s), elevation-weighted like the others.
    pub doppler_sigma: f64,
    pub gyro_bias_deg_h: f64,
    pub accel_bias_mgal: f64,
    pub arw_deg_sqrt_h: f64,
    pub vrw_m_s_sqrt_h: f64,
    pub odo_v_sigma: f64,
    pub odo_w_sigma_deg: f64,
    pub scale_v: f64,
    pub scale_w: f64,
    /// Scale random-walk densities (1/√s).
    pub scale_v_rw: f64,
    pub scale_w_rw: f64,
    pub gnss_rate: f64,
    pub imu_rate: f64,
    pub odo_rate: f64,
}

impl Default for SensorNoiseSpec {
    fn default() -> Self {
        Self {
            pseudorange_sigma: 0.3,
            carrier_sigma: 0.003,
            doppler_sigma: 0.05,
            gyro_bias_deg_h: 900.0,
            accel_bias_mgal: 5.0,
            arw_deg_sqrt_h: 20.0,
            vrw_m_s_sqrt_h: 0.1,
            odo_v_sigma: 0.01,
            odo_w_sigma_deg: 1.0,
            scale_v: 0.0,
            scale_w: 0.0,
            scale_v_rw: 0.0,
            scale_w_rw: 0.0,
            gnss_rate: 1.0,
            imu_rate: 100.0,
            odo_rate: 25.0,
        }
    }
}

impl SensorNoiseSpec {
    /// All white noise switched off; biases and rates unchanged.
    pub fn noiseless() -> Self {
        Self {
            pseudorange_sigma: 0.0,
            carrier_sigma: 0.0,
            doppler_sigma: 0.0,
            arw_deg_sqrt_h: 0.0,
            vrw_m_s_sqrt_h: 0.0,
            odo_v_sigma: 0.0,
            odo_w_sigma_deg: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.pseudorange_sigma,
            self.carrier_sigma,
            self.doppler_sigma,
            self.gyro_bias_deg_h.abs(),
            self.accel_bias_mgal.abs(),
            self.arw_deg_sqrt_h,
            self.vrw_m_s_sqrt_h,
            self.odo_v_sigma,
            self.odo_w_sigma_deg,
            self.scale_v_rw,
            self.scale_w_rw,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidInput("noise levels must be non-negative".into()));
        }
        for rate in [self.gnss_rate, self.imu_rate, self.odo_rate] {
            let ratio = 1.0 / (rate * trajectory::GRID_DT);
            if !(rate > 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("rate {rate} Hz must divide 1 kHz")));
            }
        }
        if self.scale_v <= -1.0 || self.scale_w <= -1.0 {
            return Err(Error::InvalidInput("scale factors must exceed -1".into()));
        }
        Ok(())
    }

    pub fn gnss_noise(&self) -> GnssNoise {
        GnssNoise {
            pseudorange_sigma: self.pseudorange_sigma,
            carrier_sigma: self.carrier_sigma,
            doppler_sigma: self.doppler_sigma,
        }
    }

    pub fn imu_noise(&self) -> ImuNoise {
        ImuNoise::from_random_walks(self.vrw_m_s_sqrt_h, self.arw_deg_sqrt_h, self.imu_rate, 0.0, 0.0)
    }

    pub fn odo_noise(&self) -> OdoNoise {
        OdoNoise { v_sigma: self.odo_v_sigma, w_sigma: self.odo_w_sigma_deg.to_radians(), ..OdoNoise::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub p_bm: Vec3,
    /// Mount-to-body rotation as roll, pitch, yaw (deg).
    pub rpy_bm_deg: Vec3,
    pub lever_arm: Vec3,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            p_bm: Vec3::new(0.2, -0.3, 0.1),
            rpy_bm_deg: Vec3::new(2.0, -1.0, 3.0),
            lever_arm: Vec3::new(0.1, 0.2, 0.5),
        }
    }
}

impl CalibrationSpec {
    pub fn r_bm(&self) -> crate::geomath::Mat3 {
        let r = self.rpy_bm_deg.map(f64::to_radians);
        rot_from_rpy(r.x, r.y, r.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockSpec {
    /// Initial receiver clock offsets are uniform in ±this (s).
    pub offset_max: f64,
    /// Initial receiver clock drifts are uniform in ±this (s/s).
    pub drift_max: f64,
    /// Rover clock-drift random walk (s/s/√s).
    pub drift_rw: f64,
}

impl Default for ClockSpec {
    fn default() -> Self {
        Self { offset_max: 1e-3, drift_max: 1e-8, drift_rw: 1e-10 }
    }
}

/// Spread of the initial calibration guess and heading around the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub p_bm_sigma: f64,
    pub rot_sigma_deg: f64,
    pub scale_sigma: f64,
    pub heading_sigma_deg: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self { p_bm_sigma: 0.2, rot_sigma_deg: 2.0, scale_sigma: 0.01, heading_sigma_deg: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Seed for the constellation geometry, shared across Monte-Carlo runs.
    pub geometry_seed: u64,
    pub origin: OriginSpec,
    /// Base antenna in the world frame (m).
    pub base_enu: Vec3,
    pub trajectory: TrajectorySpec,
    pub constellation: ConstellationSpec,
    pub noise: SensorNoiseSpec,
    pub calibration: CalibrationSpec,
    pub clocks: ClockSpec,
    pub init: InitSpec,
    pub faults: FaultSpec,
    /// End of GNSS-aided calibration; dead reckoning starts here.
    pub outage_start: f64,
}

impl Scenario {
    /// Stationary start, straight acceleration, circling until 150 s, then a
    /// 300 s drive used for dead-reckoning evaluation.
    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            name: "default".into(),
            seed,
            geometry_seed: 2024,
            origin: OriginSpec { lat_deg: 22.3, lon_deg: 114.17, height: 5.0 },
            base_enu: Vec3::new(2800.0, 2850.0, 0.0),
            trajectory: TrajectorySpec::with_drive_default(),
            constellation: ConstellationSpec::default(),
            noise: SensorNoiseSpec::default(),
            calibration: CalibrationSpec::default(),
            clocks: ClockSpec::default(),
            init: InitSpec::default(),
            faults: FaultSpec::default(),
            outage_start: 150.0,
        }
    }

    /// Only the 150 s calibration trajectory.
    pub fn calibration_only(seed: u64) -> Self {
        Self {
            name: "calibration".into(),
            trajectory: TrajectorySpec::calibration_default(),
            ..Self::default_with_seed(seed)
        }
    }

    pub fn by_name(name: &str, seed: u64) -> Result<Self> {
        match name {
            "default" => Ok(Self::default_with_seed(seed)),
            "calibration" => Ok(Self::calibration_only(seed)),
            _ => Err(Error::InvalidInput(format!("unknown scenario '{name}' (default, calibration)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        self.noise.validate()?;
        self.origin.geodetic()?;
        crate::gnss::LeverArm::new(self.calibration.lever_arm, false)?;
        if !(self.outage_start > 0.0) {
            return Err(Error::InvalidInput("outage_start must be positive".into()));
        }
        Ok(())
    }
}

/// Receiver clock with a piecewise-linear drift between 1 s knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockTruth {
    pub offset0: f64,
    /// Drift (s/s) at integer seconds.
    pub drift_knots: Vec<f64>,
    #[serde(skip)]
    offsets: Vec<f64>,
}

impl ClockTruth {
    fn new<R: Rng>(spec: &ClockSpec, duration: f64, random_walk: bool, rng: &mut R) -> Self {
        let offset0 = uniform(rng, spec.offset_max);
        let mut d = uniform(rng, spec.drift_max);
        let n = duration.ceil() as usize + 2;
        let mut drift_knots = Vec::with_capacity(n);
        for _ in 0..n {
            drift_knots.push(d);
            if random_walk {
                d += spec.drift_rw * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut c = Self { offset0, drift_knots, offsets: Vec::new() };
        c.rebuild();
        c
    }

    pub(crate) fn rebuild(&mut self) {
        let mut acc = self.offset0;
        self.offsets = Vec::with_capacity(self.drift_knots.len());
        for (i, d) in self.drift_knots.iter().enumerate() {
            if i > 0 {
                acc += 0.5 * (self.drift_knots[i - 1] + d);
            }
            self.offsets.push(acc);
        }
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let i = (t.max(0.0).floor() as usize).min(self.drift_knots.len() - 2);
        (i, t - i as f64)
    }

    pub fn drift(&self, t: f64) -> f64 {
        let (i, f) = self.locate(t);
        self.drift_knots[i] + f * (self.drift_knots[i + 1] - self.drift_knots[i])
    }

    /// Offset (s), the exact integral of the drift.
    pub fn offset(&self, t: f64) -> f64 {
        let (i, f) = self.locate(t);
        let d0 = self.drift_knots[i];
        self.offsets[i] + f * d0 + 0.5 * f * f * (self.drift_knots[i + 1] - d0)
    }
}

/// True state of the IMU at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthState {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    pub q: Quat,
    pub clock_drift: f64,
}

/// True single-differenced (rover minus base) ambiguity, valid from `from`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityTruth {
    pub sat: SatId,
    pub band: u8,
    pub from: f64,
    pub n_sd: i64,
}

/// Initial calibration guess and heading handed to the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub calibration: CalibState,
    /// IMU heading hint (rad), as from an external heading source.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub calibration: CalibState,
    pub lever_arm: Vec3,
    pub ba: Vec3,
    pub bg: Vec3,
    pub ambiguities: Vec<AmbiguityTruth>,
    pub outliers: Vec<InjectedOutlier>,
    pub slips: Vec<InjectedSlip>,
    pub rover_clock: ClockTruth,
    pub initial_guess: InitialGuess,
    /// 10 Hz IMU states (not serialized to scenario.json; see truth.csv).
    #[serde(skip)]
    pub states: Vec<TruthState>,
}

impl TruthRecord {
    /// True SD ambiguity of a rover/base satellite pair at time `t`.
    pub fn n_sd(&self, sat: SatId, band: u8, t: f64) -> Option<i64> {
        self.ambiguities
            .iter()
            .filter(|a| a.sat == sat && a.band == band && a.from <= t + 1e-9)
            .max_by(|a, b| a.from.total_cmp(&b.from))
            .map(|a| a.n_sd)
    }

    /// Linear interpolation of the 10 Hz truth (rotation from the nearest sample).
    pub fn state_at(&self, t: f64) -> Option<TruthState> {
        let i = self.states.partition_point(|s| s.t < t - 1e-9);
        let s1 = self.states.get(i)?;
        if (s1.t - t).abs() < 1e-9 {
            return Some(s1.clone());
        }
        let s0 = self.states.get(i.checked_sub(1)?)?;
        let f = (t - s0.t) / (s1.t - s0.t);
        Some(TruthState {
            t,
            p: s0.p + f * (s1.p - s0.p),
            v: s0.v + f * (s1.v - s0.v),
            q: if f < 0.5 { s0.q } else { s1.q },
            clock_drift: s0.clock_drift + f * (s1.clock_drift - s0.clock_drift),
        })
    }

    pub fn nav_state(&self, t: f64) -> Option<NavState> {
        let s = self.state_at(t)?;
        Some(NavState { t, p: s.p, v: s.v, q: s.q, ba: self.ba, bg: self.bg })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub scenario: Scenario,
    pub rover: Vec<GnssRawMeasurement>,
    pub base: Vec<GnssRawMeasurement>,
    pub imu: Vec<ImuSample>,
    pub odo: Vec<OdoSample>,
    pub truth: TruthRecord,
}

impl Dataset {
    pub fn origin(&self) -> Result<GeodeticOrigin> {
        self.scenario.origin.geodetic()
    }

    pub fn base_ecef(&self) -> Result<Vec3> {
        Ok(self.origin()?.enu_to_ecef(&self.scenario.base_enu))
    }

    pub fn duration(&self) -> f64 {
        self.imu.last().map_or(0.0, |s| s.t)
    }
}

/// Purpose-specific random streams.
#[derive(Clone, Copy)]
enum Stream {
    Imu = 1,
    Odo,
    Rover,
    Base,
    Clocks,
    Ambiguity,
    Faults,
    Init,
    Bias,
    Atmosphere,
}

fn rng_for(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(s as u64);
    r
}

fn uniform<R: Rng>(rng: &mut R, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..half)
    } else {
        0.0
    }
}

fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        sigma * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    }
}

fn gauss3<R: Rng>(rng: &mut R, sigma: f64) -> Vec3 {
    Vec3::new(gauss(rng, sigma), gauss(rng, sigma), gauss(rng, sigma))
}

/// Per-axis constant of magnitude `value` with a random sign.
fn signed3<R: Rng>(rng: &mut R, value: f64) -> Vec3 {
    Vec3::from_fn(|_, _| if rng.random_bool(0.5) { value } else { -value })
}

/// Generates a dataset from a scenario.
pub fn generate(scenario: &Scenario) -> Result<Dataset> {
    scenario.validate()?;
    let traj = generate_trajectory(&scenario.trajectory)?;
    generate_with(scenario, &traj)
}

struct SatAtmosphere {
    iono: f64,
    iono_rate: f64,
    tropo: f64,
    code_bias: BTreeMap<u8, f64>,
    phase_bias: BTreeMap<u8, f64>,
}

/// Generates a dataset on a precomputed trajectory (which must come from
/// `scenario.trajectory`).
pub fn generate_with(scenario: &Scenario, traj: &Trajectory) -> Result<Dataset> {
    scenario.validate()?;
    let seed = scenario.seed;
    let noise = &scenario.noise;
    let origin = scenario.origin.geodetic()?;
    let duration = traj.duration();
    let calib = &scenario.calibration;
    let r_bm = calib.r_bm();
    let p_bm = calib.p_bm;
    let lever = calib.lever_arm;

    let mut geo_rng = ChaCha8Rng::seed_from_u64(scenario.geometry_seed);
    let sats = generate_constellation(&scenario.constellation, &origin, duration, &mut geo_rng)?;

    // Sensor biases.
    let mut rng = rng_for(seed, Stream::Bias);
    let bg = signed3(&mut rng, (noise.gyro_bias_deg_h / 3600.0).to_radians());
    let ba = signed3(&mut rng, noise.accel_bias_mgal * 1e-5);

    // IMU.
    let g_w = Vec3::new(0.0, 0.0, -GRAVITY);
    let imu_noise = noise.imu_noise();
    let mut rng = rng_for(seed, Stream::Imu);
    let imu_step = (1.0 / (noise.imu_rate * trajectory::GRID_DT)).round() as usize;
    let mut imu = Vec::new();
    for i in (0..traj.samples.len()).step_by(imu_step) {
        let b = traj.body(i, &r_bm, &p_bm);
        imu.push(ImuSample {
            t: b.t,
            accel: b.r_wb.transpose() * (b.a - g_w) + ba + gauss3(&mut rng, imu_noise.accel_sigma),
            gyro: b.w + bg + gauss3(&mut rng, imu_noise.gyro_sigma),
        });
    }

    // Odometer.
    let mut rng = rng_for(seed, Stream::Odo);
    let odo_step = (1.0 / (noise.odo_rate * trajectory::GRID_DT)).round() as usize;
    let odo_dt = 1.0 / noise.odo_rate;
    let (mut s_v, mut s_w) = (noise.scale_v, noise.scale_w);
    let mut odo = Vec::new();
    for i in (0..traj.samples.len()).step_by(odo_step) {
        let k = &traj.samples[i];
        odo.push(OdoSample {
            t: k.t,
            v: k.speed / (1.0 + s_v) + gauss(&mut rng, noise.odo_v_sigma),
            omega: k.heading_rate / (1.0 + s_w) + gauss(&mut rng, noise.odo_w_sigma_deg.to_radians()),
        });
        s_v += gauss(&mut rng, noise.scale_v_rw * odo_dt.sqrt());
        s_w += gauss(&mut rng, noise.scale_w_rw * odo_dt.sqrt());
    }

    // Clocks.
    let mut rng = rng_for(seed, Stream::Clocks);
    let rover_clock = ClockTruth::new(&scenario.clocks, duration, true, &mut rng);
    let base_clock = ClockTruth::new(&scenario.clocks, duration, false, &mut rng);

    // Per-satellite atmosphere and hardware biases, common to both receivers.
    let mut rng = rng_for(seed, Stream::Atmosphere);
    let bands = &scenario.constellation.bands;
    let atmo: BTreeMap<SatId, SatAtmosphere> = sats
        .iter()
        .map(|s| {
            let a = SatAtmosphere {
                iono: rng.random_range(1.0..8.0),
                iono_rate: rng.random_range(-2e-3..2e-3),
                tropo: rng.random_range(2.3..8.0),
                code_bias: bands.iter().map(|&b| (b, rng.random_range(-3.0..3.0))).collect(),
                phase_bias: bands.iter().map(|&b| (b, rng.random_range(-0.5..0.5))).collect(),
            };
            (s.id, a)
        })
        .collect();
    let receiver_code_bias: [BTreeMap<u8, f64>; 2] =
        std::array::from_fn(|_| bands.iter().map(|&b| (b, rng.random_range(-5.0..5.0))).collect());

    // Integer ambiguities per receiver.
    let mut rng = rng_for(seed, Stream::Ambiguity);
    let mut n_int: [BTreeMap<(SatId, u8), i64>; 2] = Default::default();
    for s in &sats {
        for &b in bands {
            for n in n_int.iter_mut() {
                n.insert((s.id, b), rng.random_range(-1_000_000..=1_000_000));
            }
        }
    }

    let base_ecef = origin.enu_to_ecef(&scenario.base_enu);
    let r_en = origin.ecef_enu_rotation();
    let origin_ecef = origin.to_ecef();
    let gnss_step = (1.0 / (noise.gnss_rate * trajectory::GRID_DT)).round() as usize;
    let mut rover_rng = rng_for(seed, Stream::Rover);
    let mut base_rng = rng_for(seed, Stream::Base);
    let mut rover = Vec::new();
    let mut base = Vec::new();
    for i in (0..traj.samples.len()).step_by(gnss_step) {
        let b = traj.body(i, &r_bm, &p_bm);
        let t = b.t;
        let ant_w = b.p + b.r_wb * lever;
        let ant_vw = b.v + b.r_wb * b.w.cross(&lever);
        let rx = [(origin_ecef + r_en * ant_w, r_en * ant_vw), (base_ecef, Vec3::zeros())];
        let clocks = [&rover_clock, &base_clock];
        for (k, (pos, vel)) in rx.iter().enumerate() {
            let rng = if k == 0 { &mut rover_rng } else { &mut base_rng };
            let el_from = if k == 0 { origin_ecef } else { base_ecef };
            let out = if k == 0 { &mut rover } else { &mut base };
            for s in &sats {
                let sp = s.position(t);
                let sv = s.velocity(t);
                let (az, el) = azimuth_elevation(&origin, &el_from, &sp);
                let d = sp - pos;
                let rho = d.norm();
                let rate = d.dot(&(sv - vel)) / rho;
                let a = &atmo[&s.id];
                let w = (1.0 + 1.0 / el.sin()).sqrt();
                for &band in bands {
                    let lambda = wavelength(s.id.constellation, band)?;
                    let f_ratio = (lambda / wavelength(s.id.constellation, 1).unwrap_or(lambda)).powi(2);
                    let iono = (a.iono + a.iono_rate * t) * f_ratio;
                    let clk = SPEED_OF_LIGHT * (clocks[k].offset(t) - s.clock(t));
                    let p = rho + clk + iono + a.tropo + receiver_code_bias[k][&band] - a.code_bias[&band]
                        + gauss(rng, noise.pseudorange_sigma * w);
                    let l = rho + clk - iono
                        + a.tropo
                        + lambda * (n_int[k][&(s.id, band)] as f64 - a.phase_bias[&band])
                        + gauss(rng, noise.carrier_sigma * w);
                    let rr = rate + SPEED_OF_LIGHT * (clocks[k].drift(t) - s.clock_drift)
                        + gauss(rng, noise.doppler_sigma * w);
                    out.push(GnssRawMeasurement {
                        t,
                        sat: s.id,
                        band,
                        wavelength: lambda,
                        pseudorange: p,
                        // Held in cycles on disk; keep the in-memory value identical.
                        carrier: (l / lambda) * lambda,
                        doppler: rr / lambda,
                        sat_pos: sp,
                        sat_vel: sv,
                        sat_clock: s.clock(t),
                        sat_clock_drift: s.clock_drift,
                        elevation: el,
                        azimuth: az,
                        lli: false,
                    });
                }
            }
        }
    }

    let mut ambiguities = Vec::new();
    for s in &sats {
        for &band in bands {
            let n_sd = n_int[0][&(s.id, band)] - n_int[1][&(s.id, band)];
            ambiguities.push(AmbiguityTruth { sat: s.id, band, from: 0.0, n_sd });
        }
    }

    // Faults.
    let mut rng = rng_for(seed, Stream::Faults);
    let outliers = match &scenario.faults.outliers {
        Some(spec) => faults::inject_outliers(&mut rover, spec, &mut rng)?,
        None => Vec::new(),
    };
    let slips = faults::inject_cycle_slips(&mut rover, &scenario.faults.cycle_slips)?;
    for s in &slips {
        let n = ambiguities
            .iter()
            .filter(|a| a.sat == s.sat && a.band == s.band && a.from <= s.t)
            .max_by(|a, b| a.from.total_cmp(&b.from))
            .map_or(0, |a| a.n_sd);
        ambiguities.push(AmbiguityTruth { sat: s.sat, band: s.band, from: s.t, n_sd: n + s.cycles });
    }

    // Truth states at 10 Hz.
    let truth_step = (0.1 / trajectory::GRID_DT).round() as usize;
    let states = (0..traj.samples.len())
        .step_by(truth_step)
        .map(|i| {
            let b = traj.body(i, &r_bm, &p_bm);
            TruthState { t: b.t, p: b.p, v: b.v, q: rot_to_quat(&b.r_wb), clock_drift: rover_clock.drift(b.t) }
        })
        .collect();

    let calibration = CalibState {
        s_v: noise.scale_v,
        s_w: noise.scale_w,
        p_bm,
        q_bm: rot_to_quat(&r_bm),
        lever: None,
    };
    let mut rng = rng_for(seed, Stream::Init);
    let initial_guess = draw_initial_guess(&calibration, &scenario.init, traj, &r_bm, &mut rng);

    Ok(Dataset {
        scenario: scenario.clone(),
        rover,
        base,
        imu,
        odo,
        truth: TruthRecord {
            calibration,
            lever_arm: lever,
            ba,
            bg,
            ambiguities,
            outliers,
            slips,
            rover_clock,
            initial_guess,
            states,
        },
    })
}

fn draw_initial_guess<R: Rng>(
    truth: &CalibState,
    spec: &InitSpec,
    traj: &Trajectory,
    r_bm: &crate::geomath::Mat3,
    rng: &mut R,
) -> InitialGuess {
    let dtheta = gauss3(rng, spec.rot_sigma_deg.to_radians());
    let calibration = CalibState {
        s_v: truth.s_v + gauss(rng, spec.scale_sigma),
        s_w: truth.s_w + gauss(rng, spec.scale_sigma),
        p_bm: truth.p_bm + gauss3(rng, spec.p_bm_sigma),
        q_bm: crate::geomath::quat_boxplus(&truth.q_bm, &dtheta),
        lever: None,
    };
    let b0 = traj.body(0, r_bm, &Vec3::zeros());
    let yaw = crate::geomath::rpy_from_rot(&b0.r_wb).z;
    InitialGuess { calibration, heading: crate::geomath::wrap_angle(yaw + gauss(rng, spec.heading_sigma_deg.to_radians())) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnss::{dd_range, form_double_differences, group_epochs};

    fn short(noise: SensorNoiseSpec) -> Scenario {
        let mut s = Scenario::calibration_only(3);
        s.trajectory.phases.truncate(3);
        s.noise = noise;
        s
    }

    #[test]
    fn clock_offset_integrates_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = ClockTruth::new(&ClockSpec::default(), 20.0, true, &mut rng);
        let h = 1e-4;
        for t in [0.3, 5.0, 7.77, 12.5] {
            let fd = (c.offset(t + h) - c.offset(t - h)) / (2.0 * h);
            assert!((fd - c.drift(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_double_differences_are_exact() {
        let d = generate(&short(SensorNoiseSpec::noiseless())).unwrap();
        let origin = d.origin().unwrap();
        let base = d.base_ecef().unwrap();
        let (r_ep, b_ep) = (group_epochs(&d.rover), group_epochs(&d.base));
        let r_bm = d.scenario.calibration.r_bm();
        let traj = generate_trajectory(&d.scenario.trajectory).unwrap();
        for (key, rov) in r_ep.iter().step_by(7) {
            let t = rov[0].t;
            let b = traj.body(traj.index(t).unwrap(), &r_bm, &d.scenario.calibration.p_bm);
            let ant = origin.enu_to_ecef(&(b.p + b.r_wb * d.scenario.calibration.lever_arm));
            let ep = form_double_differences(rov, &b_ep[key], &ant, &d.scenario.noise.gnss_noise(), &[]).unwrap();
            assert!(ep.measurements.len() >= 30);
            for dd in &ep.measurements {
                let rho = dd_range(dd, &ant, &base);
                assert!((dd.pseudorange.unwrap() - rho).abs() < 1e-6);
                let n = d.truth.n_sd(dd.sat, dd.band, t).unwrap() - d.truth.n_sd(dd.reference, dd.band, t).unwrap();
                let cycles = (dd.carrier.unwrap() - rho) / dd.wavelength;
                assert!((cycles - n as f64).abs() < 1e-6, "{cycles} vs {n}");
            }
        }
    }

    #[test]
    fn doppler_matches_true_range_rate() {
        let d = generate(&short(SensorNoiseSpec::noiseless())).unwrap();
        let clk = &d.truth.rover_clock;
        let origin = d.origin().unwrap();
        let calib = &d.scenario.calibration;
        let traj = generate_trajectory(&d.scenario.trajectory).unwrap();
        for m in d.rover.iter().filter(|m| m.t > 23.0 && m.t < 44.0).step_by(13) {
            let ant = |t: f64| {
                let b = traj.body(traj.index(t).unwrap(), &calib.r_bm(), &calib.p_bm);
                origin.enu_to_ecef(&(b.p + b.r_wb * calib.lever_arm))
            };
            let sat = generate_constellation(
                &d.scenario.constellation,
                &origin,
                traj.duration(),
                &mut ChaCha8Rng::seed_from_u64(d.scenario.geometry_seed),
            )
            .unwrap()
            .into_iter()
            .find(|s| s.id == m.sat)
            .unwrap();
            // Large enough that rounding of the ~2e7 m range does not dominate.
            let h = 0.05;
            let range = |t: f64| (sat.position(t) - ant(t)).norm();
            let cd = |h: f64| (range(m.t + h) - range(m.t - h)) / (2.0 * h);
            let fd = (4.0 * cd(h) - cd(2.0 * h)) / 3.0;
            let obs = m.range_rate_obs() - SPEED_OF_LIGHT * (clk.drift(m.t) - m.sat_clock_drift);
            assert!((obs - fd).abs() < 1e-6, "{obs} vs {fd}");
        }
    }

    #[test]
    fn odometer_truth_relation() {
        let mut noise = SensorNoiseSpec::noiseless();
        noise.scale_v = 0.02;
        let d = generate(&short(noise)).unwrap();
        let traj = generate_trajectory(&d.scenario.trajectory).unwrap();
        for o in &d.odo {
            let k = &traj.samples[traj.index(o.t).unwrap()];
            assert!((o.v * 1.02 - k.speed).abs() < 1e-12);
        }
        // The mount origin moves in the horizontal plane only.
        let r_bm = d.scenario.calibration.r_bm();
        for i in (0..traj.samples.len()).step_by(500) {
            let b = traj.body(i, &r_bm, &d.scenario.calibration.p_bm);
            let v_m = b.v + b.r_wb * b.w.cross(&d.scenario.calibration.p_bm);
            assert!(v_m.z.abs() < 1e-12);
        }
    }

    #[test]
    fn pseudorange_noise_level() {
        let d = generate(&short(SensorNoiseSpec::default())).unwrap();
        let noiseless = generate(&short(SensorNoiseSpec::noiseless())).unwrap();
        let mut z = Vec::new();
        for (a, b) in d.rover.iter().zip(&noiseless.rover) {
            let sigma = 0.3 * (1.0 + 1.0 / a.elevation.sin()).sqrt();
            z.push((a.pseudorange - b.pseudorange) / sigma);
        }
        let n = z.len() as f64;
        let std = (z.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        assert!(n > 1500.0 && (std - 1.0).abs() < 0.1, "std {std} over {n}");
    }

    #[test]
    fn same_seed_same_data_different_seed_independent() {
        let a = generate(&short(SensorNoiseSpec::default())).unwrap();
        let b = generate(&short(SensorNoiseSpec::default())).unwrap();
        assert_eq!(a.rover, b.rover);
        assert_eq!(a.imu, b.imu);
        let mut s = short(SensorNoiseSpec::default());
        s.seed = 4;
        let c = generate(&s).unwrap();
        let xs: Vec<f64> = a.imu.iter().map(|s| s.gyro.x - a.truth.bg.x).collect();
        let ys: Vec<f64> = c.imu.iter().map(|s| s.gyro.x - c.truth.bg.x).collect();
        let dot: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let corr = dot / (xs.iter().map(|x| x * x).sum::<f64>() * ys.iter().map(|y| y * y).sum::<f64>()).sqrt();
        assert!(corr.abs() < 0.1);
    }
}
