//! Estimator configuration (JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::solver::SolverConfig;
use crate::gnss::GnssNoise;
use crate::preintegration::{ImuNoise, MotionThresholds, OdoNoise};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeverMode {
    Fixed,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArMode {
    /// Integer ambiguity resolution with fixed-ambiguity factors.
    TcAr,
    /// Float ambiguities only.
    TcWar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuConfig {
    /// m/s/√h
    pub vrw: f64,
    /// deg/√h
    pub arw_deg: f64,
    /// m/s²/√s
    pub accel_bias_rw: f64,
    /// rad/s/√s
    pub gyro_bias_rw: f64,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self { vrw: 0.1, arw_deg: 20.0, accel_bias_rw: 1e-4, gyro_bias_rw: 1e-5 }
    }
}

impl ImuConfig {
    pub fn noise(&self, rate_hz: f64) -> ImuNoise {
        ImuNoise::from_random_walks(self.vrw, self.arw_deg, rate_hz, self.accel_bias_rw, self.gyro_bias_rw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdoConfig {
    /// m/s
    pub v_sigma: f64,
    /// deg/s
    pub w_sigma_deg: f64,
    /// Scale-factor random walk (1/√s); floored at `scale_rw_floor`.
    pub scale_rw: f64,
    pub scale_rw_floor: f64,
    pub floor_pos: f64,
    pub floor_rot: f64,
}

impl Default for OdoConfig {
    fn default() -> Self {
        let n = OdoNoise::default();
        Self {
            v_sigma: 0.01,
            w_sigma_deg: 1.0,
            scale_rw: 0.0,
            scale_rw_floor: 1e-4,
            floor_pos: n.floor_pos,
            floor_rot: n.floor_rot,
        }
    }
}

impl OdoConfig {
    pub fn noise(&self) -> OdoNoise {
        OdoNoise {
            v_sigma: self.v_sigma,
            w_sigma: self.w_sigma_deg.to_radians(),
            floor_pos: self.floor_pos,
            floor_rot: self.floor_rot,
        }
    }

    pub fn scale_sigma_rw(&self) -> f64 {
        self.scale_rw.max(self.scale_rw_floor)
    }
}

/// Prior standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    pub position: f64,
    pub velocity: f64,
    pub roll_pitch_deg: f64,
    pub yaw_deg: f64,
    pub accel_bias: f64,
    pub gyro_bias: f64,
    pub p_bm: f64,
    pub rot_bm_deg: f64,
    pub scale: f64,
    pub lever: f64,
    pub ambiguity_cycles: f64,
    /// m/s
    pub clock_drift: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            position: 1.0,
            velocity: 0.1,
            roll_pitch_deg: 1.0,
            yaw_deg: 5.0,
            accel_bias: 1e-3,
            gyro_bias: 1e-2,
            p_bm: 0.5,
            rot_bm_deg: 5.0,
            scale: 0.05,
            lever: 0.3,
            ambiguity_cycles: 100.0,
            clock_drift: 1.0,
        }
    }
}

/// Initial-state uncertainty for dead reckoning from a known state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrPriors {
    pub position: f64,
    pub velocity: f64,
    pub attitude_deg: f64,
    pub accel_bias: f64,
    pub gyro_bias: f64,
}

impl Default for DrPriors {
    fn default() -> Self {
        Self { position: 0.01, velocity: 0.01, attitude_deg: 0.1, accel_bias: 1e-3, gyro_bias: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FgoConfig {
    /// Window capacity in states.
    pub window: usize,
    pub ar_mode: ArMode,
    pub lever_mode: LeverMode,
    pub ratio_threshold: f64,
    /// Retry AR on high-elevation satellites when the full set fails.
    pub partial_ar: bool,
    pub partial_min_elevation_deg: f64,
    pub huber_delta: f64,
    /// Doppler-prediction screening threshold (σ).
    pub outlier_k1: f64,
    /// IMU-prediction screening threshold (σ).
    pub outlier_k2: f64,
    pub gnss: GnssNoise,
    pub imu: ImuConfig,
    pub odo: OdoConfig,
    pub zupt_sigma: f64,
    pub nhc_sigma: f64,
    pub motion: MotionThresholds,
    /// Receiver clock-drift random walk (m/s/√s).
    pub clock_drift_rw: f64,
    pub priors: Priors,
    pub dr_priors: DrPriors,
    pub solver: SolverConfig,
    /// Processing span (s); defaults to the whole dataset.
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    /// Spacing of dead-reckoning states (s).
    pub dr_interval: f64,
}

impl Default for FgoConfig {
    fn default() -> Self {
        Self {
            window: 3,
            ar_mode: ArMode::TcAr,
            lever_mode: LeverMode::Fixed,
            ratio_threshold: 3.0,
            partial_ar: false,
            partial_min_elevation_deg: 30.0,
            huber_delta: 1.345,
            outlier_k1: 4.0,
            outlier_k2: 3.0,
            gnss: GnssNoise::default(),
            imu: ImuConfig::default(),
            odo: OdoConfig::default(),
            zupt_sigma: 0.01,
            nhc_sigma: 0.05,
            motion: MotionThresholds::default(),
            clock_drift_rw: 0.05,
            priors: Priors::default(),
            dr_priors: DrPriors::default(),
            solver: SolverConfig::default(),
            t_start: None,
            t_end: None,
            dr_interval: 1.0,
        }
    }
}

impl FgoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("config: {m}")));
        if self.window < 2 {
            return bad("window must hold at least 2 states");
        }
        if !(self.ratio_threshold >= 1.0) {
            return bad("ratio_threshold must be at least 1");
        }
        let sigmas = [
            self.gnss.pseudorange_sigma,
            self.gnss.carrier_sigma,
            self.gnss.doppler_sigma,
            self.imu.vrw,
            self.imu.arw_deg,
            self.odo.v_sigma,
            self.odo.w_sigma_deg,
            self.zupt_sigma,
            self.nhc_sigma,
            self.clock_drift_rw,
            self.priors.position,
            self.priors.velocity,
            self.priors.roll_pitch_deg,
            self.priors.yaw_deg,
            self.priors.accel_bias,
            self.priors.gyro_bias,
            self.priors.p_bm,
            self.priors.rot_bm_deg,
            self.priors.scale,
            self.priors.lever,
            self.priors.ambiguity_cycles,
            self.priors.clock_drift,
            self.dr_interval,
        ];
        if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("noise densities, priors and intervals must be positive");
        }
        if !(self.imu.accel_bias_rw > 0.0 && self.imu.gyro_bias_rw > 0.0) {
            return bad("bias random walks must be positive");
        }
        if let (Some(a), Some(b)) = (self.t_start, self.t_end) {
            if !(b > a) {
                return bad("t_end must exceed t_start");
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_partial_files() {
        let c = FgoConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<FgoConfig>(&s).unwrap(), c);
        let p: FgoConfig = serde_json::from_str(r#"{"ar_mode": "tc_war", "lever_mode": "online", "window": 5}"#).unwrap();
        assert_eq!(p.ar_mode, ArMode::TcWar);
        assert_eq!(p.lever_mode, LeverMode::Online);
        assert_eq!(p.window, 5);
        assert_eq!(p.priors, Priors::default());
        assert!(FgoConfig { window: 1, ..c }.validate().is_err());
    }
}
