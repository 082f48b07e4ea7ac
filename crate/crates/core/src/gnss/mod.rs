//! GNSS raw measurements, double differencing and the antenna lever arm.
//!
//! Pseudo-range and carrier phase are differenced between rover and base
//! and then against a per-constellation, per-band reference satellite (the
//! highest common satellite). Receiver clocks, satellite clocks, hardware
//! biases and the common atmosphere cancel; what remains is the double
//! differenced range plus, for the carrier, an integer number of cycles.

pub mod io;
pub mod outlier;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fgo::state::NavState;
use crate::geomath::{skew, Mat3, Vec3, SPEED_OF_LIGHT};
use crate::{Error, Result};

pub use outlier::{screen_stage2, DopplerScreen, OutlierReport, ScreenStage};

/// Satellite identifier, e.g. `G05`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SatId {
    pub constellation: char,
    pub prn: u16,
}

impl SatId {
    pub fn new(constellation: char, prn: u16) -> Self {
        Self { constellation, prn }
    }
}

impl fmt::Display for SatId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:02}", self.constellation, self.prn)
    }
}

impl FromStr for SatId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        let c = chars
            .next()
            .filter(|c| c.is_ascii_alphabetic())
            .ok_or_else(|| Error::InvalidInput(format!("bad satellite id '{s}'")))?;
        let prn = chars
            .as_str()
            .parse::<u16>()
            .map_err(|_| Error::InvalidInput(format!("bad satellite id '{s}'")))?;
        Ok(Self::new(c, prn))
    }
}

impl From<SatId> for String {
    fn from(s: SatId) -> Self {
        s.to_string()
    }
}

impl TryFrom<String> for SatId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Carrier wavelength (m) of a band for a constellation.
pub fn wavelength(constellation: char, band: u8) -> Result<f64> {
    let freq = match (constellation, band) {
        ('G', 1) | ('E', 1) => 1_575.42e6,
        ('G', 2) => 1_227.60e6,
        ('G', 5) | ('E', 5) => 1_176.45e6,
        ('C', 1) => 1_561.098e6,
        ('C', 3) => 1_268.52e6,
        _ => {
            return Err(Error::InvalidInput(format!(
                "unknown band {band} for constellation {constellation}"
            )))
        }
    };
    Ok(SPEED_OF_LIGHT / freq)
}

/// One raw observation of one satellite on one band at one receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnssRawMeasurement {
    pub t: f64,
    pub sat: SatId,
    pub band: u8,
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// Pseudo-range (m).
    pub pseudorange: f64,
    /// Carrier phase (m).
    pub carrier: f64,
    /// Doppler (Hz), positive for a receding satellite.
    pub doppler: f64,
    pub sat_pos: Vec3,
    pub sat_vel: Vec3,
    /// Satellite clock offset (s).
    pub sat_clock: f64,
    /// Satellite clock drift (s/s).
    pub sat_clock_drift: f64,
    /// Elevation (rad) seen from the receiver.
    pub elevation: f64,
    /// Azimuth (rad) seen from the receiver.
    pub azimuth: f64,
    /// Loss-of-lock indicator: the carrier ambiguity may have changed.
    pub lli: bool,
}

impl GnssRawMeasurement {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) {
            return Err(Error::InvalidInput(format!("{}: wavelength must be positive", self.sat)));
        }
        if !(self.elevation > 0.0 && self.elevation <= std::f64::consts::FRAC_PI_2 + 1e-12) {
            return Err(Error::BelowHorizon(self.elevation));
        }
        Ok(())
    }

    /// Range-rate observation `λD` (m/s).
    pub fn range_rate_obs(&self) -> f64 {
        self.wavelength * self.doppler
    }
}

/// Double-differenced pseudo-range and carrier for satellite `sat` against `reference`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdMeasurement {
    pub t: f64,
    pub reference: SatId,
    pub sat: SatId,
    pub band: u8,
    /// `(rover_j − base_j) − (rover_i − base_i)` pseudo-range (m); `None` when screened out.
    pub pseudorange: Option<f64>,
    /// Same combination of carrier phase (m); `None` after loss of lock.
    pub carrier: Option<f64>,
    pub wavelength: f64,
    pub var_pseudorange: f64,
    pub var_carrier: f64,
    /// Unit vectors from the rover to the reference and the other satellite (ECEF).
    pub los_reference: Vec3,
    pub los_sat: Vec3,
    pub ref_pos: Vec3,
    pub sat_pos: Vec3,
    /// Elevation of the non-reference satellite (rad).
    pub elevation: f64,
}

/// Per-leg noise scale factors of the elevation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnssNoise {
    /// Zenith-scale pseudo-range sigma (m).
    pub pseudorange_sigma: f64,
    /// Zenith-scale carrier sigma (m).
    pub carrier_sigma: f64,
    /// Zenith-scale range-rate sigma (m/s).
    pub doppler_sigma: f64,
}

impl Default for GnssNoise {
    fn default() -> Self {
        Self { pseudorange_sigma: 0.3, carrier_sigma: 0.003, doppler_sigma: 0.05 }
    }
}

/// Elevation-dependent variance `(σ₀·√(1 + 1/sin El))²`.
pub fn elevation_variance(elevation: f64, sigma0: f64) -> Result<f64> {
    if !(elevation > 0.0) {
        return Err(Error::BelowHorizon(elevation));
    }
    Ok(sigma0 * sigma0 * (1.0 + 1.0 / elevation.sin()))
}

/// Outcome of double differencing one epoch.
#[derive(Debug, Clone, Default)]
pub struct DdEpoch {
    pub measurements: Vec<DdMeasurement>,
    /// Groups (constellation, band) skipped for lack of common satellites.
    pub diagnostics: Vec<String>,
}

/// Forms double differences of one epoch.
///
/// `excluded_pseudorange` lists rover satellite/band pairs whose pseudo-range
/// was screened out; their carrier is still differenced. Reference candidates
/// must carry both observables.
pub fn form_double_differences(
    rover: &[GnssRawMeasurement],
    base: &[GnssRawMeasurement],
    rover_ecef: &Vec3,
    noise: &GnssNoise,
    excluded_pseudorange: &[(SatId, u8)],
) -> Result<DdEpoch> {
    let base_map: BTreeMap<(SatId, u8), &GnssRawMeasurement> =
        base.iter().map(|m| ((m.sat, m.band), m)).collect();

    let mut groups: BTreeMap<(char, u8), Vec<(&GnssRawMeasurement, &GnssRawMeasurement)>> = BTreeMap::new();
    for r in rover {
        if let Some(b) = base_map.get(&(r.sat, r.band)) {
            groups.entry((r.sat.constellation, r.band)).or_default().push((r, b));
        }
    }

    let mut out = DdEpoch::default();
    for ((cons, band), pairs) in groups {
        if pairs.len() < 2 {
            out.diagnostics
                .push(format!("{cons}/L{band}: {} common satellite(s), need 2", pairs.len()));
            continue;
        }
        let usable_ref = |r: &GnssRawMeasurement| !r.lli && !excluded_pseudorange.contains(&(r.sat, r.band));
        let reference = pairs
            .iter()
            .filter(|(r, _)| usable_ref(r))
            .max_by(|a, b| a.0.elevation.total_cmp(&b.0.elevation).then(b.0.sat.cmp(&a.0.sat)));
        let Some(&(ref_r, ref_b)) = reference else {
            out.diagnostics.push(format!("{cons}/L{band}: no usable reference satellite"));
            continue;
        };
        ref_r.validate()?;
        ref_b.validate()?;
        let los_ref = (ref_r.sat_pos - rover_ecef).normalize();
        let var_p_ref = elevation_variance(ref_r.elevation, noise.pseudorange_sigma)?
            + elevation_variance(ref_b.elevation, noise.pseudorange_sigma)?;
        let var_l_ref = elevation_variance(ref_r.elevation, noise.carrier_sigma)?
            + elevation_variance(ref_b.elevation, noise.carrier_sigma)?;
        let sd_p_ref = ref_r.pseudorange - ref_b.pseudorange;
        let sd_l_ref = ref_r.carrier - ref_b.carrier;

        for &(r, b) in &pairs {
            if r.sat == ref_r.sat {
                continue;
            }
            r.validate()?;
            b.validate()?;
            let p_ok = !excluded_pseudorange.contains(&(r.sat, r.band));
            let l_ok = !r.lli && !b.lli;
            let var_p = var_p_ref
                + elevation_variance(r.elevation, noise.pseudorange_sigma)?
                + elevation_variance(b.elevation, noise.pseudorange_sigma)?;
            let var_l = var_l_ref
                + elevation_variance(r.elevation, noise.carrier_sigma)?
                + elevation_variance(b.elevation, noise.carrier_sigma)?;
            out.measurements.push(DdMeasurement {
                t: r.t,
                reference: ref_r.sat,
                sat: r.sat,
                band,
                pseudorange: p_ok.then_some((r.pseudorange - b.pseudorange) - sd_p_ref),
                carrier: l_ok.then_some((r.carrier - b.carrier) - sd_l_ref),
                wavelength: r.wavelength,
                var_pseudorange: var_p,
                var_carrier: var_l,
                los_reference: los_ref,
                los_sat: (r.sat_pos - rover_ecef).normalize(),
                ref_pos: ref_r.sat_pos,
                sat_pos: r.sat_pos,
                elevation: r.elevation,
            });
        }
    }
    if out.measurements.is_empty() && !out.diagnostics.is_empty() {
        log::warn!("no double differences formed: {}", out.diagnostics.join("; "));
    }
    Ok(out)
}

/// Double-differenced geometric range for a rover antenna position.
pub fn dd_range(dd: &DdMeasurement, rover: &Vec3, base: &Vec3) -> f64 {
    ((dd.sat_pos - rover).norm() - (dd.sat_pos - base).norm())
        - ((dd.ref_pos - rover).norm() - (dd.ref_pos - base).norm())
}

/// IMU-to-antenna offset in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeverArm {
    pub offset: Vec3,
    pub estimate_online: bool,
}

impl LeverArm {
    pub const MAX_NORM: f64 = 10.0;

    pub fn new(offset: Vec3, estimate_online: bool) -> Result<Self> {
        if !(offset.norm() < Self::MAX_NORM) {
            return Err(Error::InvalidInput(format!("lever arm {:?} exceeds {} m", offset, Self::MAX_NORM)));
        }
        Ok(Self { offset, estimate_online })
    }
}

/// Antenna position and velocity relative to the world origin, expressed in ECEF axes.
///
/// `p = R_en R_nw (p_wb + R_wb p_g)` and `v = R_en R_nw (v_wb + R_wb ⌊ω×⌋ p_g)`.
/// The returned position is an offset: add the origin's ECEF coordinates for
/// the absolute antenna position.
pub fn antenna_position_velocity(
    nav: &NavState,
    lever: &Vec3,
    omega_ib: &Vec3,
    r_en: &Mat3,
    r_nw: &Mat3,
) -> (Vec3, Vec3) {
    let r_wb = nav.rotation();
    let r_ew = r_en * r_nw;
    let p = r_ew * (nav.p + r_wb * lever);
    let v = r_ew * (nav.v + r_wb * (skew(omega_ib) * lever));
    (p, v)
}

/// Predicted `λD` (m/s): range rate plus the receiver/satellite clock-drift term.
pub fn doppler_predicted(
    sat_pos: &Vec3,
    sat_vel: &Vec3,
    ant_pos: &Vec3,
    ant_vel: &Vec3,
    receiver_drift: f64,
    sat_drift: f64,
) -> Result<f64> {
    let dp = sat_pos - ant_pos;
    let rho = dp.norm();
    if rho <= 0.0 || !rho.is_finite() {
        return Err(Error::Degenerate("zero satellite range".into()));
    }
    let dv = sat_vel - ant_vel;
    Ok(dp.dot(&dv) / rho + SPEED_OF_LIGHT * (receiver_drift - sat_drift))
}

/// Groups a measurement list into epochs keyed by time (to the microsecond).
pub fn group_epochs(meas: &[GnssRawMeasurement]) -> BTreeMap<i64, Vec<GnssRawMeasurement>> {
    let mut map: BTreeMap<i64, Vec<GnssRawMeasurement>> = BTreeMap::new();
    for m in meas {
        map.entry(epoch_key(m.t)).or_default().push(m.clone());
    }
    map
}

pub fn epoch_key(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomath::{quat_exp, Quat};
    use approx::assert_abs_diff_eq;

    fn meas(sat: u16, band: u8, p: f64, l: f64, el: f64, pos: Vec3) -> GnssRawMeasurement {
        GnssRawMeasurement {
            t: 0.0,
            sat: SatId::new('G', sat),
            band,
            wavelength: wavelength('G', band).unwrap(),
            pseudorange: p,
            carrier: l,
            doppler: 0.0,
            sat_pos: pos,
            sat_vel: Vec3::zeros(),
            sat_clock: 0.0,
            sat_clock_drift: 0.0,
            elevation: el,
            azimuth: 0.0,
            lli: false,
        }
    }

    #[test]
    fn sat_id_round_trip() {
        let s: SatId = "G07".parse().unwrap();
        assert_eq!(s, SatId::new('G', 7));
        assert_eq!(s.to_string(), "G07");
        assert!("7G".parse::<SatId>().is_err());
    }

    #[test]
    fn variance_formula() {
        let v = elevation_variance(std::f64::consts::FRAC_PI_2, 0.3).unwrap();
        assert_abs_diff_eq!(v, 0.18, epsilon = 1e-12);
        let v = elevation_variance(30f64.to_radians(), 0.003).unwrap();
        assert_abs_diff_eq!(v, 2.7e-5, epsilon = 1e-15);
        assert!(elevation_variance(0.0, 0.3).is_err());
        assert!(elevation_variance(-0.1, 0.3).is_err());
        let mut prev = f64::INFINITY;
        for deg in 1..=90 {
            let v = elevation_variance((deg as f64).to_radians(), 0.3).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn zero_baseline_cancels() {
        let sats: Vec<_> = (1..=5)
            .map(|i| meas(i, 1, 2.0e7 + i as f64 * 1e3, 2.0e7 + 17.0 * i as f64, 0.3 + 0.2 * i as f64, Vec3::new(2e7, i as f64 * 1e6, 1e7)))
            .collect();
        let dd = form_double_differences(&sats, &sats, &Vec3::zeros(), &GnssNoise::default(), &[]).unwrap();
        assert_eq!(dd.measurements.len(), 4);
        for m in &dd.measurements {
            assert_eq!(m.pseudorange, Some(0.0));
            assert_eq!(m.carrier, Some(0.0));
            assert_eq!(m.reference, SatId::new('G', 5));
            assert!(m.var_pseudorange > 0.0 && m.var_carrier > 0.0);
        }
    }

    #[test]
    fn variance_is_sum_of_four_legs() {
        let r = vec![meas(1, 1, 0.0, 0.0, 1.2, Vec3::x() * 2e7), meas(2, 1, 0.0, 0.0, 0.4, Vec3::y() * 2e7)];
        let mut b = r.clone();
        b[0].elevation = 1.1;
        b[1].elevation = 0.5;
        let dd = form_double_differences(&r, &b, &Vec3::zeros(), &GnssNoise::default(), &[]).unwrap();
        let m = &dd.measurements[0];
        let s = 0.3;
        let expected = elevation_variance(1.2, s).unwrap()
            + elevation_variance(0.4, s).unwrap()
            + elevation_variance(1.1, s).unwrap()
            + elevation_variance(0.5, s).unwrap();
        assert_abs_diff_eq!(m.var_pseudorange, expected, epsilon = 1e-15);
    }

    #[test]
    fn too_few_common_satellites() {
        let r = vec![meas(1, 1, 0.0, 0.0, 1.2, Vec3::x() * 2e7)];
        let dd = form_double_differences(&r, &r, &Vec3::zeros(), &GnssNoise::default(), &[]).unwrap();
        assert!(dd.measurements.is_empty());
        assert_eq!(dd.diagnostics.len(), 1);
    }

    #[test]
    fn excluded_pseudorange_keeps_carrier() {
        let r: Vec<_> = (1..=3).map(|i| meas(i, 1, 1.0 * i as f64, 2.0 * i as f64, 0.2 * i as f64, Vec3::x() * 2e7)).collect();
        let dd = form_double_differences(&r, &r, &Vec3::zeros(), &GnssNoise::default(), &[(SatId::new('G', 1), 1)]).unwrap();
        let m = dd.measurements.iter().find(|m| m.sat.prn == 1).unwrap();
        assert!(m.pseudorange.is_none());
        assert!(m.carrier.is_some());
    }

    #[test]
    fn lever_arm_transform() {
        let mut nav = NavState::identity(0.0);
        let (p, v) = antenna_position_velocity(&nav, &Vec3::x(), &Vec3::z(), &Mat3::identity(), &Mat3::identity());
        assert_abs_diff_eq!(p, Vec3::x(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, Vec3::y(), epsilon = 1e-15);

        // Finite-difference oracle: rotate the body at constant ω for 1e-4 s.
        nav.p = Vec3::new(3.0, -2.0, 1.0);
        nav.v = Vec3::new(0.4, 0.1, -0.2);
        nav.q = quat_exp(&Vec3::new(0.3, -0.4, 1.2));
        let omega = Vec3::new(0.2, -0.5, 0.8);
        let lever = Vec3::new(0.3, 0.7, -1.1);
        let r_en = crate::geomath::rot_from_rpy(0.4, -1.0, 2.0);
        let r_nw = crate::geomath::rot_from_rpy(0.0, 0.0, 0.3);
        let (_, v) = antenna_position_velocity(&nav, &lever, &omega, &r_en, &r_nw);
        let dt = 1e-4;
        let at = |s: f64| {
            let mut n = nav.clone();
            n.p = nav.p + nav.v * s;
            n.q = nav.q * Quat::from_scaled_axis(omega * s);
            antenna_position_velocity(&n, &lever, &omega, &r_en, &r_nw).0
        };
        let fd = (at(dt / 2.0) - at(-dt / 2.0)) / dt;
        assert!((fd - v).norm() < 1e-6);
    }

    #[test]
    fn doppler_geometry() {
        let sat = Vec3::new(2e7, 0.0, 0.0);
        let rr = doppler_predicted(&sat, &Vec3::new(100.0, 0.0, 0.0), &Vec3::zeros(), &Vec3::zeros(), 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(rr, 100.0, epsilon = 1e-12);
        let rr = doppler_predicted(&sat, &Vec3::new(0.0, 3000.0, 0.0), &Vec3::zeros(), &Vec3::zeros(), 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(rr, 0.0, epsilon = 1e-12);
        assert!(doppler_predicted(&sat, &Vec3::zeros(), &sat, &Vec3::zeros(), 0.0, 0.0).is_err());
    }
}
