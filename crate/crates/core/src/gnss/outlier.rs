//! Two-stage pseudo-range outlier screening.
//!
//! Stage 1 runs per satellite on the rover's raw stream: the change in
//! pseudo-range between epochs must agree with the Doppler-integrated range
//! change. Stage 2 runs on double differences against the antenna position
//! predicted by IMU/odometer propagation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{dd_range, elevation_variance, DdMeasurement, GnssNoise, GnssRawMeasurement, SatId};
use crate::geomath::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScreenStage {
    Doppler = 1,
    Prediction = 2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub t: f64,
    pub sat: SatId,
    pub band: u8,
    pub stage: ScreenStage,
    pub statistic: f64,
    pub threshold: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, Copy)]
struct Anchor {
    t: f64,
    pseudorange: f64,
    rate: f64,
    var: f64,
}

/// Stage-1 screen. Holds the last accepted pseudo-range of every rover
/// satellite/band, so epochs must be fed in time order.
#[derive(Debug, Clone)]
pub struct DopplerScreen {
    pub k1: f64,
    pub noise: GnssNoise,
    /// Gaps longer than this restart the satellite's stream.
    pub max_gap: f64,
    anchors: BTreeMap<(SatId, u8), Anchor>,
}

impl DopplerScreen {
    pub fn new(k1: f64, noise: GnssNoise) -> Self {
        Self { k1, noise, max_gap: 5.0, anchors: BTreeMap::new() }
    }

    /// Screens one rover epoch. Returns a report for every satellite that
    /// had a prior epoch; satellites seen for the first time are skipped.
    pub fn screen(&mut self, epoch: &[GnssRawMeasurement]) -> Vec<OutlierReport> {
        let mut reports = Vec::new();
        for m in epoch {
            let key = (m.sat, m.band);
            let var_now = match elevation_variance(m.elevation, self.noise.pseudorange_sigma) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let rate = m.range_rate_obs();
            let var_rate = elevation_variance(m.elevation, self.noise.doppler_sigma).unwrap_or(f64::INFINITY);
            let fresh = Anchor { t: m.t, pseudorange: m.pseudorange, rate, var: var_now };
            let Some(prev) = self.anchors.get(&key).copied().filter(|a| m.t > a.t && m.t - a.t <= self.max_gap) else {
                self.anchors.insert(key, fresh);
                continue;
            };
            let dt = m.t - prev.t;
            let predicted = prev.pseudorange + 0.5 * (prev.rate + rate) * dt;
            let var_dopp = var_rate * dt * dt / 2.0;
            let sigma = (var_now + prev.var + var_dopp).sqrt();
            let statistic = (m.pseudorange - predicted).abs() / sigma;
            let rejected = statistic > self.k1;
            reports.push(OutlierReport {
                t: m.t,
                sat: m.sat,
                band: m.band,
                stage: ScreenStage::Doppler,
                statistic,
                threshold: self.k1,
                rejected,
            });
            let next = if rejected {
                // Carry the Doppler-propagated range forward as the anchor.
                Anchor { t: m.t, pseudorange: predicted, rate, var: prev.var + var_dopp }
            } else {
                fresh
            };
            self.anchors.insert(key, next);
        }
        self.anchors.retain(|_, a| epoch.first().is_none_or(|m| m.t - a.t <= self.max_gap));
        reports
    }
}

/// Stage-2 screen of DD pseudo-ranges against a predicted rover antenna
/// position (ECEF) with covariance `pred_cov`.
pub fn screen_stage2(
    dds: &[DdMeasurement],
    predicted_rover: &Vec3,
    pred_cov: &Mat3,
    base: &Vec3,
    k2: f64,
) -> Vec<OutlierReport> {
    dds.iter()
        .filter_map(|dd| {
            let p = dd.pseudorange?;
            let u_i = (dd.ref_pos - predicted_rover).normalize();
            let u_j = (dd.sat_pos - predicted_rover).normalize();
            let h = u_i - u_j;
            let var = dd.var_pseudorange + (h.transpose() * pred_cov * h)[(0, 0)];
            let statistic = (p - dd_range(dd, predicted_rover, base)).abs() / var.sqrt();
            Some(OutlierReport {
                t: dd.t,
                sat: dd.sat,
                band: dd.band,
                stage: ScreenStage::Prediction,
                statistic,
                threshold: k2,
                rejected: statistic > k2,
            })
        })
        .collect()
}
