//! Fault injection: pseudo-range outliers, carrier cycle slips and a lever-arm
//! error in the estimator's assumed antenna offset.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geomath::Vec3;
use crate::gnss::{epoch_key, GnssRawMeasurement, SatId};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    #[serde(default)]
    pub outliers: Option<OutlierSpec>,
    #[serde(default)]
    pub cycle_slips: Vec<SlipSpec>,
    /// Added to the lever arm the estimator is told; the truth is unchanged.
    #[serde(default)]
    pub lever_arm_error: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub per_100_epochs: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// No outliers before this time (s).
    pub start: f64,
}

impl Default for OutlierSpec {
    fn default() -> Self {
        Self { per_100_epochs: 5.0, min_step: 5.0, max_step: 10.0, start: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlipSpec {
    pub t: f64,
    pub sat: SatId,
    pub band: u8,
    pub cycles: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedOutlier {
    pub t: f64,
    pub sat: SatId,
    pub band: u8,
    pub step: f64,
}

pub type InjectedSlip = SlipSpec;

/// Adds single-epoch pseudo-range errors to randomly chosen rover
/// observations, one satellite/band per selected epoch.
pub fn inject_outliers<R: Rng>(
    rover: &mut [GnssRawMeasurement],
    spec: &OutlierSpec,
    rng: &mut R,
) -> Result<Vec<InjectedOutlier>> {
    if !(spec.min_step > 0.0 && spec.max_step >= spec.min_step && spec.per_100_epochs >= 0.0) {
        return Err(Error::InvalidInput("invalid outlier spec".into()));
    }
    let mut epochs: Vec<(i64, Vec<usize>)> = Vec::new();
    for (i, m) in rover.iter().enumerate() {
        if m.t < spec.start - 1e-9 {
            continue;
        }
        let k = epoch_key(m.t);
        match epochs.last_mut() {
            Some((key, idx)) if *key == k => idx.push(i),
            _ => epochs.push((k, vec![i])),
        }
    }
    let count = ((epochs.len() as f64 * spec.per_100_epochs / 100.0).round() as usize).min(epochs.len());
    let mut chosen = sample(rng, epochs.len(), count).into_vec();
    chosen.sort_unstable();
    let mut out = Vec::with_capacity(count);
    for e in chosen {
        let idx = &epochs[e].1;
        let i = idx[rng.random_range(0..idx.len())];
        let mag = if spec.max_step > spec.min_step { rng.random_range(spec.min_step..spec.max_step) } else { spec.min_step };
        let step = if rng.random_bool(0.5) { mag } else { -mag };
        let m = &mut rover[i];
        m.pseudorange += step;
        out.push(InjectedOutlier { t: m.t, sat: m.sat, band: m.band, step });
    }
    Ok(out)
}

/// Adds whole cycles to the rover carrier from the slip epoch onwards and
/// raises the loss-of-lock flag at that epoch.
pub fn inject_cycle_slips(rover: &mut [GnssRawMeasurement], slips: &[SlipSpec]) -> Result<Vec<InjectedSlip>> {
    let mut out = Vec::new();
    for s in slips {
        let mut first: Option<f64> = None;
        for m in rover.iter_mut().filter(|m| m.sat == s.sat && m.band == s.band && m.t >= s.t - 1e-9) {
            let f = *first.get_or_insert(m.t);
            m.carrier += s.cycles as f64 * m.wavelength;
            m.lli |= epoch_key(m.t) == epoch_key(f);
        }
        let Some(t) = first else {
            return Err(Error::InvalidInput(format!("cycle slip on {} L{} at {} s is outside the data", s.sat, s.band, s.t)));
        };
        out.push(SlipSpec { t, ..s.clone() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn epochs(n: usize, sats: u16) -> Vec<GnssRawMeasurement> {
        let mut v = Vec::new();
        for k in 0..n {
            for p in 1..=sats {
                v.push(GnssRawMeasurement {
                    t: k as f64,
                    sat: SatId::new('G', p),
                    band: 1,
                    wavelength: 0.19,
                    pseudorange: 2e7,
                    carrier: 2e7,
                    doppler: 0.0,
                    sat_pos: Vec3::new(2e7, 0.0, 0.0),
                    sat_vel: Vec3::zeros(),
                    sat_clock: 0.0,
                    sat_clock_drift: 0.0,
                    elevation: 1.0,
                    azimuth: 0.0,
                    lli: false,
                });
            }
        }
        v
    }

    #[test]
    fn outlier_rate_and_size() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut obs = epochs(300, 8);
        let inj = inject_outliers(&mut obs, &OutlierSpec::default(), &mut rng).unwrap();
        assert_eq!(inj.len(), 15);
        let changed: Vec<_> = obs.iter().filter(|m| m.pseudorange != 2e7).collect();
        assert_eq!(changed.len(), 15);
        assert!(changed.iter().all(|m| (5.0..10.0).contains(&(m.pseudorange - 2e7).abs())));
    }

    #[test]
    fn slip_shifts_carrier_and_flags() {
        let mut obs = epochs(10, 3);
        let slip = SlipSpec { t: 4.5, sat: SatId::new('G', 2), band: 1, cycles: 7 };
        let out = inject_cycle_slips(&mut obs, std::slice::from_ref(&slip)).unwrap();
        assert_eq!(out[0].t, 5.0);
        for m in &obs {
            let hit = m.sat == slip.sat && m.t >= 5.0;
            assert_eq!(m.carrier != 2e7, hit);
            assert_eq!(m.lli, hit && m.t == 5.0);
        }
        let late = SlipSpec { t: 50.0, ..slip };
        assert!(inject_cycle_slips(&mut obs, &[late]).is_err());
    }
}
