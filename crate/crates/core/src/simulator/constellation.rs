//! Circular-orbit satellite constellation with a PDOP-screened geometry.

use nalgebra::{DMatrix, Matrix4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geomath::{azimuth_elevation, GeodeticOrigin, Vec3};
use crate::gnss::SatId;
use crate::{Error, Result};

pub const ORBIT_RADIUS: f64 = 26_560_000.0;
const GM: f64 = 3.986_004_418e14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationSpec {
    pub n_sats: usize,
    /// Constellation letters; satellites are assigned round-robin.
    pub systems: Vec<char>,
    pub bands: Vec<u8>,
    pub elevation_mask_deg: f64,
    pub pdop_min: f64,
    pub pdop_max: f64,
    /// Draws are repeated until the initial PDOP falls in range.
    pub max_draws: usize,
}

impl Default for ConstellationSpec {
    fn default() -> Self {
        Self { n_sats: 20, systems: vec!['G'], bands: vec![1, 2], elevation_mask_deg: 15.0, pdop_min: 1.25, pdop_max: 1.45, max_draws: 10_000 }
    }
}

/// A satellite on a circular orbit `p(t) = R (cos(nt) e₁ + sin(nt) e₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Satellite {
    pub id: SatId,
    e1: Vec3,
    e2: Vec3,
    n: f64,
    pub clock_offset: f64,
    pub clock_drift: f64,
}

impl Satellite {
    pub fn position(&self, t: f64) -> Vec3 {
        let (s, c) = (self.n * t).sin_cos();
        ORBIT_RADIUS * (c * self.e1 + s * self.e2)
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        let (s, c) = (self.n * t).sin_cos();
        ORBIT_RADIUS * self.n * (-s * self.e1 + c * self.e2)
    }

    pub fn clock(&self, t: f64) -> f64 {
        self.clock_offset + self.clock_drift * t
    }
}

/// Position dilution of precision for unit line-of-sight vectors.
pub fn pdop(los: &[Vec3]) -> Option<f64> {
    if los.len() < 4 {
        return None;
    }
    let mut g = DMatrix::zeros(los.len(), 4);
    for (i, u) in los.iter().enumerate() {
        g[(i, 0)] = -u.x;
        g[(i, 1)] = -u.y;
        g[(i, 2)] = -u.z;
        g[(i, 3)] = 1.0;
    }
    let n: Matrix4<f64> = (g.transpose() * &g).fixed_view::<4, 4>(0, 0).into_owned();
    let inv = n.try_inverse()?;
    Some((inv[(0, 0)] + inv[(1, 1)] + inv[(2, 2)]).sqrt())
}

/// Satellites at the orbit radius along a line of sight from `site`.
fn place(site: &Vec3, origin: &GeodeticOrigin, az: f64, el: f64) -> Vec3 {
    let enu = Vec3::new(el.cos() * az.sin(), el.cos() * az.cos(), el.sin());
    let u = origin.ecef_enu_rotation() * enu;
    // |site + ρu| = R
    let b = site.dot(&u);
    let c = site.norm_squared() - ORBIT_RADIUS * ORBIT_RADIUS;
    let rho = -b + (b * b - c).sqrt();
    site + rho * u
}

/// Draws a constellation visible above the mask over `[0, duration]` at
/// `origin`, whose initial PDOP lies within the configured range.
pub fn generate_constellation<R: Rng>(
    spec: &ConstellationSpec,
    origin: &GeodeticOrigin,
    duration: f64,
    rng: &mut R,
) -> Result<Vec<Satellite>> {
    if spec.n_sats < 4 || spec.systems.is_empty() || spec.n_sats > 32 * spec.systems.len() {
        return Err(Error::InvalidInput(format!("{} satellites requested, need 4..=32 per system", spec.n_sats)));
    }
    for &c in &spec.systems {
        for &b in &spec.bands {
            crate::gnss::wavelength(c, b)?;
        }
    }
    let check_dop = spec.n_sats >= 6;
    if !check_dop {
        log::warn!("PDOP target not enforced with {} satellites", spec.n_sats);
    }
    let site = origin.to_ecef();
    let mask = spec.elevation_mask_deg.to_radians();
    let n = (GM / ORBIT_RADIUS.powi(3)).sqrt();
    let margin = 5f64.to_radians();
    for _ in 0..spec.max_draws {
        let mut sats = Vec::with_capacity(spec.n_sats);
        let mut los = Vec::with_capacity(spec.n_sats);
        for k in 0..spec.n_sats {
            let az = rng.random_range(0.0..std::f64::consts::TAU);
            let sin_el = rng.random_range((mask + margin).sin()..1.0);
            let p0 = place(&site, origin, az, sin_el.asin());
            let e1 = p0.normalize();
            let mut e2 = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            e2 -= e1 * e1.dot(&e2);
            if e2.norm() < 1e-3 {
                e2 = e1.cross(&Vec3::z()).normalize();
            }
            let e2 = e2.normalize();
            los.push((p0 - site).normalize());
            sats.push(Satellite {
                id: SatId::new(spec.systems[k % spec.systems.len()], (k / spec.systems.len()) as u16 + 1),
                e1,
                e2,
                n,
                clock_offset: rng.random_range(-1e-3..1e-3),
                clock_drift: rng.random_range(-1e-11..1e-11),
            });
        }
        let Some(d) = pdop(&los) else { continue };
        if check_dop && (d < spec.pdop_min || d > spec.pdop_max) {
            continue;
        }
        let visible = sats.iter().all(|s| {
            let mut t = 0.0;
            while t <= duration {
                if azimuth_elevation(origin, &site, &s.position(t)).1 <= mask {
                    return false;
                }
                t += 10.0;
            }
            true
        });
        if visible {
            return Ok(sats);
        }
    }
    Err(Error::Numerical(format!(
        "no constellation with PDOP in [{}, {}] after {} draws",
        spec.pdop_min, spec.pdop_max, spec.max_draws
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_geometry() {
        let origin = GeodeticOrigin::new(22.3f64.to_radians(), 114.17f64.to_radians(), 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = ConstellationSpec::default();
        let sats = generate_constellation(&spec, &origin, 450.0, &mut rng).unwrap();
        assert_eq!(sats.len(), 20);
        let site = origin.to_ecef();
        let los: Vec<Vec3> = sats.iter().map(|s| (s.position(0.0) - site).normalize()).collect();
        let d = pdop(&los).unwrap();
        assert!((1.25..=1.45).contains(&d));
        for s in &sats {
            assert!(azimuth_elevation(&origin, &site, &s.position(0.0)).1 > 15f64.to_radians());
            assert!((s.position(100.0).norm() - ORBIT_RADIUS).abs() < 1e-6);
            assert!((s.velocity(0.0).norm() - 3874.0).abs() < 5.0);
            let h = 1e-3;
            let fd = (s.position(10.0 + h) - s.position(10.0 - h)) / (2.0 * h);
            assert!((fd - s.velocity(10.0)).norm() < 1e-3);
        }
    }

    #[test]
    fn tetrahedral_geometry() {
        let a = (-1.0f64 / 3.0).acos() - std::f64::consts::FRAC_PI_2;
        let los: Vec<Vec3> = [0.0, 120.0, 240.0]
            .iter()
            .map(|az: &f64| {
                let az = az.to_radians();
                Vec3::new(a.cos() * az.sin(), a.cos() * az.cos(), -a.sin())
            })
            .chain([Vec3::z()])
            .collect();
        let d = pdop(&los).unwrap();
        assert!(d.is_finite() && d > 0.0);
        assert!(pdop(&los[..3]).is_none());
    }

    #[test]
    fn mask_and_small_constellations() {
        let origin = GeodeticOrigin::new(0.7, 2.0, 0.0).unwrap();
        let spec = ConstellationSpec { n_sats: 5, elevation_mask_deg: 10.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sats = generate_constellation(&spec, &origin, 60.0, &mut rng).unwrap();
        let site = origin.to_ecef();
        assert!(sats.iter().all(|s| azimuth_elevation(&origin, &site, &s.position(30.0)).1 > 10f64.to_radians()));
        let bad = ConstellationSpec { n_sats: 3, ..Default::default() };
        assert!(generate_constellation(&bad, &origin, 60.0, &mut rng).is_err());
    }
}
