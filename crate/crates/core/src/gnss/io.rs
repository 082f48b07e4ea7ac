//! Observation CSV files, one row per (epoch, satellite, band).
//!
//! Columns: `t, sat, band, P, L_cycles, D, sat_x, sat_y, sat_z, sat_vx,
//! sat_vy, sat_vz, sat_clk, sat_clk_drift, lli`. The trailing loss-of-lock
//! column is optional on input.

use std::io::{Read, Write};
use std::path::Path;

use super::{wavelength, GnssRawMeasurement, SatId};
use crate::geomath::{azimuth_elevation, GeodeticOrigin, Vec3};
use crate::{Error, Result};

pub const HEADER: [&str; 15] = [
    "t", "sat", "band", "P", "L_cycles", "D", "sat_x", "sat_y", "sat_z", "sat_vx", "sat_vy", "sat_vz", "sat_clk",
    "sat_clk_drift", "lli",
];

pub fn write_observations<W: Write>(w: W, meas: &[GnssRawMeasurement]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(HEADER)?;
    for m in meas {
        wr.write_record([
            m.t.to_string(),
            m.sat.to_string(),
            m.band.to_string(),
            m.pseudorange.to_string(),
            (m.carrier / m.wavelength).to_string(),
            m.doppler.to_string(),
            m.sat_pos.x.to_string(),
            m.sat_pos.y.to_string(),
            m.sat_pos.z.to_string(),
            m.sat_vel.x.to_string(),
            m.sat_vel.y.to_string(),
            m.sat_vel.z.to_string(),
            m.sat_clock.to_string(),
            m.sat_clock_drift.to_string(),
            u8::from(m.lli).to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_observations_file(path: &Path, meas: &[GnssRawMeasurement]) -> Result<()> {
    write_observations(std::fs::File::create(path)?, meas)
}

/// Reads observations and derives elevation/azimuth as seen from `receiver`
/// (ECEF). Rows with a satellite at or below the horizon are rejected.
pub fn read_observations<R: Read>(
    r: R,
    source: &str,
    receiver: &Vec3,
    origin: &GeodeticOrigin,
) -> Result<Vec<GnssRawMeasurement>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers()?.clone();
    let expected = &HEADER[..14];
    if headers.len() < 14 || headers.iter().zip(expected).any(|(a, b)| a != *b) {
        return Err(Error::Parse {
            path: source.into(),
            line: 1,
            message: format!("expected header {}", HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let perr = |message: String| Error::Parse { path: source.into(), line, message };
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).ok_or_else(|| perr(format!("missing column {}", HEADER[i])))?;
            let v: f64 = s.parse().map_err(|_| perr(format!("column {}: '{s}' is not a number", HEADER[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(perr(format!("column {}: non-finite value", HEADER[i])))
            }
        };
        let sat: SatId = rec.get(1).unwrap_or_default().parse().map_err(|e: Error| perr(e.to_string()))?;
        let band: u8 = rec
            .get(2)
            .unwrap_or_default()
            .parse()
            .map_err(|_| perr("column band: not an integer".into()))?;
        let lambda = wavelength(sat.constellation, band).map_err(|e| perr(e.to_string()))?;
        let sat_pos = Vec3::new(num(6)?, num(7)?, num(8)?);
        let (azimuth, elevation) = azimuth_elevation(origin, receiver, &sat_pos);
        if !(elevation > 0.0) {
            return Err(perr(format!("{sat}: elevation {elevation:.4} rad is below the horizon")));
        }
        let pseudorange = num(3)?;
        if pseudorange <= 1e6 {
            return Err(perr(format!("{sat}: pseudo-range {pseudorange} m is implausible")));
        }
        let lli = match rec.get(14) {
            None | Some("") | Some("0") => false,
            Some("1") => true,
            Some(s) => return Err(perr(format!("column lli: '{s}' is not 0/1"))),
        };
        out.push(GnssRawMeasurement {
            t: num(0)?,
            sat,
            band,
            wavelength: lambda,
            pseudorange,
            carrier: num(4)? * lambda,
            doppler: num(5)?,
            sat_pos,
            sat_vel: Vec3::new(num(9)?, num(10)?, num(11)?),
            sat_clock: num(12)?,
            sat_clock_drift: num(13)?,
            elevation,
            azimuth,
            lli,
        });
    }
    Ok(out)
}

pub fn read_observations_file(path: &Path, receiver: &Vec3, origin: &GeodeticOrigin) -> Result<Vec<GnssRawMeasurement>> {
    let f = std::fs::File::open(path)?;
    read_observations(f, &path.display().to_string(), receiver, origin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> GeodeticOrigin {
        GeodeticOrigin::new(0.4, 2.0, 5.0).unwrap()
    }

    #[test]
    fn round_trip() {
        let o = origin();
        let rx = o.to_ecef();
        let sat_pos = o.enu_to_ecef(&Vec3::new(1e7, 5e6, 2e7));
        let (azimuth, elevation) = azimuth_elevation(&o, &rx, &sat_pos);
        let lambda = wavelength('G', 2).unwrap();
        let m = GnssRawMeasurement {
            t: 12.0,
            sat: SatId::new('G', 11),
            band: 2,
            wavelength: lambda,
            pseudorange: 2.2e7 + 0.123,
            carrier: lambda * 115_000_123.25,
            doppler: -1234.5,
            sat_pos,
            sat_vel: Vec3::new(1.0, 2.0, 3.0),
            sat_clock: 1e-4,
            sat_clock_drift: 1e-11,
            elevation,
            azimuth,
            lli: true,
        };
        let mut buf = Vec::new();
        write_observations(&mut buf, std::slice::from_ref(&m)).unwrap();
        let back = read_observations(&buf[..], "mem", &rx, &o).unwrap();
        assert_eq!(back.len(), 1);
        let b = &back[0];
        assert_eq!(b.sat, m.sat);
        assert!(b.lli);
        assert!((b.carrier - m.carrier).abs() < 1e-6);
        assert!((b.elevation - m.elevation).abs() < 1e-12);
    }

    #[test]
    fn malformed_row_reports_line() {
        let o = origin();
        let text = format!("{}\n1,G01,1,abc,0,0,0,0,0,0,0,0,0,0,0\n", HEADER.join(","));
        let err = read_observations(text.as_bytes(), "x.csv", &o.to_ecef(), &o).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn below_horizon_rejected() {
        let o = origin();
        let down = o.enu_to_ecef(&Vec3::new(0.0, 0.0, -2e7));
        let text = format!(
            "{}\n1,G01,1,2e7,0,0,{},{},{},0,0,0,0,0,0\n",
            HEADER.join(","),
            down.x,
            down.y,
            down.z
        );
        assert!(read_observations(text.as_bytes(), "x.csv", &o.to_ecef(), &o).is_err());
    }
}
