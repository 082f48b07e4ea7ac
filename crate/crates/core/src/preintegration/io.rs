//! IMU (`t, ax, ay, az, gx, gy, gz`) and odometer (`t, v, omega`) CSV files.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_monotonic, ImuSample, OdoSample};
use crate::geomath::Vec3;
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct ImuRow {
    t: f64,
    ax: f64,
    ay: f64,
    az: f64,
    gx: f64,
    gy: f64,
    gz: f64,
}

#[derive(Serialize, Deserialize)]
struct OdoRow {
    t: f64,
    v: f64,
    omega: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(r: R, source: &str) -> Result<Vec<T>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        let row: T = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { path: source.into(), line, message: e.to_string() }
        })?;
        out.push(row);
    }
    Ok(out)
}

fn write_rows<T: Serialize, W: Write>(w: W, rows: impl Iterator<Item = T>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_imu<W: Write>(w: W, data: &[ImuSample]) -> Result<()> {
    write_rows(
        w,
        data.iter().map(|s| ImuRow {
            t: s.t,
            ax: s.accel.x,
            ay: s.accel.y,
            az: s.accel.z,
            gx: s.gyro.x,
            gy: s.gyro.y,
            gz: s.gyro.z,
        }),
    )
}

pub fn read_imu<R: Read>(r: R, source: &str) -> Result<Vec<ImuSample>> {
    let rows: Vec<ImuRow> = read_rows(r, source)?;
    let out: Vec<ImuSample> = rows
        .into_iter()
        .map(|r| ImuSample { t: r.t, accel: Vec3::new(r.ax, r.ay, r.az), gyro: Vec3::new(r.gx, r.gy, r.gz) })
        .collect();
    if out.iter().any(|s| !(s.t.is_finite() && s.accel.iter().chain(s.gyro.iter()).all(|x| x.is_finite()))) {
        return Err(Error::InvalidInput(format!("{source}: non-finite IMU value")));
    }
    check_monotonic(out.iter().map(|s| s.t), source)?;
    Ok(out)
}

pub fn write_odo<W: Write>(w: W, data: &[OdoSample]) -> Result<()> {
    write_rows(w, data.iter().map(|s| OdoRow { t: s.t, v: s.v, omega: s.omega }))
}

pub fn read_odo<R: Read>(r: R, source: &str) -> Result<Vec<OdoSample>> {
    let rows: Vec<OdoRow> = read_rows(r, source)?;
    let out: Vec<OdoSample> = rows.into_iter().map(|r| OdoSample { t: r.t, v: r.v, omega: r.omega }).collect();
    if out.iter().any(|s| !(s.t.is_finite() && s.v.is_finite() && s.omega.is_finite())) {
        return Err(Error::InvalidInput(format!("{source}: non-finite odometer value")));
    }
    check_monotonic(out.iter().map(|s| s.t), source)?;
    Ok(out)
}

pub fn read_imu_file(path: &Path) -> Result<Vec<ImuSample>> {
    read_imu(std::fs::File::open(path)?, &path.display().to_string())
}

pub fn read_odo_file(path: &Path) -> Result<Vec<OdoSample>> {
    read_odo(std::fs::File::open(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let imu: Vec<ImuSample> = (0..5)
            .map(|i| ImuSample { t: i as f64 * 0.01, accel: Vec3::new(0.1, -0.2, 9.8 + 1e-13 * i as f64), gyro: Vec3::new(1.0 / 3.0, 0.0, -2e-9) })
            .collect();
        let mut buf = Vec::new();
        write_imu(&mut buf, &imu).unwrap();
        assert_eq!(read_imu(buf.as_slice(), "mem").unwrap(), imu);
        let odo = vec![OdoSample { t: 0.0, v: 0.25, omega: 0.1 }, OdoSample { t: 0.04, v: 0.3, omega: -0.1 }];
        let mut buf = Vec::new();
        write_odo(&mut buf, &odo).unwrap();
        assert_eq!(read_odo(buf.as_slice(), "mem").unwrap(), odo);
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "t,v,omega\n0,0.1,0\n0.04,abc,0\n";
        match read_odo(text.as_bytes(), "odo.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
