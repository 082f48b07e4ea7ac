//! Dataset directories: `rover.csv`, `base.csv`, `imu.csv`, `odo.csv`,
//! `truth.csv` and `scenario.json`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Scenario, TruthRecord, TruthState};
use crate::geomath::{Quat, Vec3};
use crate::gnss::io::{read_observations_file, write_observations_file};
use crate::preintegration::io::{read_imu_file, read_odo_file, write_imu, write_odo};
use crate::{Error, Result};

pub const FILES: [&str; 6] = ["rover.csv", "base.csv", "imu.csv", "odo.csv", "truth.csv", "scenario.json"];

#[derive(Serialize, Deserialize)]
struct TruthRow {
    t: f64,
    px: f64,
    py: f64,
    pz: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    clk_drift: f64,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    scenario: Scenario,
    truth: TruthRecord,
}

pub fn write_truth<W: Write>(w: W, states: &[TruthState]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for s in states {
        wr.serialize(TruthRow {
            t: s.t,
            px: s.p.x,
            py: s.p.y,
            pz: s.p.z,
            vx: s.v.x,
            vy: s.v.y,
            vz: s.v.z,
            qw: s.q.w,
            qx: s.q.i,
            qy: s.q.j,
            qz: s.q.k,
            clk_drift: s.clock_drift,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(r: R, source: &str) -> Result<Vec<TruthState>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        let row: TruthRow = rec.map_err(|e| Error::Parse {
            path: source.into(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        out.push(TruthState {
            t: row.t,
            p: Vec3::new(row.px, row.py, row.pz),
            v: Vec3::new(row.vx, row.vy, row.vz),
            q: Quat::new_unchecked(nalgebra::Quaternion::new(row.qw, row.qx, row.qy, row.qz)),
            clock_drift: row.clk_drift,
        });
    }
    Ok(out)
}

pub fn write_dataset(dir: &Path, d: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_observations_file(&dir.join("rover.csv"), &d.rover)?;
    write_observations_file(&dir.join("base.csv"), &d.base)?;
    write_imu(std::fs::File::create(dir.join("imu.csv"))?, &d.imu)?;
    write_odo(std::fs::File::create(dir.join("odo.csv"))?, &d.odo)?;
    write_truth(std::fs::File::create(dir.join("truth.csv"))?, &d.truth.states)?;
    let file = ScenarioFile { scenario: d.scenario.clone(), truth: d.truth.clone() };
    let mut f = std::fs::File::create(dir.join("scenario.json"))?;
    serde_json::to_writer_pretty(&mut f, &file)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_scenario_file(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    // Accept both a bare scenario and a dataset's scenario.json.
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let inner = v.get("scenario").cloned().unwrap_or(v);
    Ok(serde_json::from_value(inner)?)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(dir.join("scenario.json"))?;
    let file: ScenarioFile = serde_json::from_str(&text)?;
    let scenario = file.scenario;
    let mut truth = file.truth;
    truth.rover_clock.rebuild();
    let truth_path = dir.join("truth.csv");
    truth.states = read_truth(std::fs::File::open(&truth_path)?, &truth_path.display().to_string())?;
    let origin = scenario.origin.geodetic()?;
    let base_ecef = origin.enu_to_ecef(&scenario.base_enu);
    let rover = read_observations_file(&dir.join("rover.csv"), &origin.to_ecef(), &origin)?;
    let base = read_observations_file(&dir.join("base.csv"), &base_ecef, &origin)?;
    let imu = read_imu_file(&dir.join("imu.csv"))?;
    let odo = read_odo_file(&dir.join("odo.csv"))?;
    Ok(Dataset { scenario, rover, base, imu, odo, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate, FaultSpec, OutlierSpec};

    #[test]
    fn round_trip_and_determinism() {
        let mut s = Scenario::calibration_only(11);
        s.trajectory.phases.truncate(2);
        s.faults = FaultSpec { outliers: Some(OutlierSpec::default()), ..Default::default() };
        let d = generate(&s).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_dataset(a.path(), &d).unwrap();
        write_dataset(b.path(), &generate(&s).unwrap()).unwrap();
        for f in FILES {
            let x = std::fs::read(a.path().join(f)).unwrap();
            assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let r = read_dataset(a.path()).unwrap();
        assert_eq!(r.rover, d.rover);
        assert_eq!(r.base, d.base);
        assert_eq!(r.imu, d.imu);
        assert_eq!(r.odo, d.odo);
        assert_eq!(r.truth, d.truth);
        assert_eq!(r.truth.states, d.truth.states);
        assert_eq!(r.truth.rover_clock.offset(3.3), d.truth.rover_clock.offset(3.3));
        assert_eq!(read_scenario_file(&a.path().join("scenario.json")).unwrap(), s);
    }
}
