use std::path::Path;
use std::process::{Command, Output};

use odocal::geomath::{quat_to_rot, rpy_from_rot};
use odocal::simulator::io::read_dataset;

fn odocal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odocal")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = odocal(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_json(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let i = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn simulate_is_deterministic_and_echoes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = ok(&["simulate", "--scenario", "calibration", "--seed", "7", "-o", s(&a)]);
    ok(&["simulate", "--scenario", "calibration", "--seed", "7", "-o", s(&b)]);
    let manifest: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest["seeds"][0], 7);
    assert!(a.join("manifest.json").exists());
    for f in ["rover.csv", "base.csv", "imu.csv", "odo.csv", "truth.csv", "scenario.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn calibrate_reports_shrinking_stds_for_observable_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let cal = dir.path().join("cal");
    ok(&["simulate", "--scenario", "calibration", "--seed", "3", "-o", s(&ds)]);
    ok(&["calibrate", "--dataset", s(&ds), "--mode", "tc-ar", "-o", s(&cal)]);
    let csv = std::fs::read_to_string(cal.join("calibration.csv")).unwrap();
    for p in ["x", "y", "roll", "pitch", "yaw", "s_w"] {
        let v = column(&csv, &format!("std_{p}"));
        assert!(v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "std_{p} increased");
        assert!(v.last().unwrap() < &v[0]);
    }
    // The velocity scale follows a random walk, so its std may creep up while unobserved.
    let v = column(&csv, "std_s_v");
    assert!(v.windows(2).all(|w| w[1] <= w[0] * 1.01));
    let z = column(&csv, "std_z");
    assert!(z.iter().all(|&x| x > 0.8 * z[0]));
    let errors: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cal.join("errors.json")).unwrap()).unwrap();
    assert!(errors["convergence"]["z"].is_null());
    assert!(errors["calibration"]["x"].as_f64().unwrap().abs() < 0.2);

    let obs = dir.path().join("obs");
    ok(&["observability", "--dataset", s(&ds), "--calibration", s(&cal.join("calibration.csv")), "-o", s(&obs)]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(obs.join("observability.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["rank"], 5);
    assert_eq!(report["crosscheck"][2]["empirically_observable"], false);
}

#[test]
fn dr_eval_with_truth_calibration_matches_library_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    ok(&["simulate", "--scenario", "default", "--seed", "2", "-o", s(&ds)]);
    let d = read_dataset(&ds).unwrap();
    let c = &d.truth.calibration;
    let rpy = rpy_from_rot(&quat_to_rot(&c.q_bm)).map(f64::to_degrees);
    let cal = dir.path().join("truth_calibration.csv");
    std::fs::write(
        &cal,
        format!(
            "t,x,y,z,roll,pitch,yaw,s_v,s_w\n0,{},{},{},{},{},{},{},{}\n",
            c.p_bm.x, c.p_bm.y, c.p_bm.z, rpy.x, rpy.y, rpy.z, c.s_v, c.s_w
        ),
    )
    .unwrap();
    let out = dir.path().join("dr");
    ok(&["dr-eval", "--dataset", s(&ds), "--calibration", s(&cal), "-o", s(&out)]);
    let errors: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("errors.json")).unwrap()).unwrap();
    let start = d.truth.nav_state(d.scenario.outage_start).unwrap();
    let cfg = odocal::fgo::FgoConfig::default();
    let direct = odocal::harness::dr_eval(&d, c, &start, d.duration(), &cfg).unwrap();
    let max = errors["dead_reckoning"]["max"].as_f64().unwrap();
    assert!((max - direct.summary.max).abs() < 1e-3, "{max} vs {}", direct.summary.max);
    assert!(errors["dead_reckoning"]["rmse"].as_f64().unwrap() <= max);
    // Pure function of its inputs.
    let again = dir.path().join("dr2");
    ok(&["dr-eval", "--dataset", s(&ds), "--calibration", s(&cal), "-o", s(&again)]);
    assert_eq!(std::fs::read(out.join("errors.json")).unwrap(), std::fs::read(again.join("errors.json")).unwrap());
}

#[test]
fn failures_emit_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let e = error_json(&odocal(&["calibrate", "--dataset", "/no/such/dir", "-o", s(dir.path())]));
    assert_eq!(e["code"], "invalid_input");
    assert_eq!(e["context"]["command"], "calibrate");
    assert!(e["message"].as_str().unwrap().contains("/no/such/dir"));

    let e = error_json(&odocal(&["montecarlo", "--seeds", "1", "-o", s(dir.path())]));
    assert_eq!(e["code"], "invalid_input");

    let e = error_json(&odocal(&["simulate", "--scenario", "nowhere", "-o", s(dir.path())]));
    assert_eq!(e["code"], "invalid_input");
}

#[test]
fn malformed_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    ok(&["simulate", "--scenario", "calibration", "--seed", "1", "-o", s(&ds)]);
    let imu = ds.join("imu.csv");
    let text = std::fs::read_to_string(&imu).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "0.03,abc,0,0,0,0,0";
    std::fs::write(&imu, lines.join("\n")).unwrap();
    let e = error_json(&odocal(&["calibrate", "--dataset", s(&ds), "-o", s(&dir.path().join("c"))]));
    assert_eq!(e["code"], "parse");
    assert!(e["message"].as_str().unwrap().contains(":5:"), "{}", e["message"]);
}
