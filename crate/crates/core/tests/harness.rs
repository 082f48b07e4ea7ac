use odocal::fgo::FgoConfig;
use odocal::geomath::{quat_boxplus, Vec3};
use odocal::harness::{dr_eval, error_metrics, truth_positions};
use odocal::simulator::{generate, Phase, Scenario, SensorNoiseSpec, TrajectorySpec};

fn noiseless(mut sc: Scenario) -> Scenario {
    sc.noise = SensorNoiseSpec::noiseless();
    sc
}

#[test]
fn truth_calibration_dead_reckons_noiseless_drive() {
    let d = generate(&noiseless(Scenario::default_with_seed(4))).unwrap();
    let start = d.truth.nav_state(d.scenario.outage_start).unwrap();
    let r = dr_eval(&d, &d.truth.calibration, &start, d.duration(), &FgoConfig::default()).unwrap();
    assert!(r.trajectory.last().unwrap().t >= d.duration() - 1.0);
    assert!(r.summary.max < 0.1, "{:?}", r.summary);
    assert!(r.summary.rmse <= r.summary.max);
}

#[test]
fn yaw_mount_error_drifts_laterally() {
    let mut sc = noiseless(Scenario::calibration_only(2));
    sc.trajectory = TrajectorySpec {
        phases: vec![
            Phase::Stationary { duration: 5.0 },
            Phase::StraightAccel { accel: 0.5, v_target: 1.0 },
            Phase::StraightConst { duration: 110.0 },
        ],
        start_heading: 0.4,
        ramp: 1.0,
    };
    let d = generate(&sc).unwrap();
    let t0 = d.truth.states.iter().find(|s| s.v.norm() > 1.0 - 1e-9).unwrap().t;
    let start = d.truth.nav_state(t0).unwrap();
    let mut calib = d.truth.calibration.clone();
    calib.q_bm = quat_boxplus(&calib.q_bm, &Vec3::new(0.0, 0.0, 3f64.to_radians()));
    let r = dr_eval(&d, &calib, &start, t0 + 100.0, &FgoConfig::default()).unwrap();
    let expected = 100.0 * 3f64.to_radians().sin();
    assert!((r.summary.max - expected).abs() < 0.1 * expected, "{} vs {expected}", r.summary.max);
}

#[test]
fn dr_eval_is_pure_and_consistent_with_direct_metrics() {
    let d = generate(&Scenario::default_with_seed(5)).unwrap();
    let start = d.truth.nav_state(150.0).unwrap();
    let cfg = FgoConfig::default();
    let a = dr_eval(&d, &d.truth.calibration, &start, 200.0, &cfg).unwrap();
    let b = dr_eval(&d, &d.truth.calibration, &start, 200.0, &cfg).unwrap();
    assert_eq!(a, b);
    let est: Vec<_> = a.trajectory.iter().map(|s| (s.t, s.p)).collect();
    assert_eq!(error_metrics(&est, &truth_positions(&d.truth.states)).unwrap(), a.summary);
}
