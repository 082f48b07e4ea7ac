//! Evaluation plumbing: run modes, calibration and dead-reckoning error
//! metrics, Monte-Carlo statistics and the CSV/JSON artifacts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fgo::state::{CalibState, NavState};
use crate::fgo::{dead_reckon, run_calibration, ArMode, CalibrationRun, EpochRecord, FgoConfig, LeverMode, SensorData, Setup};
use crate::geomath::{log_so3, rpy_from_rot, Vec3};
use crate::observability::{convergence_onset, VirtualBodyRates};
use crate::simulator::{generate, Dataset, Scenario, TruthState};
use crate::{parallel, Error, Result};

/// Lever-arm fault used by the lever-arm modes when the scenario has none (m).
pub const LEVER_FAULT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Ambiguity resolution, lever arm as configured.
    TcAr,
    /// Float ambiguities only.
    TcWar,
    /// Faulted lever arm held fixed.
    LeFixed,
    /// Faulted lever arm estimated online.
    LeOnline,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tc-ar" => Ok(Self::TcAr),
            "tc-war" => Ok(Self::TcWar),
            "le-fixed" => Ok(Self::LeFixed),
            "le-online" => Ok(Self::LeOnline),
            _ => Err(Error::InvalidInput(format!("unknown mode '{s}' (tc-ar, tc-war, le-fixed, le-online)"))),
        }
    }

    /// Adjusts the scenario and estimator configuration for this mode.
    pub fn apply(self, scenario: &mut Scenario, cfg: &mut FgoConfig) {
        match self {
            Mode::TcAr => cfg.ar_mode = ArMode::TcAr,
            Mode::TcWar => cfg.ar_mode = ArMode::TcWar,
            Mode::LeFixed | Mode::LeOnline => {
                cfg.ar_mode = ArMode::TcAr;
                cfg.lever_mode = if self == Mode::LeFixed { LeverMode::Fixed } else { LeverMode::Online };
                scenario.faults.lever_arm_error.get_or_insert(Vec3::from_element(LEVER_FAULT));
            }
        }
    }
}

/// Everything needed to re-run a CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Built-in scenario name or scenario JSON path.
    pub scenario: Option<String>,
    pub dataset: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub start: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub lever: Option<LeverMode>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, output: &Path) -> Self {
        Self {
            command: command.into(),
            scenario: None,
            dataset: None,
            config: None,
            calibration: None,
            start: None,
            mode: None,
            lever: None,
            seeds: Vec::new(),
            output: output.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        m.validate()?;
        Ok(m)
    }

    /// Referenced input files must exist.
    pub fn validate(&self) -> Result<()> {
        let files = [&self.dataset, &self.config, &self.calibration, &self.start];
        for p in files.into_iter().flatten() {
            if !p.exists() {
                return Err(Error::InvalidInput(format!("manifest: {} does not exist", p.display())));
            }
        }
        if let Some(s) = &self.scenario {
            if s.ends_with(".json") && !Path::new(s).exists() {
                return Err(Error::InvalidInput(format!("manifest: scenario {s} does not exist")));
            }
        }
        Ok(())
    }
}

/// Estimator setup for a simulated dataset: the initial guess it ships with
/// and the lever arm the estimator is told (including any injected error).
pub fn setup_for(d: &Dataset) -> Result<Setup> {
    Ok(Setup {
        origin: d.origin()?,
        base_ecef: d.base_ecef()?,
        initial: d.truth.initial_guess.calibration.clone(),
        lever: d.truth.lever_arm + d.scenario.faults.lever_arm_error.unwrap_or_default(),
        heading: d.truth.initial_guess.heading,
    })
}

pub fn sensor_data(d: &Dataset) -> SensorData<'_> {
    SensorData { rover: &d.rover, base: &d.base, imu: &d.imu, odo: &d.odo }
}

/// GNSS-aided calibration up to the scenario's outage start.
pub fn calibrate(d: &Dataset, cfg: &FgoConfig) -> Result<CalibrationRun> {
    let mut cfg = cfg.clone();
    if cfg.t_end.is_none() {
        cfg.t_end = Some(d.scenario.outage_start);
    }
    run_calibration(sensor_data(d), &setup_for(d)?, &cfg)
}

pub const PARAMETERS: [&str; 8] = ["x", "y", "z", "roll", "pitch", "yaw", "s_v", "s_w"];

/// Signed calibration errors in [`PARAMETERS`] order (m, deg, unitless).
/// Rotation errors are the roll/pitch/yaw of `R_trueᵀ R_est`.
pub fn calibration_errors(est: &CalibState, truth: &CalibState) -> [f64; 8] {
    let dp = est.p_bm - truth.p_bm;
    let dr = rpy_from_rot(&(truth.r_bm().transpose() * est.r_bm())).map(f64::to_degrees);
    [dp.x, dp.y, dp.z, dr.x, dr.y, dr.z, est.s_v - truth.s_v, est.s_w - truth.s_w]
}

/// Reported standard deviations in [`PARAMETERS`] order.
pub fn calibration_stds(r: &EpochRecord) -> [f64; 8] {
    let s = &r.std;
    [s.p_bm.x, s.p_bm.y, s.p_bm.z, s.rot_deg.x, s.rot_deg.y, s.rot_deg.z, s.s_v, s.s_w]
}

/// Prior standard deviations in [`PARAMETERS`] order.
pub fn calibration_priors(cfg: &FgoConfig) -> [f64; 8] {
    let p = &cfg.priors;
    [p.p_bm, p.p_bm, p.p_bm, p.rot_bm_deg, p.rot_bm_deg, p.rot_bm_deg, p.scale, p.scale]
}

/// Horizontal (headline) and vertical position error statistics (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrSummary {
    pub max: f64,
    pub rmse: f64,
    pub vertical_max: f64,
    pub vertical_rmse: f64,
    pub samples: usize,
}

/// Truth position at `t`, interpolated across gaps of at most `max_gap`.
fn interpolate(truth: &[(f64, Vec3)], t: f64, max_gap: f64) -> Result<Vec3> {
    let i = truth.partition_point(|(s, _)| *s < t - 1e-9);
    match (i.checked_sub(1).map(|j| truth[j]), truth.get(i)) {
        (_, Some(&(s, p))) if (s - t).abs() <= 1e-9 => Ok(p),
        (Some((s0, p0)), Some(&(s1, p1))) if s1 - s0 <= max_gap + 1e-9 => Ok(p0 + (p1 - p0) * ((t - s0) / (s1 - s0))),
        _ => Err(Error::Timing(format!("no truth within {max_gap} s of t = {t}"))),
    }
}

pub const MAX_ALIGNMENT_GAP: f64 = 0.1;

/// MAX and RMSE of horizontal (east/north) position errors of `est` against
/// `truth`, with vertical errors reported separately.
pub fn error_metrics(est: &[(f64, Vec3)], truth: &[(f64, Vec3)]) -> Result<DrSummary> {
    if est.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let (mut max, mut sq, mut vmax, mut vsq) = (0.0f64, 0.0, 0.0f64, 0.0);
    for &(t, p) in est {
        let d = p - interpolate(truth, t, MAX_ALIGNMENT_GAP)?;
        let h = d.x.hypot(d.y);
        max = max.max(h);
        sq += h * h;
        vmax = vmax.max(d.z.abs());
        vsq += d.z * d.z;
    }
    let n = est.len() as f64;
    Ok(DrSummary { max, rmse: (sq / n).sqrt(), vertical_max: vmax, vertical_rmse: (vsq / n).sqrt(), samples: est.len() })
}

pub fn truth_positions(states: &[TruthState]) -> Vec<(f64, Vec3)> {
    states.iter().map(|s| (s.t, s.p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrResult {
    pub trajectory: Vec<NavState>,
    pub summary: DrSummary,
}

/// Dead reckoning over `[start.t, t_end]` with calibration `calib`, scored
/// against the dataset truth.
pub fn dr_eval(d: &Dataset, calib: &CalibState, start: &NavState, t_end: f64, cfg: &FgoConfig) -> Result<DrResult> {
    let trajectory = dead_reckon(&d.imu, &d.odo, calib, start, t_end, cfg)?;
    let est: Vec<(f64, Vec3)> = trajectory.iter().map(|s| (s.t, s.p)).collect();
    let summary = error_metrics(&est, &truth_positions(&d.truth.states))?;
    Ok(DrResult { trajectory, summary })
}

/// Virtual body rates of the truth trajectory over `[t0, t1]` at the truth rate.
pub fn truth_rates(states: &[TruthState], t0: f64, t1: f64) -> Vec<VirtualBodyRates> {
    states
        .windows(2)
        .filter(|w| w[0].t >= t0 - 1e-9 && w[1].t <= t1 + 1e-9)
        .map(|w| {
            let r0 = crate::geomath::quat_to_rot(&w[0].q);
            let r1 = crate::geomath::quat_to_rot(&w[1].q);
            let dt = w[1].t - w[0].t;
            VirtualBodyRates { t: w[0].t, v: r0.transpose() * w[0].v, w: log_so3(&(r0.transpose() * r1)) / dt }
        })
        .collect()
}

/// Outcome of one Monte-Carlo seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    /// `(checkpoint, signed errors, reported stds)` relative to the first epoch.
    pub checkpoints: Vec<(f64, [f64; 8], [f64; 8])>,
    pub final_errors: Option<[f64; 8]>,
    pub final_stds: Option<[f64; 8]>,
    /// Smallest reported z-translation std over the run.
    pub min_z_std: Option<f64>,
    /// Largest |z − z_initial| over the run.
    pub max_z_shift: Option<f64>,
    pub final_cost: f64,
    pub accepted_fixes: usize,
    pub wrong_fixes: usize,
    pub convergence: BTreeMap<String, Option<f64>>,
    pub error: Option<String>,
    pub diverged: bool,
}

/// Counts fixed double-difference integers that disagree with the truth.
pub fn wrong_fixes(run: &CalibrationRun, d: &Dataset) -> usize {
    run.fixes
        .iter()
        .filter(|f| f.validated)
        .flat_map(|f| f.pairs.iter().map(move |p| (f.t, p)))
        .filter(|(t, p)| {
            let truth = d.truth.n_sd(p.sat, p.band, *t).zip(d.truth.n_sd(p.reference, p.band, *t)).map(|(a, b)| a - b);
            truth != Some(p.value)
        })
        .count()
}

/// Summarizes a finished calibration run against the dataset truth.
pub fn outcome(seed: u64, d: &Dataset, run: &CalibrationRun, cfg: &FgoConfig, checkpoints: &[f64]) -> RunOutcome {
    let truth = &d.truth.calibration;
    let t0 = run.records.first().map_or(0.0, |r| r.t);
    let cps = checkpoints
        .iter()
        .filter_map(|&c| run.at(t0 + c).map(|r| (c, calibration_errors(&r.calib, truth), calibration_stds(r))))
        .collect();
    let last = run.last();
    let z0 = d.truth.initial_guess.calibration.p_bm.z;
    let priors = calibration_priors(cfg);
    let times: Vec<f64> = run.records.iter().map(|r| r.t).collect();
    let convergence = PARAMETERS
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let stds: Vec<f64> = run.records.iter().map(|r| calibration_stds(r)[i]).collect();
            (name.to_string(), convergence_onset(&times, &stds, priors[i]))
        })
        .collect();
    RunOutcome {
        seed,
        checkpoints: cps,
        final_errors: last.map(|r| calibration_errors(&r.calib, truth)),
        final_stds: last.map(calibration_stds),
        min_z_std: run.records.iter().map(|r| r.std.p_bm.z).reduce(f64::min),
        max_z_shift: run.records.iter().map(|r| (r.calib.p_bm.z - z0).abs()).reduce(f64::max),
        final_cost: last.map_or(f64::NAN, |r| r.solve.final_cost),
        accepted_fixes: run.fixes.iter().filter(|f| f.validated).count(),
        wrong_fixes: wrong_fixes(run, d),
        convergence,
        error: None,
        diverged: false,
    }
}

pub const CHECKPOINTS: [f64; 3] = [0.0, 60.0, 120.0];

/// Generates and calibrates one seed of `template` in `mode`.
pub fn run_seed(template: &Scenario, cfg: &FgoConfig, mode: Mode, seed: u64, checkpoints: &[f64]) -> RunOutcome {
    let mut sc = template.clone();
    sc.seed = seed;
    let mut cfg = cfg.clone();
    mode.apply(&mut sc, &mut cfg);
    let result = generate(&sc).and_then(|d| calibrate(&d, &cfg).map(|run| outcome(seed, &d, &run, &cfg, checkpoints)));
    result.unwrap_or_else(|e| RunOutcome {
        seed,
        checkpoints: Vec::new(),
        final_errors: None,
        final_stds: None,
        min_z_std: None,
        max_z_shift: None,
        final_cost: f64::NAN,
        accepted_fixes: 0,
        wrong_fixes: 0,
        convergence: BTreeMap::new(),
        error: Some(e.to_string()),
        diverged: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStat {
    pub parameter: String,
    pub checkpoint: f64,
    pub mean_abs: f64,
    pub std: f64,
    pub mean_reported_std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub mode: Mode,
    pub runs: Vec<RunOutcome>,
    pub failures: usize,
    pub stats: Vec<ParamStat>,
}

impl MonteCarlo {
    /// Mean absolute final error of parameter `k` over converged runs.
    pub fn mean_abs_final(&self, k: usize) -> f64 {
        let v: Vec<f64> = self.runs.iter().filter(|r| !r.diverged).filter_map(|r| r.final_errors.map(|e| e[k].abs())).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Marks runs whose final cost exceeds ten times the median (or is not
/// finite) as diverged.
pub fn flag_divergence(runs: &mut [RunOutcome]) {
    let med = median(runs.iter().map(|r| r.final_cost).filter(|c| c.is_finite()).collect());
    for r in runs {
        if !r.final_cost.is_finite() || r.final_cost > 10.0 * med || r.final_errors.is_none() {
            r.diverged = true;
        }
    }
}

/// Runs every seed (concurrently when parallelism is enabled) and aggregates
/// per-parameter statistics at the checkpoints and at the end of the run.
pub fn montecarlo(template: &Scenario, cfg: &FgoConfig, mode: Mode, seeds: &[u64], checkpoints: &[f64]) -> Result<MonteCarlo> {
    if seeds.len() < 2 {
        return Err(Error::InvalidInput("Monte-Carlo needs at least two seeds".into()));
    }
    let mut runs = parallel::map(seeds, |&s| run_seed(template, cfg, mode, s, checkpoints));
    flag_divergence(&mut runs);
    let failures = runs.iter().filter(|r| r.diverged).count();
    for r in runs.iter().filter(|r| r.diverged) {
        log::warn!("seed {} diverged: {}", r.seed, r.error.as_deref().unwrap_or("cost outlier"));
    }
    let ok: Vec<&RunOutcome> = runs.iter().filter(|r| !r.diverged).collect();
    let mut stats = Vec::new();
    let mut push = |checkpoint: f64, rows: &[([f64; 8], [f64; 8])]| {
        for (k, name) in PARAMETERS.iter().enumerate() {
            let n = rows.len();
            let abs: Vec<f64> = rows.iter().map(|(e, _)| e[k].abs()).collect();
            let mean = abs.iter().sum::<f64>() / n.max(1) as f64;
            let var = rows.iter().map(|(e, _)| e[k] * e[k]).sum::<f64>() / n.max(1) as f64;
            let rep = rows.iter().map(|(_, s)| s[k]).sum::<f64>() / n.max(1) as f64;
            stats.push(ParamStat {
                parameter: name.to_string(),
                checkpoint,
                mean_abs: mean,
                std: var.sqrt(),
                mean_reported_std: rep,
                n,
            });
        }
    };
    for &c in checkpoints {
        let rows: Vec<_> =
            ok.iter().filter_map(|r| r.checkpoints.iter().find(|(t, _, _)| *t == c).map(|(_, e, s)| (*e, *s))).collect();
        push(c, &rows);
    }
    let rows: Vec<_> = ok.iter().filter_map(|r| r.final_errors.zip(r.final_stds)).collect();
    push(f64::INFINITY, &rows);
    Ok(MonteCarlo { mode, runs, failures, stats })
}

fn csv_err(e: csv::Error) -> Error {
    Error::from(e)
}

/// Per-epoch calibration estimates and reported stds.
pub fn write_calibration_csv<W: Write>(w: W, run: &CalibrationRun) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(PARAMETERS.iter().map(|p| p.to_string()));
    header.extend(PARAMETERS.iter().map(|p| format!("std_{p}")));
    header.extend(["lever_x", "lever_y", "lever_z", "n_fixed", "ratio"].map(String::from));
    out.write_record(&header).map_err(csv_err)?;
    for r in &run.records {
        let rpy = rpy_from_rot(&r.calib.r_bm()).map(f64::to_degrees);
        let c = &r.calib;
        let mut row: Vec<String> = [r.t, c.p_bm.x, c.p_bm.y, c.p_bm.z, rpy.x, rpy.y, rpy.z, c.s_v, c.s_w]
            .iter()
            .chain(calibration_stds(r).iter())
            .map(|x| x.to_string())
            .collect();
        let lever = c.lever.map(|l| [l.x, l.y, l.z]);
        row.extend((0..3).map(|i| lever.map_or(String::new(), |l| l[i].to_string())));
        row.push(r.n_fixed.to_string());
        row.push(r.ratio.map_or(String::new(), |x| x.to_string()));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CalibRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    roll: f64,
    pitch: f64,
    yaw: f64,
    s_v: f64,
    s_w: f64,
}

/// Final calibration (last row) of a calibration CSV.
pub fn read_calibration_csv(path: &Path) -> Result<CalibState> {
    let text = std::fs::read_to_string(path)?;
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let mut last = None;
    for (i, row) in rd.deserialize::<CalibRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse { path: path.display().to_string(), line: i + 2, message: e.to_string() })?;
        last = Some(row);
    }
    let r = last.ok_or_else(|| Error::InvalidInput(format!("{}: no calibration rows", path.display())))?;
    let rot = crate::geomath::rot_from_rpy(r.roll.to_radians(), r.pitch.to_radians(), r.yaw.to_radians());
    Ok(CalibState { s_v: r.s_v, s_w: r.s_w, p_bm: Vec3::new(r.x, r.y, r.z), q_bm: crate::geomath::rot_to_quat(&rot), lever: None })
}

/// Reported stds (last row) of a calibration CSV, in [`PARAMETERS`] order.
pub fn read_calibration_stds(path: &Path) -> Result<[f64; 8]> {
    let text = std::fs::read_to_string(path)?;
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header = rd.headers().map_err(csv_err)?.clone();
    let cols: Vec<usize> = PARAMETERS
        .iter()
        .map(|p| {
            let name = format!("std_{p}");
            header.iter().position(|h| h == name).ok_or_else(|| Error::InvalidInput(format!("{}: missing column {name}", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut out = None;
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut v = [0.0; 8];
        for (k, &c) in cols.iter().enumerate() {
            v[k] = rec.get(c).unwrap_or("").parse().map_err(|e: std::num::ParseFloatError| Error::Parse {
                path: path.display().to_string(),
                line: i + 2,
                message: e.to_string(),
            })?;
        }
        out = Some(v);
    }
    out.ok_or_else(|| Error::InvalidInput(format!("{}: no calibration rows", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NavRow {
    t: f64,
    px: f64,
    py: f64,
    pz: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    roll: f64,
    pitch: f64,
    yaw: f64,
    bax: f64,
    bay: f64,
    baz: f64,
    bgx: f64,
    bgy: f64,
    bgz: f64,
}

impl NavRow {
    fn from_state(s: &NavState) -> Self {
        let rpy = rpy_from_rot(&s.rotation()).map(f64::to_degrees);
        Self {
            t: s.t,
            px: s.p.x,
            py: s.p.y,
            pz: s.p.z,
            vx: s.v.x,
            vy: s.v.y,
            vz: s.v.z,
            roll: rpy.x,
            pitch: rpy.y,
            yaw: rpy.z,
            bax: s.ba.x,
            bay: s.ba.y,
            baz: s.ba.z,
            bgx: s.bg.x,
            bgy: s.bg.y,
            bgz: s.bg.z,
        }
    }

    fn to_state(&self) -> NavState {
        let r = crate::geomath::rot_from_rpy(self.roll.to_radians(), self.pitch.to_radians(), self.yaw.to_radians());
        NavState {
            t: self.t,
            p: Vec3::new(self.px, self.py, self.pz),
            v: Vec3::new(self.vx, self.vy, self.vz),
            q: crate::geomath::rot_to_quat(&r),
            ba: Vec3::new(self.bax, self.bay, self.baz),
            bg: Vec3::new(self.bgx, self.bgy, self.bgz),
        }
    }
}

pub fn write_trajectory_csv<W: Write>(w: W, states: &[NavState]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in states {
        out.serialize(NavRow::from_state(s)).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<NavState>> {
    let text = std::fs::read_to_string(path)?;
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    rd.deserialize::<NavRow>()
        .enumerate()
        .map(|(i, r)| {
            r.map(|r| r.to_state())
                .map_err(|e| Error::Parse { path: path.display().to_string(), line: i + 2, message: e.to_string() })
        })
        .collect()
}

/// Box-plot-ready rows: one per (seed, checkpoint, parameter), followed by
/// the aggregate statistics.
pub fn write_mc_csv<W: Write>(w: W, mc: &MonteCarlo) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["kind", "seed", "checkpoint", "parameter", "error", "std", "n", "diverged"]).map_err(csv_err)?;
    for r in &mc.runs {
        let finals = r.final_errors.zip(r.final_stds).map(|(e, s)| ("final".to_string(), e, s));
        let cps = r.checkpoints.iter().map(|(c, e, s)| (c.to_string(), *e, *s));
        for (c, e, s) in cps.chain(finals) {
            for (k, p) in PARAMETERS.iter().enumerate() {
                out.write_record([
                    "run",
                    &r.seed.to_string(),
                    &c,
                    p,
                    &e[k].to_string(),
                    &s[k].to_string(),
                    "1",
                    &r.diverged.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    for s in &mc.stats {
        let c = if s.checkpoint.is_finite() { s.checkpoint.to_string() } else { "final".into() };
        out.write_record(["mean_abs", "", &c, &s.parameter, &s.mean_abs.to_string(), &s.std.to_string(), &s.n.to_string(), ""])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Contents of errors.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    /// Final signed calibration errors by parameter (m, deg, unitless).
    pub calibration: Option<BTreeMap<String, f64>>,
    /// First epoch each parameter's std fell below 0.8 of its prior.
    pub convergence: BTreeMap<String, Option<f64>>,
    pub dead_reckoning: Option<DrSummary>,
    pub monte_carlo: Option<Vec<ParamStat>>,
    pub failures: Option<usize>,
}

pub fn named(values: &[f64; 8]) -> BTreeMap<String, f64> {
    PARAMETERS.iter().zip(values).map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(n: usize, f: impl Fn(f64) -> Vec3) -> Vec<(f64, Vec3)> {
        (0..=n).map(|i| (i as f64 * 0.1, f(i as f64 * 0.1))).collect()
    }

    #[test]
    fn metrics_on_closed_forms() {
        let truth = line(1000, |_| Vec3::zeros());
        let s = error_metrics(&truth, &truth).unwrap();
        assert_eq!((s.max, s.rmse), (0.0, 0.0));

        let east = line(1000, |_| Vec3::x());
        let s = error_metrics(&east, &truth).unwrap();
        assert!((s.max - 1.0).abs() < 1e-15 && (s.rmse - 1.0).abs() < 1e-15);

        // Linear drift 0 → 10 m: RMSE tends to 10/√3.
        let n = 100_000;
        let truth = (0..=n).map(|i| (i as f64 * 1e-3, Vec3::zeros())).collect::<Vec<_>>();
        let est = (0..=n).map(|i| (i as f64 * 1e-3, Vec3::new(0.0, 10.0 * i as f64 / n as f64, 3.0))).collect::<Vec<_>>();
        let s = error_metrics(&est, &truth).unwrap();
        assert!((s.max - 10.0).abs() < 1e-12);
        assert!((s.rmse - 10.0 / 3f64.sqrt()).abs() < 1e-3);
        assert!((s.vertical_max - 3.0).abs() < 1e-12);
    }

    #[test]
    fn misaligned_series_are_rejected() {
        let truth = vec![(0.0, Vec3::zeros()), (1.0, Vec3::zeros())];
        assert!(error_metrics(&[(0.5, Vec3::zeros())], &truth).is_err());
        assert!(error_metrics(&[(2.0, Vec3::zeros())], &truth).is_err());
        let truth = vec![(0.0, Vec3::zeros()), (0.1, Vec3::new(1.0, 0.0, 0.0))];
        let s = error_metrics(&[(0.05, Vec3::zeros())], &truth).unwrap();
        assert!((s.max - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn metrics_match_one_pass_reference(errs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -5.0f64..5.0), 1..200)) {
            let truth: Vec<(f64, Vec3)> = (0..errs.len()).map(|i| (i as f64 * 0.1, Vec3::new(i as f64, -(i as f64), 0.5))).collect();
            let est: Vec<(f64, Vec3)> = truth.iter().zip(&errs).map(|((t, p), e)| (*t, p + Vec3::new(e.0, e.1, e.2))).collect();
            let s = error_metrics(&est, &truth).unwrap();
            let (mut m, mut acc) = (0.0f64, 0.0);
            for e in &errs {
                let h = (e.0 * e.0 + e.1 * e.1).sqrt();
                m = m.max(h);
                acc += h * h;
            }
            let rmse = (acc / errs.len() as f64).sqrt();
            prop_assert!((s.max - m).abs() < 1e-9);
            prop_assert!((s.rmse - rmse).abs() < 1e-9);
            prop_assert!(s.rmse <= s.max + 1e-12);
        }
    }

    #[test]
    fn divergence_flags_cost_outliers() {
        let mk = |seed, cost| RunOutcome {
            seed,
            checkpoints: vec![],
            final_errors: Some([0.0; 8]),
            final_stds: Some([0.0; 8]),
            min_z_std: None,
            max_z_shift: None,
            final_cost: cost,
            accepted_fixes: 0,
            wrong_fixes: 0,
            convergence: BTreeMap::new(),
            error: None,
            diverged: false,
        };
        let mut runs = vec![mk(1, 100.0), mk(2, 120.0), mk(3, 5000.0), mk(4, f64::NAN), mk(5, 110.0)];
        flag_divergence(&mut runs);
        let flags: Vec<bool> = runs.iter().map(|r| r.diverged).collect();
        assert_eq!(flags, vec![false, false, true, true, false]);
    }

    #[test]
    fn calibration_errors_of_truth_are_zero() {
        let c = CalibState {
            s_v: 0.01,
            s_w: -0.02,
            p_bm: Vec3::new(0.2, -0.3, 0.1),
            q_bm: crate::geomath::rot_to_quat(&crate::geomath::rot_from_rpy(0.03, -0.02, 0.05)),
            lever: None,
        };
        assert!(calibration_errors(&c, &c).iter().all(|e| e.abs() < 1e-12));
        let mut d = c.clone();
        d.q_bm = crate::geomath::quat_boxplus(&c.q_bm, &Vec3::new(0.0, 0.0, 1f64.to_radians()));
        let e = calibration_errors(&d, &c);
        assert!((e[5] - 1.0).abs() < 1e-9, "{e:?}");
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let states: Vec<NavState> = (0..5).map(|_| NavState::random(&mut rng)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(std::fs::File::create(&path).unwrap(), &states).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        for (a, b) in states.iter().zip(&back) {
            assert!((a.p - b.p).norm() < 1e-12);
            assert!(a.q.angle_to(&b.q) < 1e-9);
        }
    }

    #[test]
    fn mode_parsing() {
        for (s, m) in [("tc-ar", Mode::TcAr), ("tc-war", Mode::TcWar), ("le-fixed", Mode::LeFixed), ("le-online", Mode::LeOnline)] {
            assert_eq!(Mode::parse(s).unwrap(), m);
        }
        assert!(Mode::parse("lc").is_err());
        let mut sc = Scenario::calibration_only(1);
        let mut cfg = FgoConfig::default();
        Mode::LeOnline.apply(&mut sc, &mut cfg);
        assert_eq!(cfg.lever_mode, LeverMode::Online);
        assert_eq!(sc.faults.lever_arm_error, Some(Vec3::from_element(LEVER_FAULT)));
    }
}
