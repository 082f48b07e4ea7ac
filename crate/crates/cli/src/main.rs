//! `odocal` command-line front end.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use odocal::fgo::{FgoConfig, LeverMode};
use odocal::geomath::quat_to_rot;
use odocal::harness::{self, ErrorSummary, Mode, RunManifest, CHECKPOINTS, PARAMETERS};
use odocal::observability::{analyze, empirical_crosscheck, DEFAULT_RANK_TOL};
use odocal::simulator::io::{read_dataset, read_scenario_file, write_dataset};
use odocal::simulator::{self, Scenario};
use odocal::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "odocal", version, about = "GNSS/IMU/odometer online calibration toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scenario.
    Simulate(SimulateArgs),
    /// Calibrate the odometer from a dataset.
    Calibrate(CalibrateArgs),
    /// Rank analysis of the extrinsic calibration on a dataset's truth motion.
    Observability(ObservabilityArgs),
    /// Dead-reckon through the outage with a given calibration.
    DrEval(DrEvalArgs),
    /// Monte-Carlo calibration statistics over many seeds.
    Montecarlo(MontecarloArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    TcAr,
    TcWar,
    LeFixed,
    LeOnline,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::TcAr => Mode::TcAr,
            CliMode::TcWar => Mode::TcWar,
            CliMode::LeFixed => Mode::LeFixed,
            CliMode::LeOnline => Mode::LeOnline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliLever {
    Fixed,
    Online,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario (`default`, `calibration`) or a scenario JSON file.
    #[arg(long, default_value = "default")]
    scenario: String,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    dataset: PathBuf,
    /// Estimator configuration JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tc-ar")]
    mode: CliMode,
    /// Lever-arm handling; overrides the mode and config.
    #[arg(long, value_enum)]
    lever: Option<CliLever>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ObservabilityArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Analysis span (s); defaults to the circle phase up to the outage.
    #[arg(long, default_value_t = 45.0)]
    t0: f64,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    tolerance: f64,
    /// Calibration CSV whose final stds are compared with the analysis.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct DrEvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Calibration CSV (its last row is used).
    #[arg(long)]
    calibration: PathBuf,
    /// Trajectory CSV supplying the state at the outage start; truth if omitted.
    #[arg(long)]
    start: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct MontecarloArgs {
    /// Manifest from an earlier run; replaces the other flags.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "calibration")]
    scenario: String,
    /// Seed range `a..b` (exclusive) or a comma-separated list.
    #[arg(long, default_value = "1..41")]
    seeds: String,
    #[arg(long, value_enum, default_value = "tc-ar")]
    mode: CliMode,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidInput(format!("bad seed list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn load_scenario(name: &str, seed: Option<u64>) -> Result<Scenario> {
    let mut sc = if name.ends_with(".json") || Path::new(name).is_file() {
        read_scenario_file(Path::new(name))?
    } else {
        Scenario::by_name(name, seed.unwrap_or(1))?
    };
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn require(p: &Path) -> Result<&Path> {
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::InvalidInput(format!("{} does not exist", p.display())))
    }
}

fn load_config(path: Option<&Path>) -> Result<FgoConfig> {
    path.map_or_else(|| Ok(FgoConfig::default()), |p| FgoConfig::from_file(require(p)?))
}

/// Writes the manifest next to the outputs and echoes it on stdout.
fn echo(m: &RunManifest) -> Result<()> {
    m.write(&m.output)?;
    println!("{}", serde_json::to_string(m)?);
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let sc = load_scenario(&a.scenario, a.seed)?;
    let d = simulator::generate(&sc)?;
    write_dataset(&a.out, &d)?;
    log::info!("{} rover observations, {} IMU samples, {:.0} s", d.rover.len(), d.imu.len(), d.duration());
    let mut m = RunManifest::new("simulate", &a.out);
    m.scenario = Some(a.scenario.clone());
    m.seeds = vec![sc.seed];
    echo(&m)
}

fn calibrate(a: &CalibrateArgs) -> Result<()> {
    let mut d = read_dataset(require(&a.dataset)?)?;
    let mut cfg = load_config(a.config.as_deref())?;
    let mode = Mode::from(a.mode);
    mode.apply(&mut d.scenario, &mut cfg);
    if let Some(l) = a.lever {
        cfg.lever_mode = match l {
            CliLever::Fixed => LeverMode::Fixed,
            CliLever::Online => LeverMode::Online,
        };
    }
    let run = harness::calibrate(&d, &cfg)?;
    std::fs::create_dir_all(&a.out)?;
    harness::write_calibration_csv(File::create(a.out.join("calibration.csv"))?, &run)?;
    let navs: Vec<_> = run.records.iter().map(|r| r.nav.clone()).collect();
    harness::write_trajectory_csv(File::create(a.out.join("trajectory.csv"))?, &navs)?;
    let o = harness::outcome(d.scenario.seed, &d, &run, &cfg, &CHECKPOINTS);
    let summary = ErrorSummary {
        calibration: o.final_errors.as_ref().map(harness::named),
        convergence: o.convergence,
        dead_reckoning: None,
        monte_carlo: None,
        failures: None,
    };
    harness::write_json(&a.out.join("errors.json"), &summary)?;
    for w in &run.warnings {
        log::warn!("{w}");
    }
    log::info!("{} epochs, {} validated fixes, {} outliers", run.records.len(), o.accepted_fixes, run.outliers.len());
    let mut m = RunManifest::new("calibrate", &a.out);
    m.dataset = Some(a.dataset.clone());
    m.config = a.config.clone();
    m.mode = Some(mode);
    m.lever = Some(cfg.lever_mode);
    m.seeds = vec![d.scenario.seed];
    echo(&m)
}

fn observability(a: &ObservabilityArgs) -> Result<()> {
    let d = read_dataset(require(&a.dataset)?)?;
    let t1 = a.t1.unwrap_or(d.scenario.outage_start);
    let rates = harness::truth_rates(&d.truth.states, a.t0, t1);
    if rates.is_empty() {
        return Err(Error::InvalidInput(format!("no truth samples in [{}, {t1}]", a.t0)));
    }
    let c = &d.truth.calibration;
    let report = analyze(&rates, &quat_to_rot(&c.q_bm).transpose(), &c.p_bm, a.tolerance);
    let crosscheck = match &a.calibration {
        Some(p) => {
            let prior = harness::calibration_priors(&load_config(a.config.as_deref())?);
            let post = harness::read_calibration_stds(require(p)?)?;
            Some(empirical_crosscheck(&PARAMETERS, &prior, &post, Some(&report)))
        }
        None => None,
    };
    std::fs::create_dir_all(&a.out)?;
    harness::write_json(&a.out.join("observability.json"), &json!({ "report": report, "crosscheck": crosscheck }))?;

    eprintln!("rank {} of 6 (tolerance {:e}), {} blocks", report.rank, report.tolerance, report.blocks);
    eprintln!("{:<3} {:>14}    {:<8} {:>12}", "k", "singular value", "axis", "identifiable");
    for (i, name) in PARAMETERS[..6].iter().enumerate() {
        eprintln!("{:<3} {:>14.6e}    {:<8} {:>12}", i + 1, report.singular_values[i], name, report.identifiable[i]);
    }
    for v in crosscheck.iter().flatten() {
        eprintln!(
            "{:<8} prior {:>10.4e} posterior {:>10.4e} observable {:<5}{}",
            v.parameter,
            v.prior_std,
            v.posterior_std,
            v.empirically_observable,
            if v.mismatch { " (disagrees with rank analysis)" } else { "" }
        );
    }
    let mut m = RunManifest::new("observability", &a.out);
    m.dataset = Some(a.dataset.clone());
    m.calibration = a.calibration.clone();
    m.config = a.config.clone();
    echo(&m)
}

fn dr_eval(a: &DrEvalArgs) -> Result<()> {
    let d = read_dataset(require(&a.dataset)?)?;
    let cfg = load_config(a.config.as_deref())?;
    let calib = harness::read_calibration_csv(require(&a.calibration)?)?;
    let t0 = d.scenario.outage_start;
    let start = match &a.start {
        Some(p) => {
            let states = harness::read_trajectory_csv(require(p)?)?;
            states
                .into_iter()
                .rfind(|s| s.t <= t0 + 1e-9)
                .ok_or_else(|| Error::InvalidInput(format!("{}: no state at or before {t0} s", p.display())))?
        }
        None => d.truth.nav_state(t0).ok_or_else(|| Error::InvalidInput(format!("no truth at {t0} s")))?,
    };
    let r = harness::dr_eval(&d, &calib, &start, d.duration(), &cfg)?;
    std::fs::create_dir_all(&a.out)?;
    harness::write_trajectory_csv(File::create(a.out.join("trajectory.csv"))?, &r.trajectory)?;
    let summary = ErrorSummary {
        calibration: Some(harness::named(&harness::calibration_errors(&calib, &d.truth.calibration))),
        convergence: Default::default(),
        dead_reckoning: Some(r.summary),
        monte_carlo: None,
        failures: None,
    };
    harness::write_json(&a.out.join("errors.json"), &summary)?;
    eprintln!("horizontal MAX {:.3} m, RMSE {:.3} m over {} states", r.summary.max, r.summary.rmse, r.summary.samples);
    let mut m = RunManifest::new("dr-eval", &a.out);
    m.dataset = Some(a.dataset.clone());
    m.calibration = Some(a.calibration.clone());
    m.start = a.start.clone();
    m.config = a.config.clone();
    echo(&m)
}

fn montecarlo(a: &MontecarloArgs) -> Result<()> {
    let m = match &a.manifest {
        Some(p) => {
            let mut m = RunManifest::read(require(p)?)?;
            if let Some(o) = &a.out {
                m.output = o.clone();
            }
            m
        }
        None => {
            let out = a.out.clone().ok_or_else(|| Error::InvalidInput("--out is required without --manifest".into()))?;
            let mut m = RunManifest::new("montecarlo", &out);
            m.scenario = Some(a.scenario.clone());
            m.seeds = parse_seeds(&a.seeds)?;
            m.mode = Some(a.mode.into());
            m.config = a.config.clone();
            m
        }
    };
    let mode = m.mode.unwrap_or(Mode::TcAr);
    let sc = load_scenario(m.scenario.as_deref().unwrap_or("calibration"), None)?;
    let cfg = load_config(m.config.as_deref())?;
    let mc = harness::montecarlo(&sc, &cfg, mode, &m.seeds, &CHECKPOINTS)?;
    std::fs::create_dir_all(&m.output)?;
    harness::write_mc_csv(File::create(m.output.join("mc_stats.csv"))?, &mc)?;
    let finals: [f64; 8] = std::array::from_fn(|k| mc.mean_abs_final(k));
    let summary = ErrorSummary {
        calibration: Some(harness::named(&finals)),
        convergence: Default::default(),
        dead_reckoning: None,
        monte_carlo: Some(mc.stats.clone()),
        failures: Some(mc.failures),
    };
    harness::write_json(&m.output.join("errors.json"), &summary)?;
    eprintln!("{} runs, {} diverged", mc.runs.len(), mc.failures);
    for (k, p) in PARAMETERS.iter().enumerate() {
        eprintln!("{p:<6} mean |error| {:.4e}", finals[k]);
    }
    echo(&RunManifest { command: "montecarlo".into(), mode: Some(mode), ..m })
}

fn context(cmd: &Command) -> serde_json::Value {
    match cmd {
        Command::Simulate(a) => json!({ "command": "simulate", "scenario": a.scenario, "out": a.out }),
        Command::Calibrate(a) => json!({ "command": "calibrate", "dataset": a.dataset, "config": a.config, "out": a.out }),
        Command::Observability(a) => json!({ "command": "observability", "dataset": a.dataset, "out": a.out }),
        Command::DrEval(a) => json!({ "command": "dr-eval", "dataset": a.dataset, "calibration": a.calibration, "out": a.out }),
        Command::Montecarlo(a) => json!({ "command": "montecarlo", "manifest": a.manifest, "scenario": a.scenario, "out": a.out }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Observability(a) => observability(a),
        Command::DrEval(a) => dr_eval(a),
        Command::Montecarlo(a) => montecarlo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let err = json!({ "code": e.code(), "message": e.to_string(), "context": context(&cli.command) });
            eprintln!("{err}");
            ExitCode::FAILURE
        }
    }
}
