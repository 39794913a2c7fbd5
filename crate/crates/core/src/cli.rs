//! Command-line front end: `simulate`, `run`, `eval` and `lag-sweep`.

use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::estimator::{run_dataset, run_spp, EstimatorError, RunOutput, RunReport};
use crate::eval::{
    lag_sweep, rmse, service_availability, timing_stats, AlignedErrorSeries, EpochMask, EvalError,
    Metric, PositionRecord,
};
use crate::gnss::ConstellationSet;
use crate::io::{self, IoError, RunConfigFile, RunMode};
use crate::sim::{simulate, ScenarioConfig, SimError};

pub const IMU_FILE: &str = "imu.txt";
pub const GNSS_FILE: &str = "gnss.txt";
pub const TRUTH_FILE: &str = "truth.txt";
pub const SOLUTION_FILE: &str = "solution.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const METRICS_FILE: &str = "metrics.txt";
pub const AVAILABILITY_FILE: &str = "availability.txt";
pub const LAG_SWEEP_FILE: &str = "lag_sweep.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Parser)]
#[command(
    name = "tcfgo",
    version,
    about = "Tightly coupled GNSS/IMU factor-graph estimator"
)]
struct Cli {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate IMU, GNSS and truth files from a scenario.
    Simulate {
        /// Run configuration with a [scenario] table; defaults when omitted.
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Estimate a trajectory from IMU and GNSS files.
    Run(RunArgs),
    /// Compare a solution file against truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// Excluded segments, one `start end` pair per line.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Restrict to epochs where this solution file is also valid.
        #[arg(long)]
        common_epochs: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the estimator for several lags and tabulate accuracy and timing.
    LagSweep {
        #[arg(long, value_delimiter = ',', value_parser = parse_lag, default_value = "5,15,30,60,inf")]
        lags: Vec<f64>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_mode)]
    mode: Option<RunMode>,
    /// Smoothing window in seconds, or `inf` for batch.
    #[arg(long, value_parser = parse_lag)]
    lag: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    imu: Option<PathBuf>,
    #[arg(long)]
    gnss: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_lag(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 => Ok(v),
        _ => Err(format!(
            "'{s}' is not a positive number of seconds or 'inf'"
        )),
    }
}

fn parse_mode(s: &str) -> Result<RunMode, String> {
    s.parse().map_err(|e: IoError| e.to_string())
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code: 0 on success, 2 on usage errors, 1 otherwise.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default())
        .filter_level(level)
        .try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            if matches!(e, CliError::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, output } => cmd_simulate(config.as_deref(), &output, cli.seed),
        Command::Run(args) => cmd_run(&args, cli.seed),
        Command::Eval {
            truth,
            solution,
            mask,
            common_epochs,
            output,
        } => cmd_eval(
            &truth,
            &solution,
            mask.as_deref(),
            common_epochs.as_deref(),
            &output,
        ),
        Command::LagSweep { lags, truth, run } => cmd_lag_sweep(&lags, truth, &run, cli.seed),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| IoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn cmd_simulate(config: Option<&Path>, output: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut rc = match config {
        Some(p) => RunConfigFile::load(p)?,
        None => RunConfigFile::default(),
    };
    if seed.is_some() {
        rc.seed = seed;
    }
    let scenario = rc.scenario.get_or_insert_with(ScenarioConfig::default);
    if let Some(s) = rc.seed {
        scenario.seed = s;
    }
    let sc = simulate(scenario)?;
    rc.estimator.constellations = scenario.constellations();
    create_dir(output)?;
    let (imu, gnss, truth) = (
        output.join(IMU_FILE),
        output.join(GNSS_FILE),
        output.join(TRUTH_FILE),
    );
    io::write_imu_file(&imu, &sc.imu)?;
    io::write_gnss_file(&gnss, &sc.gnss)?;
    let states: Vec<_> = sc
        .gnss
        .iter()
        .filter_map(|e| sc.truth_at(e.timestamp).cloned())
        .collect();
    let counts: Vec<usize> = sc.gnss.iter().map(|e| e.observations.len()).collect();
    let set = ConstellationSet::new(&rc.estimator.constellations).map_err(EstimatorError::from)?;
    io::write_solution_file(
        &truth,
        &io::truth_solutions(&states, &sc.frame, &counts),
        &set,
        false,
    )?;
    rc.imu = Some(imu);
    rc.gnss = Some(gnss);
    rc.truth = Some(truth);
    rc.output = None;
    rc.write_echo(output)?;
    println!(
        "simulated {} s: {} IMU samples, {} GNSS epochs -> {}",
        sc.config.duration,
        sc.imu.len(),
        sc.gnss.len(),
        output.display()
    );
    Ok(())
}

/// Effective configuration of a `run`: file values overridden by flags.
fn effective_config(args: &RunArgs, seed: Option<u64>) -> Result<RunConfigFile, CliError> {
    let mut rc = match &args.config {
        Some(p) => RunConfigFile::load(p)?,
        None => RunConfigFile::default(),
    };
    if let Some(m) = args.mode {
        rc.mode = m;
    }
    if let Some(l) = args.lag {
        rc.estimator.lag = l;
    }
    if seed.is_some() {
        rc.seed = seed;
        rc.apply_seed();
    }
    for (dst, src) in [
        (&mut rc.imu, &args.imu),
        (&mut rc.gnss, &args.gnss),
        (&mut rc.output, &args.output),
    ] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    rc.validate()?;
    Ok(rc)
}

fn estimate(rc: &RunConfigFile) -> Result<RunOutput, CliError> {
    let gnss_path = rc
        .gnss
        .as_ref()
        .ok_or_else(|| CliError::Usage("no GNSS input (--gnss)".into()))?;
    let gnss = io::read_gnss_file(gnss_path)?;
    Ok(match rc.mode {
        RunMode::Spp => run_spp(&gnss, &rc.estimator)?,
        RunMode::Tc => {
            let imu_path = rc
                .imu
                .as_ref()
                .ok_or_else(|| CliError::Usage("no IMU input (--imu)".into()))?;
            let imu = io::read_imu_file(imu_path)?;
            run_dataset(&imu, &gnss, &rc.estimator)?
        }
    })
}

fn output_dir(rc: &RunConfigFile) -> Result<PathBuf, CliError> {
    let dir = rc
        .output
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory (-o)".into()))?;
    create_dir(&dir)?;
    Ok(dir)
}

fn report_lines(r: &RunReport) -> Vec<(&'static str, f64)> {
    vec![
        ("epochs", r.epochs as f64),
        ("valid", r.valid as f64),
        ("unavailable", r.unavailable as f64),
        ("diverged", r.diverged as f64),
        ("mean_opt_time_s", r.mean_optimization_time),
        ("p95_opt_time_s", r.p95_optimization_time),
    ]
}

fn cmd_run(args: &RunArgs, seed: Option<u64>) -> Result<(), CliError> {
    let rc = effective_config(args, seed)?;
    let dir = output_dir(&rc)?;
    let out = estimate(&rc)?;
    let set = rc.estimator.constellation_set()?;
    io::write_solution_file(
        &dir.join(SOLUTION_FILE),
        &out.solutions,
        &set,
        rc.estimator.record_timing,
    )?;
    io::write_metrics_file(&dir.join(REPORT_FILE), &report_lines(&out.report))?;
    rc.write_echo(&dir)?;
    let r = &out.report;
    println!(
        "{} epochs: {} valid, {} unavailable, {} diverged; mean optimization {:.2} ms -> {}",
        r.epochs,
        r.valid,
        r.unavailable,
        r.diverged,
        r.mean_optimization_time * 1e3,
        dir.display()
    );
    Ok(())
}

fn read_records(path: &Path) -> Result<Vec<PositionRecord>, CliError> {
    Ok(io::read_solution_file(path)?
        .iter()
        .map(|r| r.to_position_record())
        .collect())
}

/// Availability thresholds in 0.5 m steps up to 50 m.
fn thresholds() -> Vec<f64> {
    (0..=100).map(|k| 0.5 * k as f64).collect()
}

fn cmd_eval(
    truth: &Path,
    solution: &Path,
    mask: Option<&Path>,
    common: Option<&Path>,
    output: &Path,
) -> Result<(), CliError> {
    let truth = read_records(truth)?;
    let sol = read_records(solution)?;
    let mut m = match mask {
        Some(p) => io::read_mask_file(p)?,
        None => EpochMask::all(),
    };
    if let Some(p) = common {
        m = m.common_with(&read_records(p)?);
    }
    let series = AlignedErrorSeries::align(&truth, &sol)?.masked(&m);
    if series.is_empty() {
        return Err(EvalError::NoEpochs.into());
    }
    let r2 = rmse(&series, Metric::Horizontal, None)?;
    let r3 = rmse(&series, Metric::Spatial, None)?;
    let mut metrics = vec![
        ("epochs", series.len() as f64),
        ("valid_fraction", series.valid_fraction()),
        ("rmse_2d_m", r2),
        ("rmse_3d_m", r3),
    ];
    if let Ok(v) = rmse(&series, Metric::Velocity, None) {
        metrics.push(("rmse_velocity_mps", v));
    }
    if let Ok(t) = timing_stats(&series) {
        metrics.extend([
            ("mean_opt_time_s", t.mean),
            ("p95_opt_time_s", t.p95),
            ("max_opt_time_s", t.max),
        ]);
    }
    create_dir(output)?;
    io::write_metrics_file(&output.join(METRICS_FILE), &metrics)?;
    let curve = service_availability(&series, &thresholds())?;
    io::write_availability_file(&output.join(AVAILABILITY_FILE), &curve)?;
    let at10 = curve.iter().find(|p| p.0 == 10.0).map_or(f64::NAN, |p| p.1);
    println!(
        "{} epochs: 2D RMSE {r2:.3} m, 3D RMSE {r3:.3} m, availability at 10 m {:.1}% -> {}",
        series.len(),
        at10 * 100.0,
        output.display()
    );
    Ok(())
}

fn cmd_lag_sweep(
    lags: &[f64],
    truth: Option<PathBuf>,
    args: &RunArgs,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut rc = effective_config(args, seed)?;
    if truth.is_some() {
        rc.truth = truth;
    }
    let dir = output_dir(&rc)?;
    let (Some(imu), Some(gnss), Some(truth)) = (&rc.imu, &rc.gnss, &rc.truth) else {
        return Err(CliError::Usage(
            "lag-sweep needs --imu, --gnss and --truth".into(),
        ));
    };
    let imu = io::read_imu_file(imu)?;
    let gnss = io::read_gnss_file(gnss)?;
    let truth = read_records(truth)?;
    let rows = lag_sweep(&imu, &gnss, &truth, &rc.estimator, lags)?;
    io::write_lag_sweep_file(&dir.join(LAG_SWEEP_FILE), &rows)?;
    rc.write_echo(&dir)?;
    for r in &rows {
        println!(
            "lag {:>6}: 2D {:.3} m, 3D {:.3} m, mean optimization {:.2} ms",
            r.lag,
            r.rmse_2d,
            r.rmse_3d,
            r.mean_optimization_time * 1e3
        );
    }
    Ok(())
}
