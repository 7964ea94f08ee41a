//! Command-line front end for the quenched DFT toolkit.
//!
//! Every run is identified by a config (command, parameters, model, seed)
//! and writes exactly two files: `<prefix>.csv` with raw rows and
//! `<prefix>.json` with the full summary, including the config itself so
//! any summary can be replayed. Exit status: 0 on success or a passing
//! verdict, 2 on a failing statistical verdict, 1 on usage or validation
//! errors.

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quench_dft_core::counterexample::CounterexampleSpec;
use quench_dft_core::models::ProcessModel;
use quench_dft_core::quenched_lab::{Centering, Mode};
use quench_dft_core::{Error, Result};

use config::{CommandConfig, CounterexampleConfig, ExperimentConfig, SummaryFile};
use run::RunOutput;

#[derive(Parser)]
#[command(
    name = "quench-dft",
    version,
    about = "Monte Carlo lab for quenched limit behavior of discrete Fourier transforms",
    arg_required_else_help = true
)]
struct Cli {
    /// Master seed; every random stream in the run derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads. Falls back to QUENCH_DFT_THREADS, then to one thread
    /// per core. Verdicts do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output prefix: the run writes <prefix>.csv and <prefix>.json.
    #[arg(long, global = true)]
    out: Option<String>,

    /// Run the experiment described by a JSON config file instead of a
    /// subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Re-run the experiment embedded in a previous JSON summary.
    #[arg(long, global = true, value_name = "FILE")]
    replay: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

/// CLI mirror of the sampling mode.
#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Fresh past every replicate.
    Annealed,
    /// One frozen past, drawn from the seed, shared by all replicates.
    Quenched,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Annealed => Mode::Annealed,
            ModeArg::Quenched => Mode::Quenched,
        }
    }
}

/// CLI mirror of the centering choice.
#[derive(Clone, Copy, ValueEnum)]
enum CenterArg {
    /// Normalize the raw sum.
    None,
    /// Subtract the exact conditional expectation first.
    Conditional,
}

impl From<CenterArg> for Centering {
    fn from(c: CenterArg) -> Centering {
        match c {
            CenterArg::None => Centering::None,
            CenterArg::Conditional => Centering::Conditional,
        }
    }
}

#[derive(Args)]
struct ModelArg {
    /// Model JSON file.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one trajectory and write it out.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        /// Path length.
        #[arg(long)]
        n: usize,
        /// Sampling mode.
        #[arg(long, value_enum, default_value_t = ModeArg::Annealed)]
        mode: ModeArg,
    },
    /// Rotated prefix sums of one trajectory at a fixed frequency.
    Dft {
        #[command(flatten)]
        model: ModelArg,
        /// Frequency in radians.
        #[arg(long)]
        theta: f64,
        /// Path length.
        #[arg(long)]
        n: usize,
    },
    /// Spectral density: exact value and a ladder of Cesaro estimates.
    Spectral {
        #[command(flatten)]
        model: ModelArg,
        /// Frequency in radians.
        #[arg(long)]
        theta: f64,
        /// Cesaro orders, comma separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        orders: Vec<usize>,
    },
    /// Monte Carlo test of the normalized DFT against its complex normal limit.
    QuenchedClt {
        #[command(flatten)]
        model: ModelArg,
        /// Frequency in radians.
        #[arg(long)]
        theta: f64,
        /// Partial-sum length.
        #[arg(long)]
        n: usize,
        /// Replicates.
        #[arg(long)]
        reps: usize,
        /// Sampling mode.
        #[arg(long, value_enum, default_value_t = ModeArg::Quenched)]
        mode: ModeArg,
        /// Centering applied before normalization.
        #[arg(long, value_enum, default_value_t = CenterArg::Conditional)]
        center: CenterArg,
    },
    /// Martingale approximation quality along a truncation ladder.
    MartApprox {
        #[command(flatten)]
        model: ModelArg,
        /// Frequency in radians.
        #[arg(long)]
        theta: f64,
        /// Largest truncation order; the ladder runs 0..=r.
        #[arg(long)]
        r: usize,
        /// Partial-sum length.
        #[arg(long)]
        n: usize,
        /// Replicates per ladder point.
        #[arg(long)]
        reps: usize,
    },
    /// Finite-dimensional distributions of the normalized partial-sum path.
    Invariance {
        #[command(flatten)]
        model: ModelArg,
        /// Frequency in radians.
        #[arg(long)]
        theta: f64,
        /// Path length.
        #[arg(long)]
        n: usize,
        /// Replicates.
        #[arg(long)]
        reps: usize,
        /// Evaluation times in (0, 1], comma separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
    },
    /// Quenched run with a fresh uniform frequency per replicate.
    Averaged {
        #[command(flatten)]
        model: ModelArg,
        /// Partial-sum length.
        #[arg(long)]
        n: usize,
        /// Replicates.
        #[arg(long)]
        reps: usize,
    },
    /// Dependence-condition partial sums and convergence verdicts.
    Conditions {
        #[command(flatten)]
        model: ModelArg,
        /// Frequency for the frequency-resolved condition.
        #[arg(long)]
        theta: f64,
        /// Series horizon.
        #[arg(long)]
        horizon: usize,
    },
    /// Calibrated divergence schedule: build, probe, or verify.
    Counterexample {
        #[command(subcommand)]
        action: CxCommand,
    },
}

#[derive(Subcommand)]
enum CxCommand {
    /// Calibrate a fresh schedule level by level.
    Build {
        /// Number of levels.
        #[arg(long)]
        levels: usize,
        /// Divergence margin in (0, 1].
        #[arg(long)]
        tau: f64,
        /// Replicates per calibration stage.
        #[arg(long)]
        reps: usize,
        /// Largest admissible block length.
        #[arg(long)]
        n_max: usize,
        /// Include 0 and pi in the frequency grid.
        #[arg(long, default_value_t = false)]
        endpoints: bool,
    },
    /// Estimate per-level divergence probabilities of a finished schedule.
    Probe {
        /// Schedule file: a build summary or a bare schedule JSON.
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        /// Frequency in radians.
        #[arg(long)]
        theta: f64,
        /// Replicates.
        #[arg(long)]
        reps: usize,
    },
    /// Check the block inequality chain at one level.
    Verify {
        /// Schedule file: a build summary or a bare schedule JSON.
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        /// Level to check.
        #[arg(long)]
        level: usize,
        /// Frequency in radians.
        #[arg(long)]
        theta: f64,
        /// Replicates.
        #[arg(long)]
        reps: usize,
    },
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ProcessModel> {
    ProcessModel::from_json(&read_to_string(path)?)
}

/// Accepts either a bare schedule JSON or a build summary whose results
/// carry the schedule under `spec`.
fn load_spec(path: &Path) -> Result<CounterexampleSpec> {
    let text = read_to_string(path)?;
    if let Ok(summary) = serde_json::from_str::<SummaryFile>(&text) {
        let spec_value = summary.results.get("spec").cloned().ok_or_else(|| {
            Error::InvalidArgument(format!("{} is a summary without a schedule", path.display()))
        })?;
        let spec: CounterexampleSpec = serde_json::from_value(spec_value)
            .map_err(|e| Error::InvalidArgument(format!("schedule in summary: {e}")))?;
        spec.validate()?;
        return Ok(spec);
    }
    let spec: CounterexampleSpec = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("schedule JSON: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

/// Builds the experiment identity from the parsed subcommand.
fn to_config(cmd: Command, seed: u64, output: String) -> Result<ExperimentConfig> {
    let (command, model) = match cmd {
        Command::Simulate { model, n, mode } => {
            (CommandConfig::Simulate { n, mode: mode.into() }, Some(load_model(&model.model)?))
        }
        Command::Dft { model, theta, n } => {
            (CommandConfig::Dft { theta, n }, Some(load_model(&model.model)?))
        }
        Command::Spectral { model, theta, orders } => {
            (CommandConfig::Spectral { theta, orders }, Some(load_model(&model.model)?))
        }
        Command::QuenchedClt { model, theta, n, reps, mode, center } => (
            CommandConfig::QuenchedClt {
                theta,
                n,
                reps,
                mode: mode.into(),
                center: center.into(),
            },
            Some(load_model(&model.model)?),
        ),
        Command::MartApprox { model, theta, r, n, reps } => {
            (CommandConfig::MartApprox { theta, r, n, reps }, Some(load_model(&model.model)?))
        }
        Command::Invariance { model, theta, n, reps, times } => {
            (CommandConfig::Invariance { theta, n, reps, times }, Some(load_model(&model.model)?))
        }
        Command::Averaged { model, n, reps } => {
            (CommandConfig::Averaged { n, reps }, Some(load_model(&model.model)?))
        }
        Command::Conditions { model, theta, horizon } => {
            (CommandConfig::Conditions { theta, horizon }, Some(load_model(&model.model)?))
        }
        Command::Counterexample { action } => {
            let action = match action {
                CxCommand::Build { levels, tau, reps, n_max, endpoints } => {
                    CounterexampleConfig::Build { levels, tau, reps, n_max, endpoints }
                }
                CxCommand::Probe { spec, theta, reps } => {
                    CounterexampleConfig::Probe { spec: load_spec(&spec)?, theta, reps }
                }
                CxCommand::Verify { spec, level, theta, reps } => {
                    CounterexampleConfig::Verify { spec: load_spec(&spec)?, level, theta, reps }
                }
            };
            (CommandConfig::Counterexample { action }, None)
        }
    };
    Ok(ExperimentConfig { command, model, seed, output })
}

/// Resolves the thread budget: flag first, then environment, then default.
fn resolve_threads(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var("QUENCH_DFT_THREADS").ok()?.parse().ok())
}

fn write_outputs(cfg: &ExperimentConfig, out: &RunOutput) -> Result<()> {
    let mut csv = String::with_capacity(out.rows.len() * 32 + 64);
    csv.push_str(out.header);
    csv.push('\n');
    for r in &out.rows {
        csv.push_str(r);
        csv.push('\n');
    }
    std::fs::write(format!("{}.csv", cfg.output), csv)?;

    let summary = SummaryFile {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        results: out.results.clone(),
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    std::fs::write(format!("{}.json", cfg.output), json)?;
    Ok(())
}

fn usage_error(msg: &str) -> Error {
    Error::InvalidArgument(msg.to_string())
}

/// Parsed-flags entry point; returns the process exit code.
fn dispatch(cli: Cli) -> Result<bool> {
    let sources =
        usize::from(cli.command.is_some()) + usize::from(cli.config.is_some()) + usize::from(cli.replay.is_some());
    if sources != 1 {
        return Err(usage_error(
            "pick exactly one of: a subcommand, --config FILE, or --replay FILE",
        ));
    }

    if let Some(n) = resolve_threads(cli.threads) {
        if n > 0 {
            // Ignore a second initialization: the pool is already global.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    let cfg = if let Some(path) = &cli.config {
        if cli.seed.is_some() {
            return Err(usage_error("--seed conflicts with --config; the file carries the seed"));
        }
        let mut cfg = ExperimentConfig::from_json(&read_to_string(path)?)?;
        if let Some(out) = cli.out {
            cfg.output = out;
        }
        cfg
    } else if let Some(path) = &cli.replay {
        if cli.seed.is_some() {
            return Err(usage_error("--seed conflicts with --replay; the summary carries the seed"));
        }
        let summary: SummaryFile = serde_json::from_str(&read_to_string(path)?)
            .map_err(|e| Error::InvalidArgument(format!("summary JSON: {e}")))?;
        let mut cfg = summary.config;
        cfg.validate()?;
        if let Some(out) = cli.out {
            cfg.output = out;
        }
        cfg
    } else {
        let seed = cli.seed.unwrap_or(0);
        let out = cli.out.unwrap_or_else(|| "out".to_string());
        to_config(cli.command.expect("counted above"), seed, out)?
    };

    let output = run::execute(&cfg)?;
    write_outputs(&cfg, &output)?;
    Ok(output.pass.unwrap_or(true))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits, not usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                // A calibration that cannot reach its target is a
                // statistical outcome, not a usage problem.
                Error::CalibrationInfeasible { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
