//! Experiment configuration: the single JSON object that identifies a run.
//!
//! A config captures everything that determines the output bytes: the
//! command with its parameters, the model (or divergence schedule), and the
//! master seed. Execution details like thread count and output location are
//! deliberately outside it, so the same config reproduces the same verdicts
//! anywhere. Parsing is strict: unknown keys are rejected at every level.

use quench_dft_core::counterexample::CounterexampleSpec;
use quench_dft_core::models::ProcessModel;
use quench_dft_core::quenched_lab::{Centering, Mode};
use quench_dft_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// One fully specified experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// The operation to run, with its parameters.
    pub command: CommandConfig,
    /// Model under study. Absent exactly for `counterexample`, which carries
    /// its own schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ProcessModel>,
    /// Master seed behind every random stream of the run.
    pub seed: u64,
    /// Output prefix the run wrote (or will write) `<prefix>.csv` and
    /// `<prefix>.json` to. Informational for replay.
    pub output: String,
}

/// Per-command parameters, tagged by the command name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CommandConfig {
    /// Draw one trajectory and write it out.
    Simulate {
        /// Path length.
        n: usize,
        /// Fresh past, or a frozen one drawn from the seed.
        mode: Mode,
    },
    /// Rotated prefix sums of one trajectory at a fixed frequency.
    Dft {
        /// Frequency in radians.
        theta: f64,
        /// Path length.
        n: usize,
    },
    /// Spectral density: exact value and a ladder of Cesaro estimates.
    Spectral {
        /// Frequency in radians.
        theta: f64,
        /// Cesaro orders to evaluate, strictly increasing.
        orders: Vec<usize>,
    },
    /// Monte Carlo test of the normalized DFT against its complex normal
    /// limit.
    QuenchedClt {
        /// Frequency in radians.
        theta: f64,
        /// Partial-sum length.
        n: usize,
        /// Replicates.
        reps: usize,
        /// Fresh past per replicate, or one shared frozen past.
        mode: Mode,
        /// What to subtract before normalizing.
        center: Centering,
    },
    /// Martingale approximation quality along a truncation ladder.
    MartApprox {
        /// Frequency in radians.
        theta: f64,
        /// Largest truncation order; the ladder runs 0..=r.
        r: usize,
        /// Partial-sum length.
        n: usize,
        /// Replicates per ladder point.
        reps: usize,
    },
    /// Finite-dimensional distributions of the normalized partial-sum path.
    Invariance {
        /// Frequency in radians.
        theta: f64,
        /// Path length.
        n: usize,
        /// Replicates.
        reps: usize,
        /// Evaluation times in (0, 1], strictly increasing.
        times: Vec<f64>,
    },
    /// Quenched run with a fresh uniform frequency per replicate.
    Averaged {
        /// Partial-sum length.
        n: usize,
        /// Replicates.
        reps: usize,
    },
    /// Dependence-condition partial sums and convergence verdicts.
    Conditions {
        /// Frequency for the frequency-resolved condition.
        theta: f64,
        /// Series horizon.
        horizon: usize,
    },
    /// Calibrated divergence schedule: build, probe, or verify.
    Counterexample {
        /// Which counterexample operation to run.
        action: CounterexampleConfig,
    },
}

/// The three counterexample operations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CounterexampleConfig {
    /// Calibrate a fresh schedule level by level.
    Build {
        /// Number of levels.
        levels: usize,
        /// Divergence margin in (0, 1].
        tau: f64,
        /// Replicates per calibration stage.
        reps: usize,
        /// Largest admissible block length.
        n_max: usize,
        /// Include 0 and pi in the frequency grid.
        endpoints: bool,
    },
    /// Estimate per-level divergence probabilities of a finished schedule.
    Probe {
        /// The schedule, embedded so the run is self-contained.
        spec: CounterexampleSpec,
        /// Frequency in radians.
        theta: f64,
        /// Replicates.
        reps: usize,
    },
    /// Check the block inequality chain at one level.
    Verify {
        /// The schedule, embedded so the run is self-contained.
        spec: CounterexampleSpec,
        /// Level to check.
        level: usize,
        /// Frequency in radians.
        theta: f64,
        /// Replicates.
        reps: usize,
    },
}

impl CommandConfig {
    /// Stable kebab-case command name, as it appears on the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            CommandConfig::Simulate { .. } => "simulate",
            CommandConfig::Dft { .. } => "dft",
            CommandConfig::Spectral { .. } => "spectral",
            CommandConfig::QuenchedClt { .. } => "quenched-clt",
            CommandConfig::MartApprox { .. } => "mart-approx",
            CommandConfig::Invariance { .. } => "invariance",
            CommandConfig::Averaged { .. } => "averaged",
            CommandConfig::Conditions { .. } => "conditions",
            CommandConfig::Counterexample { .. } => "counterexample",
        }
    }
}

fn check(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg.to_string()))
    }
}

fn finite_theta(theta: f64) -> Result<()> {
    check(theta.is_finite(), "theta must be a finite angle in radians")
}

impl ExperimentConfig {
    /// Full validation: parameter ranges, model presence, and the embedded
    /// model or schedule's own invariants.
    pub fn validate(&self) -> Result<()> {
        match (&self.command, &self.model) {
            (CommandConfig::Counterexample { .. }, Some(_)) => {
                return Err(Error::InvalidArgument(
                    "counterexample runs carry their own schedule; drop the model".into(),
                ))
            }
            (CommandConfig::Counterexample { .. }, None) => {}
            (_, None) => {
                return Err(Error::InvalidArgument(format!(
                    "command {} needs a model",
                    self.command.name()
                )))
            }
            (_, Some(m)) => m.validate()?,
        }
        check(!self.output.is_empty(), "output prefix must be nonempty")?;
        match &self.command {
            CommandConfig::Simulate { n, .. } | CommandConfig::Dft { n, .. } => {
                check(*n >= 1, "path length n must be at least 1")?;
                if let CommandConfig::Dft { theta, .. } = &self.command {
                    finite_theta(*theta)?;
                }
            }
            CommandConfig::Spectral { theta, orders } => {
                finite_theta(*theta)?;
                check(!orders.is_empty(), "need at least one Cesaro order")?;
                check(orders[0] >= 1, "Cesaro orders start at 1")?;
                check(
                    orders.windows(2).all(|w| w[0] < w[1]),
                    "Cesaro orders must be strictly increasing",
                )?;
            }
            CommandConfig::QuenchedClt { theta, n, reps, .. } => {
                finite_theta(*theta)?;
                check(*n >= 1 && *reps >= 1, "need positive n and reps")?;
            }
            CommandConfig::MartApprox { theta, n, reps, .. } => {
                finite_theta(*theta)?;
                check(*n >= 1 && *reps >= 1, "need positive n and reps")?;
            }
            CommandConfig::Invariance { theta, n, reps, times } => {
                finite_theta(*theta)?;
                check(*n >= 1 && *reps >= 1, "need positive n and reps")?;
                check(!times.is_empty(), "need at least one evaluation time")?;
                check(
                    times.iter().all(|t| *t > 0.0 && *t <= 1.0),
                    "evaluation times must lie in (0, 1]",
                )?;
                check(
                    times.windows(2).all(|w| w[0] < w[1]),
                    "evaluation times must be strictly increasing",
                )?;
            }
            CommandConfig::Averaged { n, reps } => {
                check(*n >= 1 && *reps >= 1, "need positive n and reps")?;
            }
            CommandConfig::Conditions { theta, horizon } => {
                finite_theta(*theta)?;
                check(*horizon >= 1, "horizon must be at least 1")?;
            }
            CommandConfig::Counterexample { action } => match action {
                CounterexampleConfig::Build { levels, tau, reps, n_max, .. } => {
                    check(*levels >= 1, "need at least one level")?;
                    check(
                        tau.is_finite() && *tau > 0.0 && *tau <= 1.0,
                        "tau must lie in (0, 1]",
                    )?;
                    check(*reps >= 1, "need positive reps")?;
                    check(*n_max >= 2, "search cap must allow a block beyond the seed")?;
                }
                CounterexampleConfig::Probe { spec, theta, reps } => {
                    spec.validate()?;
                    finite_theta(*theta)?;
                    check(*reps >= 1, "need positive reps")?;
                }
                CounterexampleConfig::Verify { spec, level, theta, reps } => {
                    spec.validate()?;
                    finite_theta(*theta)?;
                    check(*reps >= 1, "need positive reps")?;
                    check(
                        (1..=spec.levels.len()).contains(level),
                        "level must index an existing schedule level",
                    )?;
                }
            },
        }
        Ok(())
    }

    /// Strict parse followed by validation.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// On-disk shape of a JSON summary: version, the config that produced it,
/// and the per-command results object.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryFile {
    /// Version of the binary that wrote the summary.
    pub version: String,
    /// The experiment, replayable as is.
    pub config: ExperimentConfig,
    /// Every statistic, threshold, oracle value, and verdict of the run.
    pub results: serde_json::Value,
}
