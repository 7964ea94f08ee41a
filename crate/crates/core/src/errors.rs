//! Error taxonomy shared by the library and the CLI.
//!
//! The split matters for exit codes: configuration and input problems map to
//! usage failures, while statistical verdicts are not errors at all (they are
//! reported pass/fail). Anything here aborts the requested operation.

use thiserror::Error;

/// All failure modes surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Model parameters violate a structural invariant (row sums, stationarity,
    /// summability, malformed coefficient tails, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A request is syntactically fine but not answerable for this model or
    /// parameter combination.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// Caller-supplied arguments are out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The target quantity is degenerate (for example a limit variance of
    /// zero), so standardizing by it is meaningless.
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    /// Too much Monte Carlo mass was discarded for the summary to be honest.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// A requested accuracy target cannot be certified (for example a series
    /// truncation whose tail bound will not drop below tolerance).
    #[error("precision target unattainable: {0}")]
    Precision(String),

    /// A calibration search hit its resource cap before reaching the
    /// requested confidence level.
    #[error(
        "calibration infeasible at level {level}: reached probability {achieved:.4} \
         against target {target:.4} within the search cap {cap}"
    )]
    CalibrationInfeasible {
        /// Construction level that failed to calibrate.
        level: usize,
        /// Best probability achieved inside the cap.
        achieved: f64,
        /// Probability the calibration was asked to reach.
        target: f64,
        /// Search-extent cap that was exhausted.
        cap: usize,
    },

    /// I/O or serialization trouble while reading or writing artifacts.
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
