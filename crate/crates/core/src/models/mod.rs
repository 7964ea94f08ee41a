//! Stationary process models, frozen pasts, and sampled trajectories.
//!
//! Three model families share one interface: causal linear filters of i.i.d.
//! innovations, functionals of finite-state stationary Markov chains, and
//! the deterministic rotation on a cycle started uniformly. Each can sample
//! a stationary path, freeze a time-zero past, continue a fresh future given
//! that past, and evaluate the conditional expectation of its frequency-
//! rotated partial sum in closed form.
//!
//! Time convention: the frozen information set at time 0 contains everything
//! through index 0, so `x_0` (respectively the chain state at time 0) is
//! part of the past. Fresh randomness starts at index 1.

mod cycle;
mod linear;
mod markov;

pub use cycle::CycleRotationModel;
pub use linear::{GeometricTail, LinearAdaptedModel, LinearCondExp};
pub(crate) use linear::TransferTable;
pub use markov::MarkovFunctionalModel;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize};

use crate::rng::{Stream, StreamId};
use crate::{Error, Result};

/// Angular frequency in radians, canonicalized into `[0, 2*pi)` on
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Frequency(f64);

impl Frequency {
    /// Wraps `theta` into `[0, 2*pi)`. Non-finite input is refused.
    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite frequency {theta}")));
        }
        let mut t = theta.rem_euclid(std::f64::consts::TAU);
        // rem_euclid of a tiny negative rounds up to exactly tau.
        if t >= std::f64::consts::TAU {
            t = 0.0;
        }
        Ok(Frequency(t))
    }

    /// The canonical angle in `[0, 2*pi)`.
    pub fn radians(self) -> f64 {
        self.0
    }

    /// `exp(i * theta)`. Quarter turns return the exact units `1`, `i`,
    /// `-1`, `-i`: the usual spellings of those angles all canonicalize to
    /// the same bit pattern, and exactness there lets rotation eigenvalue
    /// identities close under the arithmetic instead of drifting at the
    /// last ulp.
    pub fn phase(self) -> Complex64 {
        const QUARTER: f64 = std::f64::consts::FRAC_PI_2;
        if self.0 == 0.0 {
            Complex64::new(1.0, 0.0)
        } else if self.0 == QUARTER {
            Complex64::new(0.0, 1.0)
        } else if self.0 == std::f64::consts::PI {
            Complex64::new(-1.0, 0.0)
        } else if self.0 == 3.0 * QUARTER {
            Complex64::new(0.0, -1.0)
        } else {
            Complex64::new(self.0.cos(), self.0.sin())
        }
    }
}

impl<'de> Deserialize<'de> for Frequency {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = f64::deserialize(d)?;
        Frequency::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Innovation distributions, all centered with unit variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationDist {
    /// N(0, 1).
    #[default]
    StandardNormal,
    /// Uniform on {-1, +1}.
    Rademacher,
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    UniformSymmetric,
}

impl InnovationDist {
    /// Draws one innovation.
    pub fn sample(self, rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        use rand::Rng;
        match self {
            InnovationDist::StandardNormal => rng.sample(rand_distr::StandardNormal),
            InnovationDist::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            InnovationDist::UniformSymmetric => {
                let u: f64 = rng.gen();
                (2.0 * u - 1.0) * 3f64.sqrt()
            }
        }
    }

    /// Second moment; one for every supported distribution.
    pub fn variance(self) -> f64 {
        1.0
    }
}

/// A stationary process model. Serialized form is internally tagged by
/// `variant` with the snake-case family name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ProcessModel {
    /// Causal linear filter of i.i.d. innovations.
    Linear(LinearAdaptedModel),
    /// Real functional of a stationary finite-state Markov chain.
    Markov(MarkovFunctionalModel),
    /// Deterministic rotation on `Z/mZ` started uniformly.
    Cycle(CycleRotationModel),
}

impl ProcessModel {
    /// Structural validation; every constructor path funnels through this.
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessModel::Linear(m) => m.validate(),
            ProcessModel::Markov(m) => m.validate(),
            ProcessModel::Cycle(m) => m.validate(),
        }
    }

    /// Parses and validates a model from its JSON form. Unknown keys are
    /// rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let model: ProcessModel = serde_json::from_str(text)
            .map_err(|e| Error::InvalidModel(format!("model JSON: {e}")))?;
        model.validate()?;
        Ok(model)
    }
}

/// Everything the time-zero sigma-field retains about a realization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrozenPast {
    /// Innovations `x_0, x_{-1}, x_{-2}, ...` with `innovations[j] = x_{-j}`,
    /// truncated at the model's past depth.
    Linear {
        /// `innovations[j]` is the innovation at time `-j`.
        innovations: Vec<f64>,
    },
    /// Chain states at times -1 and 0 under the stationary pair law.
    Chain {
        /// State at time -1.
        prev_state: usize,
        /// State at time 0.
        state: usize,
    },
}

/// What drove a sampled trajectory, kept for replay and cross-checks.
#[derive(Debug, Clone)]
pub enum Driver {
    /// Fresh innovations `x_1 ... x_{n-1}` (index 0 of the path reuses the
    /// frozen `x_0`).
    Innovations(Vec<f64>),
    /// Chain states at times `-1, 0, ..., n-1`.
    States(Vec<usize>),
}

/// A sampled path of observables together with its provenance.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Observable values `X_0 ... X_{n-1}`.
    pub values: Vec<Complex64>,
    /// Raw randomness behind the values.
    pub driver: Driver,
    /// The time-zero past this path was grown from.
    pub past: FrozenPast,
    /// Stream key that produced the randomness.
    pub stream: StreamId,
}

impl Trajectory {
    /// Path length `n`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the path has no samples.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draws a stationary path of length `n`: a fresh past and a fresh future in
/// one stream.
pub fn sample_path(model: &ProcessModel, n: usize, stream: &mut Stream) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::InvalidArgument("path length must be positive".into()));
    }
    match model {
        ProcessModel::Linear(m) => m.sample_path(n, stream),
        ProcessModel::Markov(m) => m.sample_path(n, stream),
        ProcessModel::Cycle(m) => m.sample_path(n, stream),
    }
}

/// Draws one time-zero past from the stationary law.
pub fn freeze_past(model: &ProcessModel, stream: &mut Stream) -> Result<FrozenPast> {
    match model {
        ProcessModel::Linear(m) => Ok(m.freeze_past(stream)),
        ProcessModel::Markov(m) => m.freeze_past(stream),
        ProcessModel::Cycle(m) => m.freeze_past(stream),
    }
}

/// Grows a fresh future of length `n` over a frozen past.
pub fn sample_quenched_path(
    model: &ProcessModel,
    past: &FrozenPast,
    n: usize,
    stream: &mut Stream,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::InvalidArgument("path length must be positive".into()));
    }
    match (model, past) {
        (ProcessModel::Linear(m), FrozenPast::Linear { innovations }) => {
            m.sample_quenched_path(innovations, n, stream)
        }
        (ProcessModel::Markov(m), FrozenPast::Chain { prev_state, state }) => {
            m.sample_quenched_path(*prev_state, *state, n, stream)
        }
        (ProcessModel::Cycle(m), FrozenPast::Chain { prev_state, state }) => {
            m.sample_quenched_path(*prev_state, *state, n)
        }
        _ => Err(Error::InvalidArgument(
            "frozen past does not belong to this model family".into(),
        )),
    }
}

/// Conditional expectation of the frequency-rotated partial sum
/// `S_n(theta) = sum_{k<n} X_k exp(i k theta)` given the frozen past,
/// evaluated in closed form.
pub fn cond_exp_dft(
    model: &ProcessModel,
    past: &FrozenPast,
    n: usize,
    theta: Frequency,
) -> Result<Complex64> {
    if n == 0 {
        return Err(Error::InvalidArgument("partial sum length must be positive".into()));
    }
    match (model, past) {
        (ProcessModel::Linear(m), FrozenPast::Linear { innovations }) => {
            m.cond_exp_dft(innovations, n, theta)
        }
        (ProcessModel::Markov(m), FrozenPast::Chain { state, .. }) => {
            m.cond_exp_dft(*state, n, theta)
        }
        (ProcessModel::Cycle(m), FrozenPast::Chain { state, .. }) => {
            m.cond_exp_dft(*state, n, theta)
        }
        _ => Err(Error::InvalidArgument(
            "frozen past does not belong to this model family".into(),
        )),
    }
}

/// Conditional expectations of the observations themselves: entry `t` is
/// `E[X_t | past]` for `t < n`. Rotating this profile and prefix-summing
/// reproduces `cond_exp_dft` at every intermediate length in one pass.
pub fn cond_exp_profile(
    model: &ProcessModel,
    past: &FrozenPast,
    n: usize,
) -> Result<Vec<Complex64>> {
    match (model, past) {
        (ProcessModel::Linear(m), FrozenPast::Linear { innovations }) => Ok(m
            .cond_exp_profile(innovations, n)?
            .into_iter()
            .map(|e| Complex64::new(e, 0.0))
            .collect()),
        (ProcessModel::Markov(m), FrozenPast::Chain { state, .. }) => Ok(m
            .cond_exp_profile(*state, n)?
            .into_iter()
            .map(|e| Complex64::new(e, 0.0))
            .collect()),
        (ProcessModel::Cycle(m), FrozenPast::Chain { state, .. }) => {
            m.cond_exp_profile(*state, n)
        }
        _ => Err(Error::InvalidArgument(
            "frozen past does not belong to this model family".into(),
        )),
    }
}

/// Exact autocovariance `gamma(h) = E[X_h conj(X_0)]` in closed form.
pub fn exact_autocov(model: &ProcessModel, lag: i64) -> Result<Complex64> {
    match model {
        ProcessModel::Linear(m) => Ok(Complex64::new(m.exact_autocov(lag.unsigned_abs() as usize), 0.0)),
        ProcessModel::Markov(m) => Ok(Complex64::new(m.exact_autocov(lag.unsigned_abs() as usize), 0.0)),
        ProcessModel::Cycle(m) => Ok(m.exact_autocov(lag)),
    }
}

/// How much of the coefficient transfer sum to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMode {
    /// `f_r(theta) = sum_{j < r} a_j exp(i j theta)`.
    Partial(usize),
    /// The full series `f(theta) = sum_{j >= 0} a_j exp(i j theta)`.
    Full,
}

/// Coefficient transfer function of a linear model; other families have no
/// coefficient sequence to sum.
pub fn transfer_fn(model: &ProcessModel, theta: Frequency, mode: TransferMode) -> Result<Complex64> {
    match model {
        ProcessModel::Linear(m) => match mode {
            TransferMode::Partial(r) => Ok(m.transfer_partial(theta, r)),
            TransferMode::Full => m.transfer_full(theta),
        },
        _ => Err(Error::NotApplicable(
            "transfer function is defined for linear models only".into(),
        )),
    }
}
