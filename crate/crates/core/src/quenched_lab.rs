//! Monte Carlo experiments for the limit laws: central limit runs under
//! annealed and quenched sampling, the conditional-expectation drift term,
//! multi-time increment checks, and the averaged-frequency variant.
//!
//! Every experiment samples through a keyed stream domain, so results are a
//! pure function of `(model, arguments, master seed)` and never depend on
//! thread count or call order.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fourier::dft;
use crate::models::{
    cond_exp_dft, sample_path, sample_quenched_path, Frequency, FrozenPast, LinearCondExp,
    ProcessModel,
};
use crate::rng::{domains, stream};
use crate::spectral::sigma2_quenched;
use crate::stats_kit::{
    complex_normal_report, ks_stat, normal_cdf, pearson_corr, ComponentCheck, TestReport,
};
use crate::tolerances;
use crate::{Error, Result};

/// How paths are drawn: fresh past every replicate, or one shared past.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Integrate over the past: each replicate draws its own.
    Annealed,
    /// Condition on the past: every replicate continues the same one.
    Quenched,
}

/// What is subtracted from the partial sum before normalizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Nothing; the raw sum is normalized as is.
    None,
    /// The exact conditional expectation given the replicate's past.
    Conditional,
}

/// Frequency treatment of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSpec {
    /// One fixed angle in radians.
    Fixed(f64),
    /// A fresh uniform angle per replicate.
    Averaged,
}

/// Provenance of a Monte Carlo sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleMeta {
    /// Model family the paths came from.
    pub model: String,
    /// Frequency treatment.
    pub theta: ThetaSpec,
    /// Partial-sum length.
    pub n: usize,
    /// Replicates requested.
    pub reps: usize,
    /// Sampling mode.
    pub mode: Mode,
    /// Centering applied before normalization.
    pub centering: Centering,
    /// Master seed.
    pub master: u64,
}

/// Complex sample with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalSample {
    /// One normalized value per kept replicate.
    pub values: Vec<Complex64>,
    /// How the values were produced.
    pub meta: SampleMeta,
}

fn family(model: &ProcessModel) -> &'static str {
    match model {
        ProcessModel::Linear(_) => "linear",
        ProcessModel::Markov(_) => "markov",
        ProcessModel::Cycle(_) => "cycle",
    }
}

/// Per-replicate evaluator of `E_0 S_n(theta)` for annealed runs, built once.
enum CenterEval {
    Linear(LinearCondExp),
    /// `E_0 S_n` indexed by the time-zero state.
    Chain(Vec<Complex64>),
}

impl CenterEval {
    fn new(model: &ProcessModel, n: usize, theta: Frequency) -> Result<Self> {
        match model {
            ProcessModel::Linear(m) => Ok(CenterEval::Linear(LinearCondExp::new(m, n, theta)?)),
            ProcessModel::Markov(m) => {
                let table = (0..m.m)
                    .map(|i| {
                        let past = FrozenPast::Chain { prev_state: i, state: i };
                        cond_exp_dft(model, &past, n, theta)
                    })
                    .collect::<Result<Vec<Complex64>>>()?;
                Ok(CenterEval::Chain(table))
            }
            ProcessModel::Cycle(c) => {
                let table = (0..c.m)
                    .map(|i| {
                        let past =
                            FrozenPast::Chain { prev_state: (i + c.m - 1) % c.m, state: i };
                        cond_exp_dft(model, &past, n, theta)
                    })
                    .collect::<Result<Vec<Complex64>>>()?;
                Ok(CenterEval::Chain(table))
            }
        }
    }

    fn eval(&self, past: &FrozenPast) -> Result<Complex64> {
        match (self, past) {
            (CenterEval::Linear(kernel), FrozenPast::Linear { innovations }) => {
                kernel.eval(innovations)
            }
            (CenterEval::Chain(table), FrozenPast::Chain { state, .. }) => Ok(table[*state]),
            _ => Err(Error::InvalidArgument(
                "frozen past does not belong to this model family".into(),
            )),
        }
    }
}

fn degenerate_guard(sigma2: f64, theta: Frequency) -> Result<f64> {
    if sigma2 <= tolerances::SIGMA2_FLOOR {
        return Err(Error::DegenerateTarget(format!(
            "limit variance {sigma2:.3e} at theta = {} is at or below the floor {:.1e}",
            theta.radians(),
            tolerances::SIGMA2_FLOOR
        )));
    }
    Ok(sigma2)
}

/// Draws `reps` normalized frequency sums `(S_n(theta) - center) / sqrt(n)`
/// and tests them against the complex normal with variance `sigma^2(theta)`.
///
/// Quenched mode requires `past` and reuses it for every replicate; annealed
/// mode refuses a supplied past and draws a fresh one per replicate. The
/// conditional centering is always evaluated in closed form.
#[allow(clippy::too_many_arguments)]
pub fn run_clt(
    model: &ProcessModel,
    theta: Frequency,
    n: usize,
    reps: usize,
    mode: Mode,
    centering: Centering,
    past: Option<&FrozenPast>,
    master: u64,
) -> Result<(EmpiricalSample, TestReport)> {
    if n == 0 || reps == 0 {
        return Err(Error::InvalidArgument(format!(
            "need positive length and replicates, got n = {n}, reps = {reps}"
        )));
    }
    model.validate()?;
    let sigma2 = degenerate_guard(sigma2_quenched(model, theta)?.estimate, theta)?;
    let sqrt_n = (n as f64).sqrt();
    let values: Vec<Complex64> = match mode {
        Mode::Quenched => {
            let past = past.ok_or_else(|| {
                Error::InvalidArgument("quenched mode needs a frozen past".into())
            })?;
            let center = match centering {
                Centering::Conditional => cond_exp_dft(model, past, n, theta)?,
                Centering::None => Complex64::new(0.0, 0.0),
            };
            (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let mut s = stream(master, domains::QUENCHED_PATH, rep as u64);
                    let traj = sample_quenched_path(model, past, n, &mut s)?;
                    Ok((dft(&traj, theta)?.sum - center) / sqrt_n)
                })
                .collect::<Result<_>>()?
        }
        Mode::Annealed => {
            if past.is_some() {
                return Err(Error::InvalidArgument(
                    "annealed mode draws its own pasts; do not supply one".into(),
                ));
            }
            let center_eval = match centering {
                Centering::Conditional => Some(CenterEval::new(model, n, theta)?),
                Centering::None => None,
            };
            (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let mut s = stream(master, domains::CLT, rep as u64);
                    let traj = sample_path(model, n, &mut s)?;
                    let center = match &center_eval {
                        Some(eval) => eval.eval(&traj.past)?,
                        None => Complex64::new(0.0, 0.0),
                    };
                    Ok((dft(&traj, theta)?.sum - center) / sqrt_n)
                })
                .collect::<Result<_>>()?
        }
    };
    let report = complex_normal_report(&values, sigma2)?;
    let meta = SampleMeta {
        model: family(model).to_string(),
        theta: ThetaSpec::Fixed(theta.radians()),
        n,
        reps,
        mode,
        centering,
        master,
    };
    Ok((EmpiricalSample { values, meta }, report))
}

/// The drift term `E_0 S_n(theta) / sqrt(n)` along a ladder of lengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitShiftReport {
    /// Evaluated lengths.
    pub n_list: Vec<usize>,
    /// Drift at each length.
    pub values: Vec<Complex64>,
    /// True when the last three drifts agree pairwise within the shift
    /// tolerance.
    pub converged: bool,
    /// The final drift, reported only when the ladder settled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<Complex64>,
}

/// Evaluates the quenched drift exactly along `n_list` (strictly increasing).
pub fn limit_shift(
    model: &ProcessModel,
    past: &FrozenPast,
    theta: Frequency,
    n_list: &[usize],
) -> Result<LimitShiftReport> {
    if n_list.is_empty() {
        return Err(Error::InvalidArgument("need at least one length".into()));
    }
    if n_list[0] == 0 {
        return Err(Error::InvalidArgument("lengths must be positive".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("lengths must be strictly increasing".into()));
    }
    let values = n_list
        .iter()
        .map(|&n| Ok(cond_exp_dft(model, past, n, theta)? / (n as f64).sqrt()))
        .collect::<Result<Vec<Complex64>>>()?;
    let converged = values.len() >= 3 && {
        let tail = &values[values.len() - 3..];
        tail.iter().enumerate().all(|(i, a)| {
            tail[i + 1..].iter().all(|b| (a - b).norm() <= tolerances::LIMIT_SHIFT_TOL)
        })
    };
    let limit = converged.then(|| *values.last().expect("nonempty ladder"));
    Ok(LimitShiftReport { n_list: n_list.to_vec(), values, converged, limit })
}

/// Raw centered increments of the normalized partial-sum path.
#[derive(Debug, Clone)]
pub struct InvarianceSample {
    /// Evaluation times in `(0, 1]`.
    pub times: Vec<f64>,
    /// Floor marks `floor(n t)` the increments run between.
    pub marks: Vec<usize>,
    /// Path length.
    pub n: usize,
    /// `rows[rep][i]` is the centered increment over `(t_{i-1}, t_i]`.
    pub rows: Vec<Vec<Complex64>>,
}

/// Samples the quenched partial-sum path at several times and checks that the
/// standardized increments are independent standard complex normals.
///
/// Each increment component is scaled by `sqrt(sigma^2 (m_i - m_{i-1}) / n / 2)`
/// with the floor marks `m_i`, matching the discrete covariance exactly.
pub fn run_invariance(
    model: &ProcessModel,
    past: &FrozenPast,
    theta: Frequency,
    n: usize,
    reps: usize,
    times: &[f64],
    master: u64,
) -> Result<(InvarianceSample, TestReport)> {
    if n == 0 || reps == 0 {
        return Err(Error::InvalidArgument(format!(
            "need positive length and replicates, got n = {n}, reps = {reps}"
        )));
    }
    if times.is_empty() {
        return Err(Error::InvalidArgument("need at least one evaluation time".into()));
    }
    for t in times {
        if !(*t > 0.0 && *t <= 1.0) {
            return Err(Error::InvalidArgument(format!("time {t} outside (0, 1]")));
        }
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("times must be strictly increasing".into()));
    }
    model.validate()?;
    let sigma2 = degenerate_guard(sigma2_quenched(model, theta)?.estimate, theta)?;
    let marks: Vec<usize> = times.iter().map(|t| (n as f64 * t).floor() as usize).collect();
    if marks[0] == 0 {
        return Err(Error::InvalidArgument(format!(
            "time {} floors to an empty partial sum at n = {n}",
            times[0]
        )));
    }
    if marks.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!(
            "times collapse to equal marks {marks:?} at n = {n}; spread them or raise n"
        )));
    }
    let centers = marks
        .iter()
        .map(|&m| cond_exp_dft(model, past, m, theta))
        .collect::<Result<Vec<Complex64>>>()?;
    let sqrt_n = (n as f64).sqrt();
    let rows: Vec<Vec<Complex64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut s = stream(master, domains::QUENCHED_PATH, rep as u64);
            let traj = sample_quenched_path(model, past, n, &mut s)?;
            let sums = crate::fourier::rotated_prefix_sums(&traj.values, theta, &marks)?;
            let mut prev = Complex64::new(0.0, 0.0);
            let incs = sums
                .iter()
                .zip(&centers)
                .map(|(sum, center)| {
                    let y = (sum - center) / sqrt_n;
                    let inc = y - prev;
                    prev = y;
                    inc
                })
                .collect();
            Ok(incs)
        })
        .collect::<Result<_>>()?;
    let ks_threshold = tolerances::ks_threshold(reps);
    let corr_threshold = tolerances::corr_threshold(reps);
    let mut components = Vec::with_capacity(2 * marks.len());
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(2 * marks.len());
    let mut ks_re = 0.0f64;
    let mut ks_im = 0.0f64;
    for (i, t) in times.iter().enumerate() {
        let gap = marks[i] - if i == 0 { 0 } else { marks[i - 1] };
        let scale = (sigma2 * (gap as f64 / n as f64) / 2.0).sqrt();
        for (part, pick) in
            [("re", (|z: &Complex64| z.re) as fn(&Complex64) -> f64), ("im", |z| z.im)]
        {
            let col: Vec<f64> = rows.iter().map(|row| pick(&row[i]) / scale).collect();
            let ks = ks_stat(&col, normal_cdf)?;
            if part == "re" {
                ks_re = ks_re.max(ks);
            } else {
                ks_im = ks_im.max(ks);
            }
            components.push(ComponentCheck {
                label: format!("t={t} {part}"),
                ks,
                pass: ks <= ks_threshold,
            });
            columns.push(col);
        }
    }
    let mut corr_re_im = 0.0f64;
    for a in 0..columns.len() {
        for b in a + 1..columns.len() {
            let c = pearson_corr(&columns[a], &columns[b])?;
            if c.abs() > corr_re_im.abs() {
                corr_re_im = c;
            }
        }
    }
    let pass =
        components.iter().all(|c| c.pass) && corr_re_im.abs() <= corr_threshold;
    let report = TestReport {
        ks_re,
        ks_im,
        corr_re_im,
        ks_threshold,
        corr_threshold,
        pass,
        components,
    };
    Ok((InvarianceSample { times: times.to_vec(), marks, n, rows }, report))
}

/// Quenched run with a fresh uniform frequency per replicate, each value
/// standardized by its own `sigma(theta) / sqrt(2)` so the target is the
/// standard complex normal (total variance 2).
///
/// Replicates whose frequency has no usable variance are dropped; more than
/// one percent of them degrades the whole sample.
pub fn averaged_frequency_run(
    model: &ProcessModel,
    past: &FrozenPast,
    n: usize,
    reps: usize,
    master: u64,
) -> Result<(EmpiricalSample, TestReport)> {
    if n == 0 || reps == 0 {
        return Err(Error::InvalidArgument(format!(
            "need positive length and replicates, got n = {n}, reps = {reps}"
        )));
    }
    model.validate()?;
    let sqrt_n = (n as f64).sqrt();
    let drawn: Vec<Option<Complex64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut s = stream(master, domains::AVERAGED, rep as u64);
            let u: f64 = s.rng.gen();
            let theta = Frequency::new(std::f64::consts::TAU * u)?;
            let sigma2 = match sigma2_quenched(model, theta) {
                Ok(est) => est.estimate,
                Err(Error::NotApplicable(_)) => 0.0,
                Err(e) => return Err(e),
            };
            if sigma2 <= tolerances::SIGMA2_FLOOR {
                return Ok(None);
            }
            let traj = sample_quenched_path(model, past, n, &mut s)?;
            let center = cond_exp_dft(model, past, n, theta)?;
            let y = (dft(&traj, theta)?.sum - center) / sqrt_n;
            Ok(Some(y / (sigma2 / 2.0).sqrt()))
        })
        .collect::<Result<_>>()?;
    let values: Vec<Complex64> = drawn.iter().flatten().copied().collect();
    let dropped = reps - values.len();
    if (dropped as f64) > 0.01 * reps as f64 {
        return Err(Error::DegenerateSample(format!(
            "{dropped} of {reps} replicates hit frequencies with no usable variance"
        )));
    }
    let report = complex_normal_report(&values, 2.0)?;
    let meta = SampleMeta {
        model: family(model).to_string(),
        theta: ThetaSpec::Averaged,
        n,
        reps,
        mode: Mode::Quenched,
        centering: Centering::Conditional,
        master,
    };
    Ok((EmpiricalSample { values, meta }, report))
}
