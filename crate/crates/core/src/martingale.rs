//! Projection operators, approximating martingales, and the series
//! conditions built from them.
//!
//! The projection `P_0 Y = E[Y | F_0] - E[Y | F_-1]` turns one step of new
//! information into a martingale difference. Summing projected observations
//! with frequency rotation gives the difference `D_r(theta)` whose running
//! rotated sums `M_{r,n}(theta)` approximate the centered partial sums; the
//! checkers in this module quantify how good that approximation is and
//! whether the classical summability conditions governing it hold.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fourier::rotated_prefix_sums;
use crate::models::{
    cond_exp_profile, sample_quenched_path, Driver, Frequency, FrozenPast, MarkovFunctionalModel,
    ProcessModel, Trajectory, TransferTable,
};
use crate::rng::{domains, stream};
use crate::stats_kit::jackknife_stderr_mean;
use crate::tolerances;
use crate::{Error, Result};

/// One projected observation `P_0 X_k`.
#[derive(Debug, Clone)]
pub enum Proj0Repr {
    /// Linear models project onto the time-zero innovation: `P_0 X_k = a_k x_0`.
    Linear {
        /// The surviving coefficient `a_k`.
        coeff: f64,
        /// `|a_k|`, the L2 norm of the projection.
        norm2: f64,
    },
    /// Chain models produce a function of the state pair at times -1 and 0.
    Markov {
        /// `g(i, j)` indexed by (state at -1, state at 0).
        table: Vec<Vec<f64>>,
        /// L2 norm under the stationary pair law `pi_i P(i, j)`.
        norm2: f64,
    },
}

impl Proj0Repr {
    /// L2 norm of the projected observation.
    pub fn norm2(&self) -> f64 {
        match self {
            Proj0Repr::Linear { norm2, .. } | Proj0Repr::Markov { norm2, .. } => *norm2,
        }
    }
}

fn pair_mean_sq<F: Fn(usize, usize) -> f64>(m: &MarkovFunctionalModel, g: F) -> f64 {
    let mut acc = 0.0;
    for i in 0..m.m {
        for j in 0..m.m {
            let v = g(i, j);
            acc += m.stationary[i] * m.kernel[i][j] * v * v;
        }
    }
    acc
}

/// Projection of the lag-`k` observation onto time-zero information.
///
/// Linear: the scalar `a_k` acting on `x_0`. Markov: the pair table
/// `g(i, j) = (P^k v_c)(j) - (P^{k+1} v_c)(i)`. Rotations are deterministic,
/// so their projections vanish identically and come back as a zero table.
pub fn projection_p0(model: &ProcessModel, k: usize) -> Result<Proj0Repr> {
    match model {
        ProcessModel::Linear(m) => {
            let a = m.coeff(k);
            Ok(Proj0Repr::Linear { coeff: a, norm2: a.abs() })
        }
        ProcessModel::Markov(m) => {
            let mut w = m.centered_observable();
            for _ in 0..k {
                w = m.apply_kernel(&w);
            }
            let wn = m.apply_kernel(&w);
            // Pair values live on realized transitions; impossible pairs stay zero.
            let table: Vec<Vec<f64>> = (0..m.m)
                .map(|i| {
                    (0..m.m)
                        .map(|j| if m.kernel[i][j] == 0.0 { 0.0 } else { w[j] - wn[i] })
                        .collect()
                })
                .collect();
            let norm2 = pair_mean_sq(m, |i, j| table[i][j]).sqrt();
            Ok(Proj0Repr::Markov { table, norm2 })
        }
        ProcessModel::Cycle(c) => Ok(Proj0Repr::Markov {
            table: vec![vec![0.0; c.m]; c.m],
            norm2: 0.0,
        }),
    }
}

/// Evaluator for the martingale difference at time zero.
#[derive(Debug, Clone)]
pub enum MartDiff {
    /// `D_r(theta) = x_0 * f_{r+1}(theta)`; the scalar is `f_{r+1}(theta)`.
    Linear(Complex64),
    /// Complex pair table `sum_{k<=r} g_k(i, j) exp(i k theta)`.
    Markov(Vec<Vec<Complex64>>),
}

/// The order-`r` martingale approximation at one frequency.
#[derive(Debug, Clone)]
pub struct MartApprox {
    /// Truncation order of the projection sum.
    pub r: usize,
    /// Frequency the differences are rotated to.
    pub theta: Frequency,
    /// `E|D_r(theta)|^2`; converges to the spectral density as `r` grows.
    pub norm_sq: f64,
    /// How to evaluate `T^k D_r(theta)` on a trajectory.
    pub difference: MartDiff,
}

/// Builds `D_r(theta) = sum_{k=0}^{r} P_0 X_k exp(i k theta)`.
pub fn d_r0(model: &ProcessModel, r: usize, theta: Frequency) -> Result<MartApprox> {
    match model {
        ProcessModel::Linear(m) => {
            let f = m.transfer_partial(theta, r + 1);
            Ok(MartApprox { r, theta, norm_sq: f.norm_sqr(), difference: MartDiff::Linear(f) })
        }
        ProcessModel::Markov(m) => {
            let th = theta.radians();
            let mut w = m.centered_observable();
            let mut table = vec![vec![Complex64::new(0.0, 0.0); m.m]; m.m];
            for k in 0..=r {
                let wn = m.apply_kernel(&w);
                let (s, c) = (k as f64 * th).sin_cos();
                let rot = Complex64::new(c, s);
                for (i, row) in table.iter_mut().enumerate() {
                    for (j, cell) in row.iter_mut().enumerate() {
                        if m.kernel[i][j] != 0.0 {
                            *cell += rot * (w[j] - wn[i]);
                        }
                    }
                }
                w = wn;
            }
            let norm_sq = {
                let mut acc = 0.0;
                for i in 0..m.m {
                    for j in 0..m.m {
                        acc += m.stationary[i] * m.kernel[i][j] * table[i][j].norm_sqr();
                    }
                }
                acc
            };
            Ok(MartApprox { r, theta, norm_sq, difference: MartDiff::Markov(table) })
        }
        ProcessModel::Cycle(c) => Ok(MartApprox {
            r,
            theta,
            norm_sq: 0.0,
            difference: MartDiff::Markov(vec![vec![Complex64::new(0.0, 0.0); c.m]; c.m]),
        }),
    }
}

/// Running martingale partial sums `M_{r,1} ... M_{r,upto}` where
/// `M_{r,m} = sum_{k<m} (T^k D_r)(omega) exp(i k theta)`.
///
/// The `k = 0` term reuses the frozen time-zero data, so the first entry is
/// already random only through the past.
pub fn mart_path(approx: &MartApprox, traj: &Trajectory, upto: usize) -> Result<Vec<Complex64>> {
    if upto == 0 {
        return Err(Error::InvalidArgument("need at least one martingale step".into()));
    }
    if upto > traj.len() {
        return Err(Error::InvalidArgument(format!(
            "trajectory holds {} observations, martingale wants {upto}",
            traj.len()
        )));
    }
    let diffs: Vec<Complex64> = match (&approx.difference, &traj.past, &traj.driver) {
        (MartDiff::Linear(f), FrozenPast::Linear { innovations }, Driver::Innovations(fresh)) => {
            let x0 = *innovations.first().ok_or_else(|| {
                Error::InvalidArgument("frozen past holds no time-zero innovation".into())
            })?;
            (0..upto)
                .map(|k| {
                    let x = if k == 0 { x0 } else { fresh[k - 1] };
                    *f * x
                })
                .collect()
        }
        (MartDiff::Markov(table), FrozenPast::Chain { .. }, Driver::States(states)) => {
            if states.len() < upto + 1 {
                return Err(Error::InvalidArgument(format!(
                    "state record holds {} entries, martingale wants {}",
                    states.len(),
                    upto + 1
                )));
            }
            (0..upto).map(|k| table[states[k]][states[k + 1]]).collect()
        }
        _ => {
            return Err(Error::InvalidArgument(
                "trajectory provenance does not match the martingale representation".into(),
            ))
        }
    };
    let marks: Vec<usize> = (1..=upto).collect();
    rotated_prefix_sums(&diffs, approx.theta, &marks)
}

/// Monte Carlo view of how far the martingale sits from the centered sums.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxErrorReport {
    /// Mean of `|S_n - E_0 S_n - M_{r,n}|^2 / n` over replicates.
    pub mean_sq: f64,
    /// Mean of `max_{k<=n} |S_k - E_0 S_k - M_{r,k}|^2 / n` over replicates.
    pub max_sq: f64,
    /// Jackknife standard error of `mean_sq`.
    pub stderr: f64,
    /// Partial-sum length.
    pub n: usize,
    /// Replicates drawn.
    pub reps: usize,
    /// Martingale truncation order.
    pub r: usize,
}

/// Samples `reps` quenched continuations of `past` and measures the
/// martingale approximation error pathwise, centering with the exact
/// conditional expectations.
pub fn approx_error(
    model: &ProcessModel,
    past: &FrozenPast,
    theta: Frequency,
    r: usize,
    n: usize,
    reps: usize,
    master: u64,
) -> Result<ApproxErrorReport> {
    if n == 0 || reps == 0 {
        return Err(Error::InvalidArgument(format!(
            "need positive length and replicates, got n = {n}, reps = {reps}"
        )));
    }
    let approx = d_r0(model, r, theta)?;
    let marks: Vec<usize> = (1..=n).collect();
    let profile = cond_exp_profile(model, past, n)?;
    let cond = rotated_prefix_sums(&profile, theta, &marks)?;
    let per_rep = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut s = stream(master, domains::APPROX_ERROR, rep as u64);
            let traj = sample_quenched_path(model, past, n, &mut s)?;
            let sums = rotated_prefix_sums(&traj.values, theta, &marks)?;
            let mart = mart_path(&approx, &traj, n)?;
            let mut worst = 0.0f64;
            let mut last = 0.0f64;
            for k in 0..n {
                let d = (sums[k] - cond[k] - mart[k]).norm_sqr();
                worst = worst.max(d);
                if k + 1 == n {
                    last = d;
                }
            }
            Ok((last / n as f64, worst / n as f64))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let finals: Vec<f64> = per_rep.iter().map(|p| p.0).collect();
    let mean_sq = finals.iter().sum::<f64>() / reps as f64;
    let max_sq = per_rep.iter().map(|p| p.1).sum::<f64>() / reps as f64;
    let stderr = if reps == 1 { 0.0 } else { jackknife_stderr_mean(&finals)? };
    Ok(ApproxErrorReport { mean_sq, max_sq, stderr, n, reps, r })
}

/// Outcome of a series-condition check over a finite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The last decade of increments sums below the tail tolerance.
    Converged,
    /// The horizon is too short to call; divergence is never claimed.
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Converged => write!(f, "converged"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Partial sums of a condition series with the convergence verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Running sums of the main series.
    pub partial_sums: Vec<f64>,
    /// Running sums of the companion series when the condition has one
    /// (the difference variant of the Hannan condition).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_partial_sums: Option<Vec<f64>>,
    /// Convergence call from the tail rule; both series must pass.
    pub verdict: Verdict,
    /// True when partial sums exceeded the cap while increments were still
    /// growing; a hint only, never a verdict.
    pub divergence_hint: bool,
    /// Sum of the last (up to) ten increments of the main series.
    pub tail: f64,
    /// Same for the companion series.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_tail: Option<f64>,
}

fn tail_sum(increments: &[f64]) -> f64 {
    let take = increments.len().min(10);
    increments[increments.len() - take..].iter().sum()
}

fn cumulative(increments: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    increments
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn series_report(strong: Vec<f64>, weak: Option<Vec<f64>>) -> ConditionReport {
    let tail = tail_sum(&strong);
    let weak_tail = weak.as_ref().map(|w| tail_sum(w));
    let converged = tail < tolerances::CONDITION_TAIL_TOL
        && weak_tail.is_none_or(|t| t < tolerances::CONDITION_TAIL_TOL);
    let partial_sums = cumulative(&strong);
    let divergence_hint = partial_sums.last().copied().unwrap_or(0.0)
        > tolerances::DIVERGENCE_CAP
        && strong.len() >= 2
        && strong[strong.len() - 1] > strong[strong.len() - 2];
    ConditionReport {
        partial_sums,
        weak_partial_sums: weak.map(|w| cumulative(&w)),
        verdict: if converged { Verdict::Converged } else { Verdict::Inconclusive },
        divergence_hint,
        tail,
        weak_tail,
    }
}

/// Hannan condition: partial sums of `||P_0 X_k||_2` for `k = 0..K`,
/// together with the difference variant `||P_0 (X_{k+1} - X_k)||_2`.
pub fn condition_hannan(model: &ProcessModel, horizon: usize) -> Result<ConditionReport> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    match model {
        ProcessModel::Linear(m) => {
            let strong: Vec<f64> = (0..=horizon).map(|k| m.coeff(k).abs()).collect();
            let weak: Vec<f64> =
                (0..=horizon).map(|k| (m.coeff(k + 1) - m.coeff(k)).abs()).collect();
            Ok(series_report(strong, Some(weak)))
        }
        ProcessModel::Markov(m) => {
            // w[k] = P^k v_c for k = 0..=horizon+2.
            let mut w = vec![m.centered_observable()];
            for _ in 0..horizon + 2 {
                let next = m.apply_kernel(w.last().expect("seeded with v_c"));
                w.push(next);
            }
            let strong: Vec<f64> = (0..=horizon)
                .map(|k| pair_mean_sq(m, |i, j| w[k][j] - w[k + 1][i]).sqrt())
                .collect();
            let weak: Vec<f64> = (0..=horizon)
                .map(|k| {
                    pair_mean_sq(m, |i, j| {
                        (w[k + 1][j] - w[k + 2][i]) - (w[k][j] - w[k + 1][i])
                    })
                    .sqrt()
                })
                .collect();
            Ok(series_report(strong, Some(weak)))
        }
        ProcessModel::Cycle(_) => {
            // Deterministic dynamics project to zero at every lag.
            let zeros = vec![0.0; horizon + 1];
            Ok(series_report(zeros.clone(), Some(zeros)))
        }
    }
}

/// Maxwell-Woodroofe condition at one frequency: partial sums of
/// `||E_0 S_k(theta)||_2 / k^{3/2}` for `k = 1..K`.
pub fn condition_mw(
    model: &ProcessModel,
    theta: Frequency,
    horizon: usize,
) -> Result<ConditionReport> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    match model {
        ProcessModel::Linear(m) => {
            let table = TransferTable::new(m, theta);
            let depth = m.past_depth();
            let base: Vec<Complex64> = (0..=depth).map(|j| table.f_at(j)).collect();
            let strong: Vec<f64> = (1..=horizon)
                .map(|k| {
                    let mut acc = 0.0;
                    for (j, fj) in base.iter().enumerate() {
                        acc += (table.f_at(j + k) - fj).norm_sqr();
                    }
                    acc.sqrt() / (k as f64).powf(1.5)
                })
                .collect();
            Ok(series_report(strong, None))
        }
        ProcessModel::Markov(m) => {
            let th = theta.radians();
            let mut w = m.centered_observable();
            let mut running = vec![Complex64::new(0.0, 0.0); m.m];
            let strong: Vec<f64> = (1..=horizon)
                .map(|k| {
                    let (s, c) = ((k - 1) as f64 * th).sin_cos();
                    let rot = Complex64::new(c, s);
                    for (acc, wi) in running.iter_mut().zip(&w) {
                        *acc += rot * wi;
                    }
                    w = m.apply_kernel(&w);
                    let norm_sq: f64 = m
                        .stationary
                        .iter()
                        .zip(&running)
                        .map(|(p, z)| p * z.norm_sqr())
                        .sum();
                    norm_sq.sqrt() / (k as f64).powf(1.5)
                })
                .collect();
            Ok(series_report(strong, None))
        }
        ProcessModel::Cycle(_) => Err(Error::NotApplicable(
            "rotation paths are deterministic; conditional partial sums do not average out".into(),
        )),
    }
}

/// Pathwise ratio condition at a frozen past: partial sums of
/// `|E_0[X_k - X_{k-1}]|^2 / k` for `k = 1..K`.
pub fn condition_ratio(
    model: &ProcessModel,
    past: &FrozenPast,
    horizon: usize,
) -> Result<ConditionReport> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let profile = cond_exp_profile(model, past, horizon + 1)?;
    let strong: Vec<f64> = (1..=horizon)
        .map(|k| (profile[k] - profile[k - 1]).norm_sqr() / k as f64)
        .collect();
    Ok(series_report(strong, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        freeze_past, CycleRotationModel, InnovationDist, LinearAdaptedModel,
        MarkovFunctionalModel, ProcessModel,
    };
    use crate::rng::{domains, stream, StreamId};
    use crate::spectral::density_exact;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn two_tap() -> ProcessModel {
        ProcessModel::Linear(LinearAdaptedModel::from_coeffs(&[1.0, 0.5]).unwrap())
    }

    fn geo() -> ProcessModel {
        ProcessModel::Linear(LinearAdaptedModel::geometric(0.5).unwrap())
    }

    fn white() -> ProcessModel {
        ProcessModel::Linear(LinearAdaptedModel::white_noise())
    }

    fn two_state() -> ProcessModel {
        ProcessModel::Markov(MarkovFunctionalModel {
            m: 2,
            kernel: vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            stationary: vec![0.4, 0.6],
            observable: vec![1.0, -1.0],
            centered: false,
        })
    }

    fn identity_chain() -> ProcessModel {
        ProcessModel::Markov(MarkovFunctionalModel {
            m: 2,
            kernel: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            stationary: vec![0.5, 0.5],
            observable: vec![1.0, -1.0],
            centered: false,
        })
    }

    /// `(|f_{r+1}|^2 x_0^2 + sum_{m=1}^{n-1} |f_m - f_{r+1}|^2) / n`, the
    /// expansion of the approximation error over independent innovations.
    fn expansion_oracle(
        m: &LinearAdaptedModel,
        x0: f64,
        theta: Frequency,
        r: usize,
        n: usize,
    ) -> f64 {
        let table = TransferTable::new(m, theta);
        let fr = table.f_at(r + 1);
        let mut acc = fr.norm_sqr() * x0 * x0;
        for k in 1..n {
            acc += (table.f_at(k) - fr).norm_sqr();
        }
        acc / n as f64
    }

    #[test]
    fn linear_projection_extracts_the_coefficient() {
        match projection_p0(&two_tap(), 1).unwrap() {
            Proj0Repr::Linear { coeff, norm2 } => {
                assert_eq!(coeff, 0.5, "P_0 X_1 = a_1 x_0");
                assert_eq!(norm2, 0.5, "unit innovation variance makes the norm |a_1|");
            }
            other => panic!("linear model must project to a scalar, got {other:?}"),
        }
        match projection_p0(&two_tap(), 5).unwrap() {
            Proj0Repr::Linear { coeff, .. } => {
                assert_eq!(coeff, 0.0, "lags beyond the filter support project to zero")
            }
            other => panic!("expected scalar representation, got {other:?}"),
        }
    }

    #[test]
    fn markov_projection_is_a_pair_martingale_difference() {
        let model = two_state();
        for k in 0..6 {
            let p = projection_p0(&model, k).unwrap();
            let Proj0Repr::Markov { table, norm2 } = &p else {
                panic!("chain model must project to a pair table")
            };
            for (i, row) in table.iter().enumerate() {
                let kernel_mean: f64 = match &model {
                    ProcessModel::Markov(m) => {
                        m.kernel[i].iter().zip(row).map(|(p, g)| p * g).sum()
                    }
                    _ => unreachable!(),
                };
                assert!(
                    kernel_mean.abs() < 1e-10,
                    "row {i} at lag {k}: E[g(i, .) | i] = {kernel_mean}, not 0"
                );
            }
            // v_c is a 0.5-eigenvector, so ||P_0 X_k|| = 0.5^k sqrt(0.72).
            let want = 0.5f64.powi(k as i32) * 0.72f64.sqrt();
            assert!(
                (norm2 - want).abs() < 1e-12,
                "lag {k} norm {norm2} vs eigen-decay {want}"
            );
        }
    }

    #[test]
    fn identity_kernel_projection_vanishes() {
        for k in 0..4 {
            let p = projection_p0(&identity_chain(), k).unwrap();
            let Proj0Repr::Markov { table, norm2 } = p else {
                panic!("chain model must project to a pair table")
            };
            assert!(
                table.iter().flatten().all(|g| *g == 0.0),
                "deterministic chain reveals nothing new at lag {k}"
            );
            assert_eq!(norm2, 0.0);
        }
    }

    #[test]
    fn martingale_difference_pins_transfer_values() {
        let w = d_r0(&white(), 0, Frequency::new(0.3).unwrap()).unwrap();
        match w.difference {
            MartDiff::Linear(f) => {
                assert!((f - Complex64::new(1.0, 0.0)).norm() < 1e-15, "f_1 = a_0 = 1, got {f}")
            }
            other => panic!("expected scalar difference, got {other:?}"),
        }
        assert!((w.norm_sq - 1.0).abs() < 1e-15);

        let t = d_r0(&two_tap(), 1, Frequency::new(PI).unwrap()).unwrap();
        match t.difference {
            MartDiff::Linear(f) => assert!(
                (f - Complex64::new(0.5, 0.0)).norm() < 1e-15,
                "f_2(pi) = 1 - 0.5 = 0.5, got {f}"
            ),
            other => panic!("expected scalar difference, got {other:?}"),
        }

        let g = d_r0(&geo(), 60, Frequency::new(FRAC_PI_2).unwrap()).unwrap();
        match g.difference {
            MartDiff::Linear(f) => assert!(
                (f - Complex64::new(0.8, 0.4)).norm() < 1e-15,
                "sixty terms land on the full transfer value, got {f}"
            ),
            other => panic!("expected scalar difference, got {other:?}"),
        }
        assert!(
            (g.norm_sq - 0.8).abs() < 1e-6,
            "E|D_60|^2 = {} should recover the density 0.8",
            g.norm_sq
        );
    }

    #[test]
    fn markov_difference_norm_recovers_the_density() {
        let model = two_state();
        for theta in [FRAC_PI_2, 1.0] {
            let th = Frequency::new(theta).unwrap();
            let d = d_r0(&model, 60, th).unwrap();
            let want = density_exact(&model, th).unwrap().estimate;
            assert!(
                (d.norm_sq - want).abs() < 1e-6,
                "theta = {theta}: E|D_60|^2 = {} vs density {want}",
                d.norm_sq
            );
        }
    }

    #[test]
    fn white_noise_martingale_is_the_plain_random_walk() {
        let model = white();
        let past = FrozenPast::Linear { innovations: vec![0.7] };
        let mut s = stream(5, domains::QUENCHED_PATH, 2);
        let traj = sample_quenched_path(&model, &past, 6, &mut s).unwrap();
        let approx = d_r0(&model, 0, Frequency::new(0.0).unwrap()).unwrap();
        let path = mart_path(&approx, &traj, 6).unwrap();
        let fresh = match &traj.driver {
            Driver::Innovations(f) => f,
            other => panic!("linear trajectory must carry innovations, got {other:?}"),
        };
        let mut acc = 0.7;
        for (m, got) in path.iter().enumerate() {
            if m > 0 {
                acc += fresh[m - 1];
            }
            assert!(
                (got - Complex64::new(acc, 0.0)).norm() < 1e-13,
                "M_{} = {got}, running innovation sum is {acc}",
                m + 1
            );
        }
    }

    #[test]
    fn hand_trajectory_pins_the_second_partial_sum() {
        // x_0 = 1, x_1 = -1, theta = pi: the two rotated differences add.
        let model = two_tap();
        let traj = Trajectory {
            values: vec![Complex64::new(1.15, 0.0), Complex64::new(-0.5, 0.0)],
            driver: Driver::Innovations(vec![-1.0]),
            past: FrozenPast::Linear { innovations: vec![1.0, 0.3] },
            stream: StreamId { master: 0, domain: 0, replicate: 0 },
        };
        let approx = d_r0(&model, 1, Frequency::new(PI).unwrap()).unwrap();
        let path = mart_path(&approx, &traj, 2).unwrap();
        assert!(
            (path[1] - Complex64::new(1.0, 0.0)).norm() < 1e-15,
            "M_2 = 0.5 (1 + e^{{i pi}} (-1)) = 1, got {}",
            path[1]
        );
    }

    #[test]
    fn identity_chain_martingale_vanishes() {
        let model = identity_chain();
        let mut s = stream(9, domains::SIMULATE, 0);
        let traj = crate::models::sample_path(&model, 8, &mut s).unwrap();
        let approx = d_r0(&model, 3, Frequency::new(1.1).unwrap()).unwrap();
        let path = mart_path(&approx, &traj, 8).unwrap();
        assert!(
            path.iter().all(|z| z.norm() == 0.0),
            "identity kernel yields identically zero differences, got {path:?}"
        );
    }

    #[test]
    fn mart_path_refuses_inconsistent_inputs() {
        let model = two_tap();
        let past = FrozenPast::Linear { innovations: vec![1.0, 0.0] };
        let mut s = stream(2, domains::QUENCHED_PATH, 0);
        let traj = sample_quenched_path(&model, &past, 4, &mut s).unwrap();
        let approx = d_r0(&model, 1, Frequency::new(1.0).unwrap()).unwrap();
        assert!(mart_path(&approx, &traj, 0).is_err(), "zero steps must be refused");
        assert!(mart_path(&approx, &traj, 5).is_err(), "more steps than observations");
        let chain_approx = d_r0(&two_state(), 1, Frequency::new(1.0).unwrap()).unwrap();
        assert!(
            mart_path(&chain_approx, &traj, 4).is_err(),
            "pair-table differences cannot be read off an innovation trajectory"
        );
    }

    #[test]
    fn martingale_differences_average_to_zero_in_every_innovation_bucket() {
        // Rademacher innovations make (x_1, x_2) a four-way exact partition;
        // the k = 3 difference must center in each cell.
        let model = ProcessModel::Linear(
            LinearAdaptedModel::from_coeffs(&[1.0, 0.5])
                .unwrap()
                .with_innovation(InnovationDist::Rademacher),
        );
        let past = FrozenPast::Linear { innovations: vec![1.0, -1.0] };
        let theta = Frequency::new(1.0).unwrap();
        let approx = d_r0(&model, 1, theta).unwrap();
        let reps = 1000;
        let mut buckets: Vec<Vec<Complex64>> = vec![Vec::new(); 4];
        for rep in 0..reps {
            let mut s = stream(71, domains::QUENCHED_PATH, rep);
            let traj = sample_quenched_path(&model, &past, 4, &mut s).unwrap();
            let fresh = match &traj.driver {
                Driver::Innovations(f) => f.clone(),
                other => panic!("expected innovations, got {other:?}"),
            };
            let path = mart_path(&approx, &traj, 4).unwrap();
            let diff = path[3] - path[2];
            let cell = usize::from(fresh[0] > 0.0) * 2 + usize::from(fresh[1] > 0.0);
            buckets[cell].push(diff);
        }
        for (cell, vals) in buckets.iter().enumerate() {
            assert!(vals.len() > 150, "bucket {cell} holds {} samples", vals.len());
            let n = vals.len() as f64;
            for (label, part) in
                [("re", vals.iter().map(|z| z.re).collect::<Vec<f64>>()),
                 ("im", vals.iter().map(|z| z.im).collect::<Vec<f64>>())]
            {
                let mean = part.iter().sum::<f64>() / n;
                let var = part.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
                let se = (var / n).sqrt();
                assert!(
                    mean.abs() <= 4.0 * se.max(1e-12),
                    "bucket {cell} {label}: mean {mean} exceeds 4 stderr {se}"
                );
            }
        }
    }

    #[test]
    fn quenched_martingale_variance_is_the_orthogonal_sum() {
        let model = geo();
        let theta = Frequency::new(1.0).unwrap();
        let mut fs = stream(13, domains::FREEZE_PAST, 0);
        let past = freeze_past(&model, &mut fs).unwrap();
        let x0 = match &past {
            FrozenPast::Linear { innovations } => innovations[0],
            other => panic!("expected innovations, got {other:?}"),
        };
        let approx = d_r0(&model, 10, theta).unwrap();
        let frozen_term = match approx.difference {
            MartDiff::Linear(f) => f * x0,
            ref other => panic!("expected scalar difference, got {other:?}"),
        };
        let n = 64;
        let reps = 2000;
        let vals: Vec<f64> = (0..reps)
            .map(|rep| {
                let mut s = stream(13, domains::QUENCHED_PATH, rep);
                let traj = sample_quenched_path(&model, &past, n, &mut s).unwrap();
                let m = mart_path(&approx, &traj, n).unwrap();
                (m[n - 1] - frozen_term).norm_sqr()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let se = jackknife_stderr_mean(&vals).unwrap();
        let want = (n - 1) as f64 * approx.norm_sq;
        assert!(
            (mean - want).abs() <= 4.0 * se,
            "Var_omega(M_n) = {mean} vs (n-1) E|D|^2 = {want}, 4 stderr = {}",
            4.0 * se
        );
    }

    #[test]
    fn white_noise_approx_error_is_exactly_the_frozen_term() {
        let model = white();
        let past = FrozenPast::Linear { innovations: vec![1.3] };
        let rep = approx_error(&model, &past, Frequency::new(0.7).unwrap(), 0, 32, 8, 3).unwrap();
        let want = 1.3 * 1.3 / 32.0;
        assert!(
            (rep.mean_sq - want).abs() < 1e-12,
            "residual is -x_0 f_1 on every path: mean_sq {} vs {want}",
            rep.mean_sq
        );
        assert!((rep.max_sq - want).abs() < 1e-12, "the residual never moves, got {}", rep.max_sq);
        assert!(rep.stderr <= 1e-15, "spread beyond rounding noise: {}", rep.stderr);
    }

    #[test]
    fn two_tap_approx_error_matches_the_expansion_oracle() {
        let lin = LinearAdaptedModel::from_coeffs(&[1.0, 0.5]).unwrap();
        let model = ProcessModel::Linear(lin.clone());
        let theta = Frequency::new(1.3).unwrap();
        let past = FrozenPast::Linear { innovations: vec![1.0, -0.4] };
        let rep = approx_error(&model, &past, theta, 1, 64, 2000, 29).unwrap();
        let want = expansion_oracle(&lin, 1.0, theta, 1, 64);
        assert!(rep.stderr > 0.0, "boundary term varies across replicates");
        assert!(
            (rep.mean_sq - want).abs() <= 4.0 * rep.stderr,
            "mean_sq {} vs oracle {want}, 4 stderr = {}",
            rep.mean_sq,
            4.0 * rep.stderr
        );
    }

    #[test]
    fn geometric_approx_error_is_small_and_shrinks_as_n_doubles() {
        let lin = LinearAdaptedModel::geometric(0.5).unwrap();
        let model = ProcessModel::Linear(lin.clone());
        let theta = Frequency::new(FRAC_PI_2).unwrap();
        let mut fs = stream(37, domains::FREEZE_PAST, 1);
        let past = freeze_past(&model, &mut fs).unwrap();
        let x0 = match &past {
            FrozenPast::Linear { innovations } => innovations[0],
            other => panic!("expected innovations, got {other:?}"),
        };
        let r = 20;
        let small = approx_error(&model, &past, theta, r, 4096, 200, 53).unwrap();
        let large = approx_error(&model, &past, theta, r, 8192, 200, 53).unwrap();
        assert!(small.mean_sq <= 1e-3, "mean_sq at n = 4096 is {}", small.mean_sq);
        assert!(
            large.mean_sq < small.mean_sq,
            "doubling n must shrink the error: {} -> {}",
            small.mean_sq,
            large.mean_sq
        );
        for rep in [&small, &large] {
            let want = expansion_oracle(&lin, x0, theta, r, rep.n);
            assert!(
                (rep.mean_sq - want).abs() <= 4.0 * rep.stderr,
                "n = {}: mean_sq {} vs oracle {want}",
                rep.n,
                rep.mean_sq
            );
        }
    }

    #[test]
    fn identity_chain_approx_error_is_zero() {
        let model = identity_chain();
        let mut fs = stream(41, domains::FREEZE_PAST, 0);
        let past = freeze_past(&model, &mut fs).unwrap();
        let rep = approx_error(&model, &past, Frequency::new(0.8).unwrap(), 2, 16, 4, 11).unwrap();
        assert_eq!(
            (rep.mean_sq, rep.max_sq, rep.stderr),
            (0.0, 0.0, 0.0),
            "deterministic chain: partial sums equal their conditional expectations"
        );
    }

    #[test]
    fn hannan_white_noise_is_flat_after_the_first_term() {
        let rep = condition_hannan(&white(), 12).unwrap();
        assert_eq!(rep.partial_sums[0], 1.0, "|a_0| = 1 opens the series");
        assert_eq!(*rep.partial_sums.last().unwrap(), 1.0, "nothing accrues past lag 0");
        assert_eq!(rep.verdict, Verdict::Converged);
        assert_eq!(rep.tail, 0.0);
        let weak = rep.weak_partial_sums.expect("difference series present");
        assert_eq!(*weak.last().unwrap(), 1.0, "|a_1 - a_0| = 1 is the only difference term");
    }

    #[test]
    fn hannan_geometric_reaches_two_by_k40_but_not_by_k20() {
        let rep = condition_hannan(&geo(), 40).unwrap();
        assert!(
            (rep.partial_sums.last().unwrap() - 2.0).abs() < 1e-6,
            "geometric series sums to 2, got {}",
            rep.partial_sums.last().unwrap()
        );
        assert_eq!(rep.verdict, Verdict::Converged, "tail {} is below 1e-6", rep.tail);
        assert!(!rep.divergence_hint);

        let short = condition_hannan(&geo(), 20).unwrap();
        assert_eq!(
            short.verdict,
            Verdict::Inconclusive,
            "last decade at K = 20 still sums to {} > 1e-6",
            short.tail
        );
    }

    #[test]
    fn hannan_markov_series_decays_at_the_second_eigenvalue() {
        let rep = condition_hannan(&two_state(), 40).unwrap();
        // ||P_0 X_k|| = 0.5^k sqrt(0.72) sums to 2 sqrt(0.72).
        let want = 2.0 * 0.72f64.sqrt();
        assert!(
            (rep.partial_sums.last().unwrap() - want).abs() < 1e-6,
            "chain projection series sums to {want}, got {}",
            rep.partial_sums.last().unwrap()
        );
        assert_eq!(rep.verdict, Verdict::Converged);
    }

    #[test]
    fn mw_white_noise_gives_the_p_series_exactly() {
        let rep = condition_mw(&white(), Frequency::new(0.9).unwrap(), 30).unwrap();
        let mut prev = 0.0;
        for (idx, p) in rep.partial_sums.iter().enumerate() {
            let k = (idx + 1) as f64;
            let inc = p - prev;
            prev = *p;
            assert!(
                (inc - 1.0 / k.powf(1.5)).abs() < 1e-12,
                "||E_0 S_k|| = 1 for white noise, increment {inc} at k = {k}"
            );
        }
        // The p-series converges, but its last-decade tail at K = 30 is still
        // about 0.09, far above the heuristic threshold.
        assert_eq!(rep.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn mw_geometric_matches_the_orthogonal_expansion_closed_form() {
        let lin = LinearAdaptedModel::geometric(0.5).unwrap();
        let theta = Frequency::new(FRAC_PI_2).unwrap();
        let depth = lin.past_depth();
        let rep = condition_mw(&ProcessModel::Linear(lin), theta, 60).unwrap();
        // ||E_0 S_k||^2 = |1 - z^k|^2 sum_{j<=J} rho^{2j} / |1 - z|^2, z = rho e^{i theta}.
        let z = Complex64::new(0.0, 0.5);
        let trunc = (1.0 - 0.25f64.powi(depth as i32 + 1)) / 0.75;
        let mut prev = 0.0;
        for (idx, p) in rep.partial_sums.iter().enumerate() {
            let k = idx + 1;
            let inc = p - prev;
            prev = *p;
            let norm = ((Complex64::new(1.0, 0.0) - z.powu(k as u32)).norm_sqr() * trunc
                / (Complex64::new(1.0, 0.0) - z).norm_sqr())
            .sqrt();
            let want = norm / (k as f64).powf(1.5);
            assert!(
                (inc - want).abs() < 1e-10 * want.max(1.0),
                "k = {k}: increment {inc} vs closed form {want}"
            );
        }
        // Increments settle near 1.033 / k^{1.5}; the decade rule needs close
        // to fifty thousand terms before the tail drops under 1e-6.
        assert!(
            rep.tail > 0.02 && rep.tail < 0.03,
            "last-decade tail at K = 60 is {}, expected about 0.025",
            rep.tail
        );
        assert_eq!(rep.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn mw_geometric_decade_rule_fires_near_fifty_thousand_terms() {
        let rep = condition_mw(&geo(), Frequency::new(FRAC_PI_2).unwrap(), 50_000).unwrap();
        assert_eq!(
            rep.verdict,
            Verdict::Converged,
            "tail at K = 50000 is {}, threshold 1e-6",
            rep.tail
        );
        assert!(!rep.divergence_hint);
    }

    #[test]
    fn mw_zero_observable_chain_reports_zero() {
        let model = ProcessModel::Markov(MarkovFunctionalModel {
            m: 2,
            kernel: vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            stationary: vec![0.4, 0.6],
            observable: vec![0.0, 0.0],
            centered: false,
        });
        let rep = condition_mw(&model, Frequency::new(1.0).unwrap(), 20).unwrap();
        assert!(rep.partial_sums.iter().all(|p| *p == 0.0));
        assert_eq!(rep.verdict, Verdict::Converged);
    }

    #[test]
    fn mw_is_refused_for_rotations() {
        let model = ProcessModel::Cycle(CycleRotationModel::roots_of_unity(4).unwrap());
        assert!(condition_mw(&model, Frequency::new(1.0).unwrap(), 10).is_err());
    }

    #[test]
    fn ratio_white_noise_freezes_after_one_step() {
        let past = FrozenPast::Linear { innovations: vec![0.9] };
        let rep = condition_ratio(&white(), &past, 12).unwrap();
        assert!(
            (rep.partial_sums[0] - 0.81).abs() < 1e-15,
            "k = 1 contributes |0 - x_0|^2 = 0.81, got {}",
            rep.partial_sums[0]
        );
        assert!(
            (rep.partial_sums.last().unwrap() - 0.81).abs() < 1e-15,
            "conditional expectations vanish beyond lag 0"
        );
        assert_eq!(rep.verdict, Verdict::Converged);
    }

    #[test]
    fn ratio_geometric_converges_for_a_typical_past() {
        let model = geo();
        let mut fs = stream(57, domains::FREEZE_PAST, 4);
        let past = freeze_past(&model, &mut fs).unwrap();
        let rep = condition_ratio(&model, &past, 60).unwrap();
        assert_eq!(
            rep.verdict,
            Verdict::Converged,
            "geometric decay of E_0 X_k leaves tail {}",
            rep.tail
        );
        for w in rep.partial_sums.windows(2) {
            assert!(w[1] >= w[0], "partial sums of nonnegative increments must not drop");
        }
    }

    #[test]
    fn ratio_identity_chain_is_identically_zero() {
        let model = identity_chain();
        let past = FrozenPast::Chain { prev_state: 1, state: 1 };
        let rep = condition_ratio(&model, &past, 16).unwrap();
        assert!(rep.partial_sums.iter().all(|p| *p == 0.0));
        assert_eq!(rep.verdict, Verdict::Converged);
    }

    #[test]
    fn rotation_ratio_condition_stays_open() {
        // E_0 X_k walks the roots of unity, so increments are 2/k and the
        // series grows like a harmonic sum.
        let model = ProcessModel::Cycle(CycleRotationModel::roots_of_unity(4).unwrap());
        let past = FrozenPast::Chain { prev_state: 3, state: 0 };
        let rep = condition_ratio(&model, &past, 50).unwrap();
        assert_eq!(rep.verdict, Verdict::Inconclusive);
        assert!(!rep.divergence_hint, "harmonic growth stays under the cap at K = 50");
        let inc1 = rep.partial_sums[0];
        assert!((inc1 - 2.0).abs() < 1e-12, "|i - 1|^2 / 1 = 2, got {inc1}");
    }

    #[test]
    fn cycle_hannan_projects_to_nothing() {
        let model = ProcessModel::Cycle(CycleRotationModel::roots_of_unity(4).unwrap());
        let rep = condition_hannan(&model, 8).unwrap();
        assert!(rep.partial_sums.iter().all(|p| *p == 0.0));
        assert_eq!(rep.verdict, Verdict::Converged);
    }

    #[test]
    fn divergence_hint_fires_on_growing_increments() {
        let coeffs: Vec<f64> = (0..=200).map(|k| k as f64).collect();
        let model = ProcessModel::Linear(LinearAdaptedModel::from_coeffs(&coeffs).unwrap());
        let rep = condition_hannan(&model, 200).unwrap();
        assert!(
            *rep.partial_sums.last().unwrap() > tolerances::DIVERGENCE_CAP,
            "sum of 0..200 is 20100"
        );
        assert_eq!(rep.verdict, Verdict::Inconclusive);
        assert!(rep.divergence_hint, "cap exceeded with still-growing increments");
    }

    #[test]
    fn horizon_zero_is_refused_everywhere() {
        let past = FrozenPast::Linear { innovations: vec![1.0] };
        assert!(condition_hannan(&white(), 0).is_err());
        assert!(condition_mw(&white(), Frequency::new(1.0).unwrap(), 0).is_err());
        assert!(condition_ratio(&white(), &past, 0).is_err());
    }
}
