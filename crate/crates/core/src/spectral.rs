//! Spectral density values: exact closed forms, periodogram averaging, and
//! Cesaro sums of autocovariances.
//!
//! All three routes target the same non-normalized density
//! `f(theta) = sum_h gamma(h) exp(-i h theta)`, which doubles as the long-run
//! variance `sigma^2(theta)` of frequency-rotated partial sums away from
//! spectral atoms. Estimates carry their provenance so downstream reports can
//! say which route produced a number.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fourier::{dft, fejer_cesaro, CovSeq};
use crate::models::{sample_path, Frequency, ProcessModel};
use crate::rng::{domains, stream};
use crate::stats_kit::jackknife_stderr_mean;
use crate::tolerances;
use crate::{Error, Result};

/// How a spectral value was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMethod {
    /// Closed form from the model's coefficients or kernel.
    Exact,
    /// Monte Carlo average of the periodogram `|S_n(theta)|^2 / n`.
    Variance,
    /// Cesaro (Fejer) average of a finite autocovariance window.
    Cesaro,
}

/// One spectral value with enough provenance to audit it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralEstimate {
    /// Canonical frequency in radians.
    pub theta: f64,
    /// The density (or long-run variance) value.
    pub estimate: f64,
    /// Route that produced the value.
    pub method: SpectralMethod,
    /// Path length for `variance`, averaging order for `cesaro`, zero for
    /// `exact`.
    pub n: usize,
    /// Monte Carlo replicates; zero for deterministic routes.
    pub reps: usize,
    /// Jackknife standard error of the estimate; zero for deterministic
    /// routes.
    pub stderr: f64,
}

fn exact(theta: Frequency, estimate: f64) -> SpectralEstimate {
    SpectralEstimate {
        theta: theta.radians(),
        estimate,
        method: SpectralMethod::Exact,
        n: 0,
        reps: 0,
        stderr: 0.0,
    }
}

/// Closed-form spectral density.
///
/// Linear models evaluate `|f(theta)|^2` from the transfer function. Markov
/// functionals sum `gamma(0) + 2 sum_{k<=K} gamma(k) cos(k theta)` with the
/// horizon `K` chosen so the neglected geometric tail is below
/// `MARKOV_DENSITY_TAIL`; chains whose mixing rate cannot certify that bound
/// fail with a precision error. Rotations have purely atomic spectra and are
/// refused.
pub fn density_exact(model: &ProcessModel, theta: Frequency) -> Result<SpectralEstimate> {
    match model {
        ProcessModel::Linear(m) => {
            let f = m.transfer_full(theta)?;
            Ok(exact(theta, f.norm_sqr()))
        }
        ProcessModel::Markov(m) => {
            let g0 = m.exact_autocov(0);
            if g0 == 0.0 {
                return Ok(exact(theta, 0.0));
            }
            let beta = m.mixing_decay().map_err(|e| {
                Error::Precision(format!("autocovariance tail cannot be certified: {e}"))
            })?;
            let horizon = if beta == 0.0 {
                // Finite-memory kernel: gamma(k) vanishes beyond m steps.
                m.m
            } else {
                let target = tolerances::MARKOV_DENSITY_TAIL * (1.0 - beta) / g0;
                let k = (target.ln() / beta.ln()).ceil();
                if !(k.is_finite() && k <= 1e6) {
                    return Err(Error::Precision(format!(
                        "autocovariance truncation needs {k:.0} terms for decay rate {beta}"
                    )));
                }
                (k.max(1.0)) as usize
            };
            let th = theta.radians();
            let mut sum = g0;
            for k in 1..=horizon {
                sum += 2.0 * m.exact_autocov(k) * (k as f64 * th).cos();
            }
            Ok(exact(theta, sum))
        }
        ProcessModel::Cycle(_) => Err(Error::NotApplicable(
            "rotation spectra are atomic; no density exists".into(),
        )),
    }
}

/// Monte Carlo density estimate: the mean periodogram over `reps`
/// independent stationary paths of length `n`.
pub fn density_variance_est(
    model: &ProcessModel,
    theta: Frequency,
    n: usize,
    reps: usize,
    master: u64,
) -> Result<SpectralEstimate> {
    if n == 0 || reps == 0 {
        return Err(Error::InvalidArgument(format!(
            "need positive path length and replicates, got n = {n}, reps = {reps}"
        )));
    }
    model.validate()?;
    let values = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut s = stream(master, domains::DENSITY_EST, rep as u64);
            let traj = sample_path(model, n, &mut s)?;
            Ok(dft(&traj, theta)?.periodogram)
        })
        .collect::<Result<Vec<f64>>>()?;
    let estimate = values.iter().sum::<f64>() / reps as f64;
    let stderr = if reps == 1 { 0.0 } else { jackknife_stderr_mean(&values)? };
    Ok(SpectralEstimate {
        theta: theta.radians(),
        estimate,
        method: SpectralMethod::Variance,
        n,
        reps,
        stderr,
    })
}

/// Cesaro density value of order `n` from a stored autocovariance window.
/// Fails when the window holds fewer than `n` lags.
pub fn density_cesaro(gamma: &CovSeq, theta: Frequency, n: usize) -> Result<SpectralEstimate> {
    let value = fejer_cesaro(gamma, theta, n)?;
    Ok(SpectralEstimate {
        theta: theta.radians(),
        estimate: value.re,
        method: SpectralMethod::Cesaro,
        n,
        reps: 0,
        stderr: 0.0,
    })
}

/// Long-run variance `sigma^2(theta)` used to standardize quenched limits.
///
/// Linear and Markov models read it off the density. A rotation contributes
/// zero off its eigenvalue angles; on them the averaged limit degenerates and
/// no finite `sigma^2` applies.
pub fn sigma2_quenched(model: &ProcessModel, theta: Frequency) -> Result<SpectralEstimate> {
    match model {
        ProcessModel::Cycle(m) => {
            if m.is_eigen_frequency(theta) {
                Err(Error::NotApplicable(format!(
                    "theta = {} lies on the rotation's point spectrum",
                    theta.radians()
                )))
            } else {
                Ok(exact(theta, 0.0))
            }
        }
        _ => density_exact(model, theta),
    }
}
