//! Real functionals of stationary finite-state Markov chains.
//!
//! The chain runs under its stationary law; the observed process is
//! `X_k = v(xi_k)` with the observable centered against the stationary
//! distribution. Conditional expectations of rotated partial sums reduce to
//! iterated kernel applications, which is also how autocovariances and the
//! mixing rate are computed, so no matrix powers are ever materialized.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Driver, Frequency, FrozenPast, Trajectory};
use crate::rng::Stream;
use crate::tolerances;
use crate::{Error, Result};

/// Functional of a stationary finite-state chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovFunctionalModel {
    /// Number of states.
    pub m: usize,
    /// Row-stochastic transition kernel, row major: `kernel[i][j] = P(i -> j)`.
    pub kernel: Vec<Vec<f64>>,
    /// Stationary distribution of the kernel.
    pub stationary: Vec<f64>,
    /// Observable `v` evaluated at each state.
    pub observable: Vec<f64>,
    /// When true, `v` is asserted to already have zero stationary mean;
    /// when false, the model centers it internally.
    #[serde(default)]
    pub centered: bool,
}

impl MarkovFunctionalModel {
    /// Structural checks: stochastic rows, a genuine stationary vector, a
    /// finite observable, and the centering claim when made.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidModel("chain needs at least one state".into()));
        }
        if self.kernel.len() != self.m {
            return Err(Error::InvalidModel(format!(
                "kernel has {} rows, expected {}",
                self.kernel.len(),
                self.m
            )));
        }
        for (i, row) in self.kernel.iter().enumerate() {
            if row.len() != self.m {
                return Err(Error::InvalidModel(format!(
                    "kernel row {i} has {} entries, expected {}",
                    row.len(),
                    self.m
                )));
            }
            let mut sum = 0.0;
            for (j, p) in row.iter().enumerate() {
                if !p.is_finite() || *p < 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "kernel entry ({i}, {j}) = {p} is not a probability"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > tolerances::KERNEL_ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!(
                    "kernel row {i} sums to {sum}, not 1"
                )));
            }
        }
        if self.stationary.len() != self.m {
            return Err(Error::InvalidModel(format!(
                "stationary vector has {} entries, expected {}",
                self.stationary.len(),
                self.m
            )));
        }
        let mut total = 0.0;
        for (i, p) in self.stationary.iter().enumerate() {
            if !p.is_finite() || *p < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "stationary entry {i} = {p} is not a probability"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("stationary mass is {total}, not 1")));
        }
        for j in 0..self.m {
            let mut out = 0.0;
            for i in 0..self.m {
                out += self.stationary[i] * self.kernel[i][j];
            }
            if (out - self.stationary[j]).abs() > tolerances::STATIONARY_RESIDUAL_TOL {
                return Err(Error::InvalidModel(format!(
                    "stationarity residual {:.3e} at state {j}",
                    (out - self.stationary[j]).abs()
                )));
            }
        }
        if self.observable.len() != self.m {
            return Err(Error::InvalidModel(format!(
                "observable has {} entries, expected {}",
                self.observable.len(),
                self.m
            )));
        }
        if self.observable.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("observable has a non-finite entry".into()));
        }
        if self.centered {
            let mean = self.stationary_mean();
            if mean.abs() > tolerances::CENTERED_MEAN_TOL {
                return Err(Error::InvalidModel(format!(
                    "observable declared centered but has stationary mean {mean:.3e}"
                )));
            }
        }
        Ok(())
    }

    fn stationary_mean(&self) -> f64 {
        self.stationary
            .iter()
            .zip(&self.observable)
            .map(|(p, v)| p * v)
            .sum()
    }

    /// The observable with its stationary mean removed.
    pub fn centered_observable(&self) -> Vec<f64> {
        let mean = if self.centered { 0.0 } else { self.stationary_mean() };
        self.observable.iter().map(|v| v - mean).collect()
    }

    /// One kernel application `(P w)(i) = sum_j P(i, j) w(j)`.
    pub fn apply_kernel(&self, w: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| self.kernel[i].iter().zip(w).map(|(p, x)| p * x).sum())
            .collect()
    }

    /// Exact autocovariance `gamma(h) = sum_i pi_i v_c(i) (P^h v_c)(i)`.
    pub fn exact_autocov(&self, h: usize) -> f64 {
        let vc = self.centered_observable();
        let mut w = vc.clone();
        for _ in 0..h {
            w = self.apply_kernel(&w);
        }
        self.stationary
            .iter()
            .zip(&vc)
            .zip(&w)
            .map(|((p, a), b)| p * a * b)
            .sum()
    }

    /// Estimate of the modulus of the second-largest kernel eigenvalue by
    /// power iteration on the subspace of zero-stationary-mean functions
    /// (invariant under the kernel, so the leading eigenvalue never leaks
    /// back in). Drives truncation horizons, not verdicts.
    pub fn mixing_decay(&self) -> Result<f64> {
        if self.m == 1 {
            return Ok(0.0);
        }
        let center = |w: &mut [f64], pi: &[f64]| {
            let mean: f64 = pi.iter().zip(w.iter()).map(|(p, x)| p * x).sum();
            for x in w.iter_mut() {
                *x -= mean;
            }
        };
        let mut w: Vec<f64> = (0..self.m).map(|i| 1.0 / (i as f64 + 2.0)).collect();
        center(&mut w, &self.stationary);
        let mut log_ratio_sum = 0.0;
        let mut counted = 0u32;
        let burn_in = 100;
        let total = 400;
        for it in 0..total {
            let next = self.apply_kernel(&w);
            let norm = next.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if norm < 1e-280 {
                // The centered observable space dies out: kernel is exactly
                // finite-memory on it.
                return Ok(0.0);
            }
            if it >= burn_in {
                log_ratio_sum += norm.ln();
                counted += 1;
            }
            w = next.iter().map(|x| x / norm).collect();
            center(&mut w, &self.stationary);
        }
        let beta = (log_ratio_sum / f64::from(counted)).exp().min(1.0);
        if beta > 1.0 - 1e-6 {
            return Err(Error::NotApplicable(format!(
                "kernel mixes too slowly for series truncation (decay estimate {beta})"
            )));
        }
        Ok(beta.max(0.0))
    }

    /// Closed-form conditional expectation of `S_n(theta)` given the state
    /// at time zero: `sum_{k<n} exp(i k theta) (P^k v_c)(state)`.
    pub(crate) fn cond_exp_dft(&self, state: usize, n: usize, theta: Frequency) -> Result<Complex64> {
        if state >= self.m {
            return Err(Error::InvalidArgument(format!(
                "state {state} outside the {}-state chain",
                self.m
            )));
        }
        let th = theta.radians();
        let mut w = self.centered_observable();
        let mut sum = Complex64::new(0.0, 0.0);
        let mut comp = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let (s, c) = (k as f64 * th).sin_cos();
            let term = Complex64::new(c, s) * w[state] - comp;
            let t = sum + term;
            comp = (t - sum) - term;
            sum = t;
            if k + 1 < n {
                w = self.apply_kernel(&w);
            }
        }
        Ok(sum)
    }

    /// Conditional expectations of the first `n` observations given the
    /// state at time zero: entry `k` is `(P^k v_c)(state)`.
    pub(crate) fn cond_exp_profile(&self, state: usize, n: usize) -> Result<Vec<f64>> {
        if state >= self.m {
            return Err(Error::InvalidArgument(format!(
                "state {state} outside the {}-state chain",
                self.m
            )));
        }
        let mut w = self.centered_observable();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            out.push(w[state]);
            if k + 1 < n {
                w = self.apply_kernel(&w);
            }
        }
        Ok(out)
    }

    fn cdf_rows(&self) -> Vec<Vec<f64>> {
        self.kernel
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    fn draw_from_cdf(cdf: &[f64], u: f64) -> usize {
        cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
    }

    fn stationary_cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.stationary
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }

    pub(crate) fn freeze_past(&self, stream: &mut Stream) -> Result<FrozenPast> {
        use rand::Rng;
        let prev = Self::draw_from_cdf(&self.stationary_cdf(), stream.rng.gen::<f64>());
        let rows = self.cdf_rows();
        let state = Self::draw_from_cdf(&rows[prev], stream.rng.gen::<f64>());
        Ok(FrozenPast::Chain { prev_state: prev, state })
    }

    pub(crate) fn sample_path(&self, n: usize, stream: &mut Stream) -> Result<Trajectory> {
        let past = self.freeze_past(stream)?;
        let (prev, state) = match past {
            FrozenPast::Chain { prev_state, state } => (prev_state, state),
            _ => unreachable!("markov freeze always yields a chain past"),
        };
        self.sample_quenched_path(prev, state, n, stream)
    }

    pub(crate) fn sample_quenched_path(
        &self,
        prev_state: usize,
        state: usize,
        n: usize,
        stream: &mut Stream,
    ) -> Result<Trajectory> {
        use rand::Rng;
        if prev_state >= self.m || state >= self.m {
            return Err(Error::InvalidArgument(format!(
                "frozen pair ({prev_state}, {state}) outside the {}-state chain",
                self.m
            )));
        }
        let rows = self.cdf_rows();
        let vc = self.centered_observable();
        let mut states = Vec::with_capacity(n + 1);
        states.push(prev_state);
        states.push(state);
        let mut current = state;
        for _ in 1..n {
            current = Self::draw_from_cdf(&rows[current], stream.rng.gen::<f64>());
            states.push(current);
        }
        let values = states[1..]
            .iter()
            .map(|s| Complex64::new(vc[*s], 0.0))
            .collect();
        Ok(Trajectory {
            values,
            driver: Driver::States(states),
            past: FrozenPast::Chain { prev_state, state },
            stream: stream.id,
        })
    }
}
