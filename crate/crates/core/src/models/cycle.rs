//! Deterministic rotation on `Z/mZ` started from a uniform state.
//!
//! The only randomness is the initial state; every path is a rigid rotation
//! of the observable around the cycle. The spectral measure is atomic at the
//! cycle's eigenvalue angles, which makes this the canonical example where a
//! frequency either resonates exactly or averages out at rate `1/n`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Driver, Frequency, FrozenPast, Trajectory};
use crate::rng::Stream;
use crate::tolerances;
use crate::{Error, Result};

/// Rotation by one step per time unit on `m` states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleRotationModel {
    /// Cycle length.
    pub m: usize,
    /// Observable per state; defaults to the `m`-th roots of unity
    /// `v(j) = exp(2 pi i j / m)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<Vec<Complex64>>,
}

/// `exp(2 pi i j / m)` with exact values on the quarter-turn grid, so the
/// `m = 4` cycle produces literally `1, i, -1, -i`.
fn unit_phase(j: usize, m: usize) -> Complex64 {
    let r = (4 * j) % m;
    if r == 0 {
        match (4 * j / m) % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    } else {
        let ang = std::f64::consts::TAU * (j as f64) / (m as f64);
        Complex64::new(ang.cos(), ang.sin())
    }
}

impl CycleRotationModel {
    /// Cycle with the default root-of-unity observable.
    pub fn roots_of_unity(m: usize) -> Result<Self> {
        let model = CycleRotationModel { m, observable: None };
        model.validate()?;
        Ok(model)
    }

    /// Structural checks.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidModel("cycle length must be positive".into()));
        }
        if let Some(obs) = &self.observable {
            if obs.len() != self.m {
                return Err(Error::InvalidModel(format!(
                    "observable has {} entries, expected {}",
                    obs.len(),
                    self.m
                )));
            }
            if obs.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::InvalidModel("observable has a non-finite entry".into()));
            }
        }
        Ok(())
    }

    /// Raw observable at state `j`.
    pub fn value(&self, j: usize) -> Complex64 {
        match &self.observable {
            Some(obs) => obs[j % self.m],
            None => unit_phase(j % self.m, self.m),
        }
    }

    fn mean(&self) -> Complex64 {
        match &self.observable {
            // Roots of unity already sum to zero for m >= 2.
            None if self.m >= 2 => Complex64::new(0.0, 0.0),
            _ => {
                let sum: Complex64 = (0..self.m).map(|j| self.value(j)).sum();
                sum / self.m as f64
            }
        }
    }

    /// Observable centered against the uniform law.
    pub fn centered_value(&self, j: usize) -> Complex64 {
        self.value(j) - self.mean()
    }

    /// Exact autocovariance `gamma(h) = E[X_h conj(X_0)]` under the uniform
    /// start: `(1/m) sum_j v_c(j+h) conj(v_c(j))`.
    pub fn exact_autocov(&self, lag: i64) -> Complex64 {
        let shift = lag.rem_euclid(self.m as i64) as usize;
        let mut sum = Complex64::new(0.0, 0.0);
        for j in 0..self.m {
            sum += self.centered_value((j + shift) % self.m) * self.centered_value(j).conj();
        }
        sum / self.m as f64
    }

    /// True when `exp(i theta)` sits on the rotation's point spectrum, i.e.
    /// `theta * m / pi` is an integer up to float tolerance. Resonant
    /// frequencies carry atoms of the spectral measure, so averaging limits
    /// degenerate there.
    pub fn is_eigen_frequency(&self, theta: Frequency) -> bool {
        let t = theta.radians() * self.m as f64 / std::f64::consts::PI;
        (t - t.round()).abs() <= tolerances::EIGEN_FREQ_TOL
    }

    /// Conditional expectations of the first `n` observations; the rotation
    /// is deterministic so these are the centered values themselves.
    pub(crate) fn cond_exp_profile(&self, state: usize, n: usize) -> Result<Vec<Complex64>> {
        if state >= self.m {
            return Err(Error::InvalidArgument(format!(
                "state {state} outside the {}-cycle",
                self.m
            )));
        }
        Ok((0..n).map(|k| self.centered_value(state + k)).collect())
    }

    /// Rotated partial sum from a known state; the path is deterministic,
    /// so this is both `S_n(theta)` and its conditional expectation.
    pub(crate) fn cond_exp_dft(&self, state: usize, n: usize, theta: Frequency) -> Result<Complex64> {
        if state >= self.m {
            return Err(Error::InvalidArgument(format!(
                "state {state} outside the {}-cycle",
                self.m
            )));
        }
        let th = theta.radians();
        let mut sum = Complex64::new(0.0, 0.0);
        let mut comp = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let (s, c) = (k as f64 * th).sin_cos();
            let term = Complex64::new(c, s) * self.centered_value(state + k) - comp;
            let t = sum + term;
            comp = (t - sum) - term;
            sum = t;
        }
        Ok(sum)
    }

    pub(crate) fn freeze_past(&self, stream: &mut Stream) -> Result<FrozenPast> {
        use rand::Rng;
        let state = stream.rng.gen_range(0..self.m);
        Ok(FrozenPast::Chain {
            prev_state: (state + self.m - 1) % self.m,
            state,
        })
    }

    pub(crate) fn sample_path(&self, n: usize, stream: &mut Stream) -> Result<Trajectory> {
        let past = self.freeze_past(stream)?;
        let (prev, state) = match past {
            FrozenPast::Chain { prev_state, state } => (prev_state, state),
            _ => unreachable!("cycle freeze always yields a chain past"),
        };
        let mut traj = self.sample_quenched_path(prev, state, n)?;
        traj.stream = stream.id;
        Ok(traj)
    }

    pub(crate) fn sample_quenched_path(
        &self,
        prev_state: usize,
        state: usize,
        n: usize,
    ) -> Result<Trajectory> {
        if prev_state >= self.m || state >= self.m {
            return Err(Error::InvalidArgument(format!(
                "frozen pair ({prev_state}, {state}) outside the {}-cycle",
                self.m
            )));
        }
        if (prev_state + 1) % self.m != state {
            return Err(Error::InvalidArgument(format!(
                "states ({prev_state}, {state}) are not consecutive on the {}-cycle",
                self.m
            )));
        }
        let states: Vec<usize> = std::iter::once(prev_state)
            .chain((0..n).map(|k| (state + k) % self.m))
            .collect();
        let values = states[1..].iter().map(|s| self.centered_value(*s)).collect();
        Ok(Trajectory {
            values,
            driver: Driver::States(states),
            past: FrozenPast::Chain { prev_state, state },
            stream: crate::rng::StreamId { master: 0, domain: 0, replicate: 0 },
        })
    }
}
