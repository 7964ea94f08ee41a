//! Causal linear filters of i.i.d. innovations: `X_k = sum_j a_j x_{k-j}`.
//!
//! Coefficients are an explicit finite prefix optionally continued by a
//! geometric tail `a_j = scale * rho^j`. The infinite past is truncated at a
//! depth where the neglected standard deviation drops below the model's
//! `truncation_eps`; with a geometric tail that depth is logarithmic in the
//! tolerance, and without one the truncation is exact.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Driver, Frequency, FrozenPast, InnovationDist, Trajectory};
use crate::rng::Stream;
use crate::tolerances;
use crate::{Error, Result};

/// Geometric continuation `a_j = scale * rho^j` for `j >= coeffs.len()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricTail {
    /// Ratio, strictly inside the unit interval in magnitude and nonzero.
    pub rho: f64,
    /// Overall scale applied to `rho^j`.
    pub scale: f64,
}

fn default_truncation_eps() -> f64 {
    tolerances::DEFAULT_TRUNCATION_EPS
}

/// A causal linear model adapted to its innovation filtration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearAdaptedModel {
    /// Explicit coefficients `a_0 ... a_{p-1}`.
    pub coeffs: Vec<f64>,
    /// Optional geometric continuation beyond the prefix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<GeometricTail>,
    /// Innovation law (centered, unit variance).
    #[serde(default)]
    pub innovation: InnovationDist,
    /// Bound on the standard deviation lost to past truncation.
    #[serde(default = "default_truncation_eps")]
    pub truncation_eps: f64,
}

impl LinearAdaptedModel {
    /// Model with the given finite coefficient vector and default innovation.
    pub fn from_coeffs(coeffs: &[f64]) -> Result<Self> {
        let m = LinearAdaptedModel {
            coeffs: coeffs.to_vec(),
            tail: None,
            innovation: InnovationDist::default(),
            truncation_eps: default_truncation_eps(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Pure geometric model `a_j = rho^j`.
    pub fn geometric(rho: f64) -> Result<Self> {
        let m = LinearAdaptedModel {
            coeffs: Vec::new(),
            tail: Some(GeometricTail { rho, scale: 1.0 }),
            innovation: InnovationDist::default(),
            truncation_eps: default_truncation_eps(),
        };
        m.validate()?;
        Ok(m)
    }

    /// White noise `a = (1)`.
    pub fn white_noise() -> Self {
        LinearAdaptedModel {
            coeffs: vec![1.0],
            tail: None,
            innovation: InnovationDist::default(),
            truncation_eps: default_truncation_eps(),
        }
    }

    /// Replaces the innovation law.
    pub fn with_innovation(mut self, innovation: InnovationDist) -> Self {
        self.innovation = innovation;
        self
    }

    /// Structural checks; see the field docs for the constraints.
    pub fn validate(&self) -> Result<()> {
        for (j, a) in self.coeffs.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::InvalidModel(format!("coefficient a_{j} = {a} is not finite")));
            }
        }
        if let Some(t) = self.tail {
            if !t.rho.is_finite() || t.rho == 0.0 || t.rho.abs() >= 1.0 {
                return Err(Error::InvalidModel(format!(
                    "tail ratio {} must satisfy 0 < |rho| < 1",
                    t.rho
                )));
            }
            if !t.scale.is_finite() || t.scale == 0.0 {
                return Err(Error::InvalidModel(format!(
                    "tail scale {} must be finite and nonzero",
                    t.scale
                )));
            }
        }
        if !(self.truncation_eps > 0.0 && self.truncation_eps <= 0.1) {
            return Err(Error::InvalidModel(format!(
                "truncation tolerance {} outside (0, 0.1]",
                self.truncation_eps
            )));
        }
        if self.tail.is_none() && self.coeffs.iter().all(|a| *a == 0.0) {
            return Err(Error::InvalidModel(
                "model has no nonzero coefficient and no tail".into(),
            ));
        }
        Ok(())
    }

    /// Coefficient `a_j`, tail included.
    pub fn coeff(&self, j: usize) -> f64 {
        if j < self.coeffs.len() {
            self.coeffs[j]
        } else if let Some(t) = self.tail {
            t.scale * t.rho.powi(j as i32)
        } else {
            0.0
        }
    }

    /// Depth `J` of the truncated past: innovations `x_0 ... x_{-J}` are
    /// kept, and the neglected contribution has standard deviation at most
    /// `truncation_eps`.
    pub fn past_depth(&self) -> usize {
        let last_nonzero = self
            .coeffs
            .iter()
            .rposition(|a| *a != 0.0)
            .unwrap_or(0);
        match self.tail {
            None => last_nonzero,
            Some(t) => {
                // Smallest J with scale^2 rho^{2(J+1)} / (1 - rho^2) <= eps^2.
                let p = self.coeffs.len();
                let eps2 = self.truncation_eps * self.truncation_eps;
                let ratio = eps2 * (1.0 - t.rho * t.rho) / (t.scale * t.scale);
                let bound = (ratio.ln() / (2.0 * t.rho.abs().ln())).ceil();
                let from_tail = if bound.is_finite() && bound > 0.0 { bound as usize } else { 0 };
                last_nonzero.max(p).max(from_tail.saturating_sub(1))
            }
        }
    }

    /// Nonzero prefix coefficients as `(index, value)` pairs.
    pub(crate) fn nonzero_prefix(&self) -> Vec<(usize, f64)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(j, a)| (j, *a))
            .collect()
    }

    /// Partial transfer sums `f_0, f_1, ..., f_upto` at `theta`, where
    /// `f_r = sum_{j<r} a_j exp(i j theta)` and `f_0 = 0`.
    pub fn transfer_prefix(&self, theta: Frequency, upto: usize) -> Vec<Complex64> {
        let th = theta.radians();
        let mut out = Vec::with_capacity(upto + 1);
        out.push(Complex64::new(0.0, 0.0));
        let mut sum = Complex64::new(0.0, 0.0);
        let mut comp = Complex64::new(0.0, 0.0);
        for j in 0..upto {
            let a = self.coeff(j);
            if a != 0.0 {
                let (s, c) = (j as f64 * th).sin_cos();
                // Kahan compensation keeps long sums at a few ulp.
                let term = Complex64::new(a * c, a * s) - comp;
                let t = sum + term;
                comp = (t - sum) - term;
                sum = t;
            }
            out.push(sum);
        }
        out
    }

    /// `f_r(theta)`.
    pub fn transfer_partial(&self, theta: Frequency, r: usize) -> Complex64 {
        *self
            .transfer_prefix(theta, r)
            .last()
            .expect("prefix vector always holds f_0")
    }

    /// Full transfer function `f(theta) = sum_{j>=0} a_j exp(i j theta)`:
    /// prefix summed termwise plus the closed-form geometric tail.
    pub fn transfer_full(&self, theta: Frequency) -> Result<Complex64> {
        let p = self.coeffs.len();
        let mut sum = self.transfer_partial(theta, p);
        if let Some(t) = self.tail {
            let z = t.rho * theta.phase();
            let zp = z.powu(p as u32);
            sum += t.scale * zp / (Complex64::new(1.0, 0.0) - z);
        }
        Ok(sum)
    }

    /// Exact autocovariance `gamma(h) = sum_j a_j a_{j+h}` (unit innovation
    /// variance): prefix terms summed directly, tail-by-tail in closed form.
    pub fn exact_autocov(&self, h: usize) -> f64 {
        let p = self.coeffs.len();
        let mut g = 0.0;
        for j in 0..p {
            g += self.coeffs[j] * self.coeff(j + h);
        }
        if let Some(t) = self.tail {
            // sum_{j>=p} scale^2 rho^{2j+h} = scale^2 rho^{2p+h} / (1-rho^2)
            g += t.scale * t.scale * t.rho.powi((2 * p + h) as i32) / (1.0 - t.rho * t.rho);
        }
        g
    }

    fn draw_past(&self, stream: &mut Stream) -> Vec<f64> {
        let depth = self.past_depth();
        (0..=depth).map(|_| self.innovation.sample(&mut stream.rng)).collect()
    }

    pub(crate) fn freeze_past(&self, stream: &mut Stream) -> FrozenPast {
        FrozenPast::Linear { innovations: self.draw_past(stream) }
    }

    /// Builds `X_0 ... X_{n-1}` from the innovation line `xs`, where
    /// `xs[t + depth] = x_t` for `t` in `[-depth, n-1]`.
    fn assemble(&self, xs: &[f64], n: usize) -> Vec<Complex64> {
        let depth = self.past_depth();
        debug_assert_eq!(xs.len(), depth + n);
        let nz = self.nonzero_prefix();
        let mut values = vec![Complex64::new(0.0, 0.0); n];
        for (j, a) in &nz {
            // Truncation keeps only lags reaching into the stored line.
            for (k, v) in values.iter_mut().enumerate() {
                if *j <= k + depth {
                    v.re += a * xs[k + depth - j];
                }
            }
        }
        if let Some(t) = self.tail {
            let p = self.coeffs.len();
            // c_k = sum_{j=p}^{k+depth} scale rho^j x_{k-j} satisfies the
            // exact recursion c_k = rho c_{k-1} + scale rho^p x_{k-p};
            // past_depth() guarantees depth >= p so x_{k-p} is stored.
            let lead = t.scale * t.rho.powi(p as i32);
            let mut c = 0.0;
            let mut w = lead;
            for j in p..=depth {
                c += w * xs[depth - j];
                w *= t.rho;
            }
            values[0].re += c;
            for (k, v) in values.iter_mut().enumerate().skip(1) {
                c = t.rho * c + lead * xs[k + depth - p];
                v.re += c;
            }
        }
        values
    }

    pub(crate) fn sample_path(&self, n: usize, stream: &mut Stream) -> Result<Trajectory> {
        let past = self.draw_past(stream);
        self.grow(past, n, stream)
    }

    pub(crate) fn sample_quenched_path(
        &self,
        innovations: &[f64],
        n: usize,
        stream: &mut Stream,
    ) -> Result<Trajectory> {
        let depth = self.past_depth();
        if innovations.len() != depth + 1 {
            return Err(Error::InvalidArgument(format!(
                "frozen past has depth {}, model truncation needs {}",
                innovations.len().saturating_sub(1),
                depth
            )));
        }
        self.grow(innovations.to_vec(), n, stream)
    }

    fn grow(&self, past: Vec<f64>, n: usize, stream: &mut Stream) -> Result<Trajectory> {
        let depth = self.past_depth();
        let mut xs = vec![0.0; depth + n];
        for (j, x) in past.iter().enumerate() {
            // past[j] = x_{-j} lands at position depth - j.
            xs[depth - j] = *x;
        }
        let fresh: Vec<f64> =
            (1..n).map(|_| self.innovation.sample(&mut stream.rng)).collect();
        for (t, x) in fresh.iter().enumerate() {
            xs[depth + 1 + t] = *x;
        }
        Ok(Trajectory {
            values: self.assemble(&xs, n),
            driver: Driver::Innovations(fresh),
            past: FrozenPast::Linear { innovations: past },
            stream: stream.id,
        })
    }

    /// Closed-form conditional expectation of `S_n(theta)` given the frozen
    /// innovations: `sum_{j=0}^{J} x_{-j} (f_{j+n} - f_j) exp(-i j theta)`.
    pub(crate) fn cond_exp_dft(
        &self,
        innovations: &[f64],
        n: usize,
        theta: Frequency,
    ) -> Result<Complex64> {
        let kernel = LinearCondExp::new(self, n, theta)?;
        kernel.eval(innovations)
    }

    /// `E[X_k | past] = sum_{j=0}^{J} x_{-j} a_{k+j}`.
    pub fn cond_exp_obs(&self, innovations: &[f64], k: usize) -> f64 {
        innovations
            .iter()
            .enumerate()
            .map(|(j, x)| x * self.coeff(k + j))
            .sum()
    }

    /// Conditional expectations of the first `n` observations given the
    /// frozen past.
    pub(crate) fn cond_exp_profile(&self, innovations: &[f64], n: usize) -> Result<Vec<f64>> {
        let depth = self.past_depth();
        if innovations.len() != depth + 1 {
            return Err(Error::InvalidArgument(format!(
                "frozen past has depth {}, model truncation needs {}",
                innovations.len().saturating_sub(1),
                depth
            )));
        }
        Ok((0..n).map(|k| self.cond_exp_obs(innovations, k)).collect())
    }
}

/// Partial transfer sums `f_m(theta)` addressable at any order in constant
/// time: the coefficient prefix is tabulated once and the geometric tail is
/// continued in closed form.
pub(crate) struct TransferTable {
    /// `f_0 ..= f_p` for `p = coeffs.len()`.
    prefix: Vec<Complex64>,
    tail: Option<TailGeom>,
}

struct TailGeom {
    /// `rho * exp(i theta)`.
    z: Complex64,
    /// `z^p`.
    zp: Complex64,
    scale: f64,
}

impl TransferTable {
    pub(crate) fn new(model: &LinearAdaptedModel, theta: Frequency) -> Self {
        let p = model.coeffs.len();
        let prefix = model.transfer_prefix(theta, p);
        let tail = model.tail.map(|t| {
            let z = t.rho * theta.phase();
            TailGeom { z, zp: z.powu(p as u32), scale: t.scale }
        });
        TransferTable { prefix, tail }
    }

    /// `f_m(theta)`; beyond the prefix this is
    /// `f_p + scale (z^p - z^m) / (1 - z)`, exact for a geometric tail and
    /// constant without one.
    pub(crate) fn f_at(&self, m: usize) -> Complex64 {
        if m < self.prefix.len() {
            return self.prefix[m];
        }
        let f_p = *self.prefix.last().expect("prefix always holds f_0");
        match &self.tail {
            None => f_p,
            Some(t) => {
                let zm = t.z.powu(m as u32);
                f_p + t.scale * (t.zp - zm) / (Complex64::new(1.0, 0.0) - t.z)
            }
        }
    }
}

/// Precomputed conditional-expectation kernel for one `(model, n, theta)`:
/// evaluating over a frozen past is then a single weighted sum, which is the
/// shape Monte Carlo loops want.
pub struct LinearCondExp {
    /// `weights[j] = (f_{j+n} - f_j) exp(-i j theta)`.
    weights: Vec<Complex64>,
}

impl LinearCondExp {
    /// Builds the kernel; memory is one slot per stored innovation no matter
    /// how large `n` is.
    pub fn new(model: &LinearAdaptedModel, n: usize, theta: Frequency) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("partial sum length must be positive".into()));
        }
        let depth = model.past_depth();
        let table = TransferTable::new(model, theta);
        let th = theta.radians();
        let weights = (0..=depth)
            .map(|j| {
                let (s, c) = (j as f64 * th).sin_cos();
                (table.f_at(j + n) - table.f_at(j)) * Complex64::new(c, -s)
            })
            .collect();
        Ok(LinearCondExp { weights })
    }

    /// Applies the kernel to a frozen past (`innovations[j] = x_{-j}`).
    pub fn eval(&self, innovations: &[f64]) -> Result<Complex64> {
        if innovations.len() != self.weights.len() {
            return Err(Error::InvalidArgument(format!(
                "frozen past has depth {}, kernel was built for {}",
                innovations.len().saturating_sub(1),
                self.weights.len().saturating_sub(1)
            )));
        }
        let mut sum = Complex64::new(0.0, 0.0);
        let mut comp = Complex64::new(0.0, 0.0);
        for (x, w) in innovations.iter().zip(&self.weights) {
            let term = w * *x - comp;
            let t = sum + term;
            comp = (t - sum) - term;
            sum = t;
        }
        Ok(sum)
    }
}
