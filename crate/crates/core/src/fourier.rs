//! Rotated sums of sampled paths and averaging of covariance sequences.
//!
//! The frequency-rotated partial sum `S_n(theta) = sum_{k<n} X_k e^{i k theta}`
//! is the object everything else standardizes: its average, its periodogram,
//! its partial-sum path, and the Cesaro average that ties the second moment
//! of `S_n/sqrt(n)` to the spectral density.
//!
//! Rotation is incremental (one complex multiply per step, renormalized on a
//! fixed schedule) with compensated summation, so a single pass handles
//! multi-hundred-thousand-step sums at a few hundred ulp of drift.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::models::{Frequency, Trajectory};
use crate::tolerances;
use crate::{Error, Result};

/// Steps between unit-modulus renormalizations of the incremental rotation.
const ROTOR_RENORM_PERIOD: u32 = 1 << 16;

/// Incremental `e^{i k theta}` generator.
pub(crate) struct Rotor {
    current: Complex64,
    step: Complex64,
    since_renorm: u32,
}

impl Rotor {
    pub(crate) fn new(theta: Frequency) -> Self {
        Rotor {
            current: Complex64::new(1.0, 0.0),
            step: theta.phase(),
            since_renorm: 0,
        }
    }

    /// `e^{i k theta}` where `k` counts prior `advance` calls.
    pub(crate) fn current(&self) -> Complex64 {
        self.current
    }

    pub(crate) fn advance(&mut self) {
        self.current *= self.step;
        self.since_renorm += 1;
        if self.since_renorm == ROTOR_RENORM_PERIOD {
            // Modulus drift is multiplicative; rescaling restores it while
            // leaving the (slowly wandering) phase untouched.
            self.current /= self.current.norm();
            self.since_renorm = 0;
        }
    }
}

/// Compensated complex accumulator (Kahan).
#[derive(Clone, Copy)]
pub(crate) struct KahanComplex {
    sum: Complex64,
    comp: Complex64,
}

impl KahanComplex {
    pub(crate) fn new() -> Self {
        KahanComplex { sum: Complex64::new(0.0, 0.0), comp: Complex64::new(0.0, 0.0) }
    }

    pub(crate) fn add(&mut self, term: Complex64) {
        let y = term - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> Complex64 {
        self.sum
    }
}

/// One evaluated rotated sum.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DftPoint {
    /// Number of summed terms.
    pub n: usize,
    /// Evaluation frequency in radians.
    pub theta: f64,
    /// `S_n(theta)`.
    pub sum: Complex64,
    /// `A_n(theta) = S_n(theta) / n`.
    pub average: Complex64,
    /// `I_n(theta) = |S_n(theta)|^2 / n`.
    pub periodogram: f64,
}

/// Rotated prefix sums `S_m(theta)` captured at each requested mark. Marks
/// must be nondecreasing and at most the path length; repeated marks repeat
/// the capture. One pass, one rotation state, so every capture is bitwise
/// identical to what a full-length evaluation would have seen.
pub fn rotated_prefix_sums(
    values: &[Complex64],
    theta: Frequency,
    marks: &[usize],
) -> Result<Vec<Complex64>> {
    if let Some(&last) = marks.last() {
        if last > values.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix mark {last} exceeds path length {}",
                values.len()
            )));
        }
    }
    if marks.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("prefix marks must be nondecreasing".into()));
    }
    let mut out = Vec::with_capacity(marks.len());
    let mut rotor = Rotor::new(theta);
    let mut acc = KahanComplex::new();
    let mut next_mark = 0usize;
    for (k, x) in values.iter().enumerate() {
        while next_mark < marks.len() && marks[next_mark] == k {
            out.push(acc.value());
            next_mark += 1;
        }
        acc.add(rotor.current() * x);
        rotor.advance();
    }
    while next_mark < marks.len() {
        out.push(acc.value());
        next_mark += 1;
    }
    Ok(out)
}

/// Evaluates `S_n`, `A_n`, and `I_n` for a sampled trajectory.
pub fn dft(traj: &Trajectory, theta: Frequency) -> Result<DftPoint> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("DFT of an empty path".into()));
    }
    let n = traj.len();
    let sum = rotated_prefix_sums(&traj.values, theta, &[n])?[0];
    Ok(DftPoint {
        n,
        theta: theta.radians(),
        sum,
        average: sum / n as f64,
        periodogram: sum.norm_sqr() / n as f64,
    })
}

/// The normalized partial-sum path `W_n(t) = S_{floor(n t)}(theta) / sqrt(n)`
/// sampled at the given times in `[0, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSample {
    /// Evaluation times.
    pub times: Vec<f64>,
    /// `W_n` at each time.
    pub values: Vec<Complex64>,
}

/// Evaluates the partial-sum path of a trajectory at nondecreasing times.
pub fn partial_sum_path(traj: &Trajectory, theta: Frequency, times: &[f64]) -> Result<PathSample> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("path of an empty trajectory".into()));
    }
    if times.is_empty() {
        return Err(Error::InvalidArgument("no evaluation times given".into()));
    }
    for t in times {
        if !(0.0..=1.0).contains(t) {
            return Err(Error::InvalidArgument(format!("time {t} outside [0, 1]")));
        }
    }
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("times must be nondecreasing".into()));
    }
    let n = traj.len();
    let marks: Vec<usize> = times.iter().map(|t| (n as f64 * t).floor() as usize).collect();
    let sums = rotated_prefix_sums(&traj.values, theta, &marks)?;
    let scale = 1.0 / (n as f64).sqrt();
    Ok(PathSample {
        times: times.to_vec(),
        values: sums.into_iter().map(|s| s * scale).collect(),
    })
}

/// A two-sided covariance sequence `c_{-N} ... c_N`, hermitian in the sense
/// `c_{-k} = conj(c_k)`.
#[derive(Debug, Clone)]
pub struct CovSeq {
    values: Vec<Complex64>,
    max_lag: usize,
}

impl CovSeq {
    /// Wraps a two-sided sequence given as `2N+1` values in lag order
    /// `-N ... N`. Hermitian symmetry is enforced.
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.len() % 2 != 1 {
            return Err(Error::InvalidArgument(format!(
                "two-sided sequence needs odd length, got {}",
                values.len()
            )));
        }
        let max_lag = values.len() / 2;
        for k in 0..=max_lag {
            let pos = values[max_lag + k];
            let neg = values[max_lag - k];
            if (neg - pos.conj()).norm() > tolerances::HERMITIAN_TOL {
                return Err(Error::InvalidArgument(format!(
                    "sequence is not hermitian at lag {k}: c_-k = {neg}, conj(c_k) = {}",
                    pos.conj()
                )));
            }
        }
        Ok(CovSeq { values, max_lag })
    }

    /// Builds the two-sided sequence of exact model autocovariances up to
    /// `max_lag`.
    pub fn from_model(model: &crate::models::ProcessModel, max_lag: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(2 * max_lag + 1);
        for k in -(max_lag as i64)..=(max_lag as i64) {
            values.push(crate::models::exact_autocov(model, k)?);
        }
        CovSeq::new(values)
    }

    /// Largest stored lag.
    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    /// `c_k`, zero beyond the stored range.
    pub fn c(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.max_lag {
            Complex64::new(0.0, 0.0)
        } else {
            self.values[(k + self.max_lag as i64) as usize]
        }
    }
}

/// Cesaro average of the partial spectral sums of `c` at `theta`:
///
/// `(1/n) sum_{j<n} sum_{|k|<=j} c_k e^{i k theta}
///      = sum_{|h|<n} (1 - |h|/n) c_h e^{i h theta}`.
///
/// The order may not exceed the available lags (`n <= max_lag + 1`). Both
/// routes are evaluated and must agree to the dual-route tolerance; the
/// triangular-weight value is returned.
pub fn fejer_cesaro(c: &CovSeq, theta: Frequency, n: usize) -> Result<Complex64> {
    if n == 0 {
        return Err(Error::InvalidArgument("Cesaro average needs n >= 1".into()));
    }
    if n > c.max_lag() + 1 {
        return Err(Error::InvalidArgument(format!(
            "Cesaro order {n} exceeds the available coefficients (max lag {})",
            c.max_lag()
        )));
    }
    let th = theta.radians();
    let phase = |k: i64| -> Complex64 {
        let (s, co) = (k as f64 * th).sin_cos();
        Complex64::new(co, s)
    };

    let mut triangular = KahanComplex::new();
    let reach = n as i64 - 1;
    for h in -reach..=reach {
        let w = 1.0 - (h.unsigned_abs() as f64) / (n as f64);
        triangular.add(w * c.c(h) * phase(h));
    }

    let mut average = KahanComplex::new();
    for j in 0..n as i64 {
        let mut partial = KahanComplex::new();
        for k in -j..=j {
            partial.add(c.c(k) * phase(k));
        }
        average.add(partial.value());
    }
    let averaged = average.value() / n as f64;

    let gap = (triangular.value() - averaged).norm();
    assert!(
        gap <= tolerances::DUAL_ROUTE_TOL,
        "Cesaro routes disagree by {gap:.3e} at n = {n}, theta = {th}"
    );
    Ok(triangular.value())
}

/// Comparison of the maximal rotated partial sum of a coefficient vector
/// against its energy. The Hunt-Young maximal inequality bounds the
/// normalized-Lebesgue integral of `sup_r |sum_{j<r} a_j e^{i j theta}|^2`
/// by a universal constant times `sum_j a_j^2`; this reports the observed
/// ratio with the sup truncated at a finite order.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HuntYoungReport {
    /// Trapezoidal grid integral, against normalized Lebesgue measure, of
    /// the squared maximal partial sum.
    pub lhs: f64,
    /// Coefficient energy `sum_j a_j^2`.
    pub rhs: f64,
    /// `lhs / rhs`, the empirical stand-in for the inequality constant.
    pub ratio: f64,
    /// Truncation order of the inner sup.
    pub max_order: usize,
}

/// Endpoint-inclusive uniform grid over `[0, 2 pi]` with `panels` trapezoid
/// panels (so `panels + 1` nodes).
pub fn circle_grid(panels: usize) -> Vec<f64> {
    (0..=panels)
        .map(|g| std::f64::consts::TAU * g as f64 / panels as f64)
        .collect()
}

/// Evaluates [`HuntYoungReport`] on an explicit strictly increasing frequency
/// grid (radians). Pass a grid spanning `[0, 2 pi]`, such as [`circle_grid`],
/// to integrate over the whole circle; the inner sup runs over partial-sum
/// orders `1..=max_order`.
pub fn hunt_young_stat(
    coeffs: &[f64],
    theta_grid: &[f64],
    max_order: usize,
) -> Result<HuntYoungReport> {
    if coeffs.is_empty() {
        return Err(Error::InvalidArgument("empty coefficient vector".into()));
    }
    if max_order == 0 {
        return Err(Error::InvalidArgument("sup truncation order must be >= 1".into()));
    }
    if theta_grid.len() < 2 {
        return Err(Error::InvalidArgument("frequency grid needs at least two points".into()));
    }
    if theta_grid.iter().any(|t| !t.is_finite()) || theta_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "frequency grid must be finite and strictly increasing".into(),
        ));
    }
    let rhs: f64 = coeffs.iter().map(|a| a * a).sum();
    if rhs == 0.0 {
        return Err(Error::DegenerateTarget("zero coefficient energy".into()));
    }
    let reach = max_order.min(coeffs.len());
    let sup_at = |th: f64| -> f64 {
        let mut acc = KahanComplex::new();
        let mut best = 0.0f64;
        for (j, a) in coeffs.iter().take(reach).enumerate() {
            let (s, co) = (j as f64 * th).sin_cos();
            acc.add(Complex64::new(co, s) * *a);
            best = best.max(acc.value().norm_sqr());
        }
        best
    };
    let sups: Vec<f64> = theta_grid.iter().map(|&t| sup_at(t)).collect();
    let mut integral = 0.0;
    for (w, g) in theta_grid.windows(2).zip(sups.windows(2)) {
        integral += (w[1] - w[0]) * (g[0] + g[1]) / 2.0;
    }
    let lhs = integral / std::f64::consts::TAU;
    Ok(HuntYoungReport { lhs, rhs, ratio: lhs / rhs, max_order })
}
