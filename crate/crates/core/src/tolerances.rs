//! Centralized numeric tolerances and verdict thresholds.
//!
//! Every constant says what pins it. Statistical thresholds scale with the
//! replicate count and are computed by the helper functions; fixed constants
//! cover exact-identity checks where only float roundoff should appear.

/// Asymptotic two-sided 5% Kolmogorov quantile coefficient: the critical
/// distance is `1.358 / sqrt(reps)` for a fully specified continuous target.
pub const KS_5PCT_COEFF: f64 = 1.358;

/// Slack factor on the KS threshold absorbing the finite-`n` bias of a CLT
/// sample that is close to, but not exactly at, its Gaussian limit.
pub const KS_SLACK: f64 = 1.5;

/// Coefficient for the real/imaginary correlation check: sample correlations
/// of independent components fluctuate at scale `1/sqrt(reps)`, and 3.5
/// standard errors keeps the false-alarm rate comparable to the KS test's.
pub const CORR_COEFF: f64 = 3.5;

/// KS verdict threshold for `reps` replicates.
pub fn ks_threshold(reps: usize) -> f64 {
    KS_5PCT_COEFF * KS_SLACK / (reps as f64).sqrt()
}

/// Correlation verdict threshold for `reps` replicates.
pub fn corr_threshold(reps: usize) -> f64 {
    CORR_COEFF / (reps as f64).sqrt()
}

/// Two closed-form evaluation routes for the same quantity must agree to
/// this; anything larger than accumulated roundoff is a logic error.
pub const DUAL_ROUTE_TOL: f64 = 1e-12;

/// Agreement tolerance for conditional-expectation routes that sum over a
/// deep truncated past, where roundoff accumulates over ~1e5 terms.
pub const COND_EXP_ROUTES_TOL: f64 = 1e-9;

/// Default bound on the neglected tail mass when truncating an infinite
/// coefficient sequence.
pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-8;

/// Target tail size when truncating a Markov autocovariance series.
pub const MARKOV_DENSITY_TAIL: f64 = 1e-8;

/// Limit variances below this are treated as degenerate: standardizing a
/// desk-scale Monte Carlo sample by them is numerically meaningless.
pub const SIGMA2_FLOOR: f64 = 1e-8;

/// A conditional-mean sequence is called converged when its last three
/// recorded values agree pairwise to this.
pub const LIMIT_SHIFT_TOL: f64 = 1e-3;

/// A dependence-condition partial sum is called converged when the last ten
/// increments together contribute less than this.
pub const CONDITION_TAIL_TOL: f64 = 1e-6;

/// Markov kernel rows must sum to one within this.
pub const KERNEL_ROW_SUM_TOL: f64 = 1e-12;

/// Residual tolerance for the stationarity check `pi K = pi`.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

/// Tolerance for the zero-mean check on centered observables.
pub const CENTERED_MEAN_TOL: f64 = 1e-10;

/// A frequency `theta` is flagged for the `m`-cycle when `e^{2 i theta}` is
/// an eigenvalue of the rotation, i.e. `theta * m / pi` is an integer within
/// this.
pub const EIGEN_FREQ_TOL: f64 = 1e-9;

/// A dependence-condition partial sum above this cap, while its increments
/// are still growing, raises the divergence hint flag.
pub const DIVERGENCE_CAP: f64 = 1e4;

/// Hermitian-symmetry tolerance on user-supplied covariance sequences.
pub const HERMITIAN_TOL: f64 = 1e-12;
