//! Statistical primitives with a bit-reproducible verdict path.
//!
//! Every function that feeds a pass/fail verdict avoids platform `libm`
//! transcendentals: the normal CDF is evaluated through an in-repo rational
//! approximation driven by an in-repo exponential, both pure IEEE f64
//! arithmetic. Identical inputs therefore give identical verdict bytes on
//! any host.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::tolerances;
use crate::{Error, Result};

/// One named sub-check inside a composite distributional test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentCheck {
    /// Human-readable component label (for example an increment interval).
    pub label: String,
    /// KS distance of that component against its standardized target.
    pub ks: f64,
    /// Whether the component stayed under the shared KS threshold.
    pub pass: bool,
}

/// Outcome of comparing a complex sample against a centered complex normal
/// with independent real and imaginary parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    /// KS distance of the real parts (worst component for multi-part tests).
    pub ks_re: f64,
    /// KS distance of the imaginary parts (worst component likewise).
    pub ks_im: f64,
    /// Pearson correlation between real and imaginary parts (largest
    /// magnitude over all checked pairs for multi-part tests).
    pub corr_re_im: f64,
    /// Threshold the KS distances were held to.
    pub ks_threshold: f64,
    /// Threshold the correlation magnitude was held to.
    pub corr_threshold: f64,
    /// Conjunction of every sub-check.
    pub pass: bool,
    /// Per-component breakdown when the test has more than one part.
    pub components: Vec<ComponentCheck>,
}

/// Two-sided Kolmogorov-Smirnov distance between `sample` and the continuous
/// CDF `cdf`: the larger of `|i/m - F(x_(i))|` and `|(i-1)/m - F(x_(i))|`
/// over the order statistics `x_(1) <= ... <= x_(m)`.
pub fn ks_stat<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("KS statistic of an empty sample".into()));
    }
    let mut sorted = sample.to_vec();
    for v in &sorted {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite sample value {v}")));
        }
    }
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut d = 0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        let above = ((i + 1) as f64 / m - f).abs();
        let below = (i as f64 / m - f).abs();
        d = d.max(above.max(below));
    }
    Ok(d)
}

/// Pearson correlation of two equal-length samples.
///
/// A component with zero sample variance carries no linear association to
/// measure; that case reports 0 and is left to the marginal checks.
pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "correlation of mismatched lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Order-statistic quantile: the `ceil(q * n)`-th smallest value, `q` in
/// `(0, 1]`.
pub fn empirical_quantile(sample: &[f64], q: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty sample".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level {q} outside (0, 1]")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Leave-one-out jackknife standard error of the sample mean.
pub fn jackknife_stderr_mean(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument("jackknife needs at least two points".into()));
    }
    let total: f64 = values.iter().sum();
    let loo: Vec<f64> = values.iter().map(|v| (total - v) / (n as f64 - 1.0)).collect();
    let loo_mean = loo.iter().sum::<f64>() / n as f64;
    let ss: f64 = loo.iter().map(|v| (v - loo_mean) * (v - loo_mean)).sum();
    Ok(((n as f64 - 1.0) / n as f64 * ss).sqrt())
}

/// Standard normal CDF, accurate to better than `1e-7` absolute error.
///
/// Hastings-type rational tail approximation; together with the in-repo
/// exponential this keeps the verdict path free of platform transcendentals.
pub fn normal_cdf(z: f64) -> f64 {
    const P: f64 = 0.231_641_9;
    const B1: f64 = 0.319_381_530;
    const B2: f64 = -0.356_563_782;
    const B3: f64 = 1.781_477_937;
    const B4: f64 = -1.821_255_978;
    const B5: f64 = 1.330_274_429;
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    if z == 0.0 {
        return 0.5;
    }
    let a = z.abs();
    let t = 1.0 / (1.0 + P * a);
    let poly = t * (B1 + t * (B2 + t * (B3 + t * (B4 + t * B5))));
    let tail = INV_SQRT_2PI * exp_f64(-0.5 * a * a) * poly;
    if z >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Standard normal quantile by bisection on [`normal_cdf`]; inherits its
/// determinism and is accurate to ~1e-9 in probability.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level {p} outside (0, 1)")));
    }
    let mut lo = -10.0f64;
    let mut hi = 10.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Deterministic `exp` for f64: Cody-Waite range reduction against two-part
/// `ln 2`, a degree-13 Taylor kernel on `|r| <= ln(2)/2`, and an exact
/// power-of-two rescale. Relative error stays below a few ulp.
pub(crate) fn exp_f64(x: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    const INV_LN2: f64 = 1.442_695_040_888_963_4;
    // 1/j! for j = 13 down to 0.
    const INV_FACT_DESC: [f64; 14] = [
        1.0 / 6_227_020_800.0,
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ];

    if x.is_nan() {
        return f64::NAN;
    }
    if x > 709.782_712_893_384 {
        return f64::INFINITY;
    }
    if x < -745.133_219_101_941_2 {
        return 0.0;
    }
    let k = (x * INV_LN2).round();
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut poly = INV_FACT_DESC[0];
    for c in &INV_FACT_DESC[1..] {
        poly = poly * r + c;
    }
    scale_pow2(poly, k as i64)
}

/// Multiplies by `2^k`, splitting the scale so subnormal and near-overflow
/// exponents stay representable.
fn scale_pow2(v: f64, k: i64) -> f64 {
    fn pow2(k: i64) -> f64 {
        debug_assert!((-1022..=1023).contains(&k));
        f64::from_bits(((k + 1023) as u64) << 52)
    }
    if (-1022..=1023).contains(&k) {
        v * pow2(k)
    } else if k > 1023 {
        v * pow2(1023) * pow2((k - 1023).min(1023))
    } else {
        v * pow2(-1022) * pow2((k + 1022).max(-1022))
    }
}

/// Checks a complex sample against the centered complex normal with total
/// variance `sigma2` split evenly between independent real and imaginary
/// parts. Thresholds are the crate defaults for the sample size.
pub fn complex_normal_report(sample: &[Complex64], sigma2: f64) -> Result<TestReport> {
    let ks_threshold = tolerances::ks_threshold(sample.len());
    let corr_threshold = tolerances::corr_threshold(sample.len());
    complex_normal_report_with(sample, sigma2, ks_threshold, corr_threshold)
}

/// [`complex_normal_report`] with caller-pinned thresholds.
pub fn complex_normal_report_with(
    sample: &[Complex64],
    sigma2: f64,
    ks_threshold: f64,
    corr_threshold: f64,
) -> Result<TestReport> {
    if sigma2 <= tolerances::SIGMA2_FLOOR {
        return Err(Error::DegenerateTarget(format!(
            "limit variance {sigma2:.3e} is at or below the floor {:.1e}",
            tolerances::SIGMA2_FLOOR
        )));
    }
    let sd = (sigma2 / 2.0).sqrt();
    let re: Vec<f64> = sample.iter().map(|z| z.re).collect();
    let im: Vec<f64> = sample.iter().map(|z| z.im).collect();
    let ks_re = ks_stat(&re, |x| normal_cdf(x / sd))?;
    let ks_im = ks_stat(&im, |x| normal_cdf(x / sd))?;
    let corr = pearson_corr(&re, &im)?;
    let pass = ks_re <= ks_threshold && ks_im <= ks_threshold && corr.abs() <= corr_threshold;
    Ok(TestReport {
        ks_re,
        ks_im,
        corr_re_im: corr,
        ks_threshold,
        corr_threshold,
        pass,
        components: Vec::new(),
    })
}
