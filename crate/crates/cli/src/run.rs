//! Executes a validated config and shapes the two output files.
//!
//! Every command produces a CSV of raw, plot-ready rows and a JSON results
//! object holding each statistic, threshold, oracle value, and verdict.
//! Numeric text uses the shortest decimal that parses back to the same
//! float, with a dot separator regardless of locale: both the CSV writer
//! and the JSON serializer format through the same machinery.

use num_complex::Complex64;
use quench_dft_core::counterexample::{build_spec, default_theta_grid, divergence_probe, verify_block_inequality};
use quench_dft_core::fourier::{dft, rotated_prefix_sums, CovSeq};
use quench_dft_core::martingale::{
    approx_error, condition_hannan, condition_mw, condition_ratio, d_r0, ConditionReport, Verdict,
};
use quench_dft_core::models::{
    exact_autocov, freeze_past, sample_path, sample_quenched_path, cond_exp_dft, Frequency,
    FrozenPast, ProcessModel,
};
use quench_dft_core::quenched_lab::{averaged_frequency_run, run_clt, run_invariance, Mode};
use quench_dft_core::rng::{domains, stream};
use quench_dft_core::spectral::{density_cesaro, density_exact, sigma2_quenched};
use quench_dft_core::{Error, Result};
use serde_json::{json, Value};

use crate::config::{CommandConfig, CounterexampleConfig, ExperimentConfig};

/// Everything a finished run hands back to the writer.
pub struct RunOutput {
    /// CSV header line, without trailing newline.
    pub header: &'static str,
    /// CSV data lines, one per row.
    pub rows: Vec<String>,
    /// The summary's `results` object.
    pub results: Value,
    /// Overall verdict: `None` for purely informational commands.
    pub pass: Option<bool>,
}

/// Joins CSV fields that were already formatted.
fn row(fields: &[String]) -> String {
    fields.join(",")
}

/// Shortest round-trip decimal for a float; matches the JSON serializer.
fn num(x: f64) -> String {
    format!("{x}")
}

fn freq(theta: f64) -> Result<Frequency> {
    Frequency::new(theta)
}

/// The frozen past shared by every command that conditions on one. Drawn
/// from its own domain so adding replicates never shifts it.
fn shared_past(model: &ProcessModel, seed: u64) -> Result<FrozenPast> {
    let mut s = stream(seed, domains::FREEZE_PAST, 0);
    freeze_past(model, &mut s)
}

/// A spectral value that some models legitimately refuse.
fn optional_estimate(r: Result<quench_dft_core::spectral::SpectralEstimate>) -> Result<Value> {
    match r {
        Ok(est) => Ok(json!(est.estimate)),
        Err(Error::NotApplicable(_)) => Ok(Value::Null),
        Err(e) => Err(e),
    }
}

/// Runs one validated experiment.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = cfg.seed;
    match &cfg.command {
        CommandConfig::Simulate { n, mode } => {
            let model = cfg.model.as_ref().expect("validated");
            let traj = match mode {
                Mode::Annealed => {
                    let mut s = stream(seed, domains::SIMULATE, 0);
                    sample_path(model, *n, &mut s)?
                }
                Mode::Quenched => {
                    let past = shared_past(model, seed)?;
                    let mut s = stream(seed, domains::QUENCHED_PATH, 0);
                    sample_quenched_path(model, &past, *n, &mut s)?
                }
            };
            let rows = traj
                .values
                .iter()
                .enumerate()
                .map(|(t, x)| row(&[t.to_string(), num(x.re)]))
                .collect::<Vec<_>>();
            let mean = traj.values.iter().map(|x| x.re).sum::<f64>() / *n as f64;
            let mean_sq = traj.values.iter().map(|x| x.re * x.re).sum::<f64>() / *n as f64;
            Ok(RunOutput {
                header: "t,value",
                rows,
                results: json!({
                    "n": n,
                    "mode": mode,
                    "mean": mean,
                    "mean_sq": mean_sq,
                }),
                pass: None,
            })
        }
        CommandConfig::Dft { theta, n } => {
            let model = cfg.model.as_ref().expect("validated");
            let th = freq(*theta)?;
            let mut s = stream(seed, domains::SIMULATE, 0);
            let traj = sample_path(model, *n, &mut s)?;
            let marks: Vec<usize> = (1..=*n).collect();
            let prefixes = rotated_prefix_sums(&traj.values, th, &marks)?;
            let rows = prefixes
                .iter()
                .enumerate()
                .map(|(i, z)| row(&[(i + 1).to_string(), num(z.re), num(z.im)]))
                .collect::<Vec<_>>();
            let point = dft(&traj, th)?;
            Ok(RunOutput {
                header: "k,re,im",
                rows,
                results: json!({
                    "n": point.n,
                    "theta": point.theta,
                    "sum_re": point.sum.re,
                    "sum_im": point.sum.im,
                    "average_re": point.average.re,
                    "average_im": point.average.im,
                    "periodogram": point.periodogram,
                }),
                pass: None,
            })
        }
        CommandConfig::Spectral { theta, orders } => {
            let model = cfg.model.as_ref().expect("validated");
            let th = freq(*theta)?;
            let max_order = *orders.last().expect("validated nonempty");
            let max_lag = (max_order - 1) as i64;
            let vals = (-max_lag..=max_lag)
                .map(|lag| exact_autocov(model, lag))
                .collect::<Result<Vec<Complex64>>>()?;
            let gamma = CovSeq::new(vals)?;
            let estimates = orders
                .iter()
                .map(|&m| Ok(density_cesaro(&gamma, th, m)?.estimate))
                .collect::<Result<Vec<f64>>>()?;
            let rows = orders
                .iter()
                .zip(&estimates)
                .map(|(m, est)| row(&[m.to_string(), num(*est)]))
                .collect::<Vec<_>>();
            Ok(RunOutput {
                header: "order,estimate",
                rows,
                results: json!({
                    "theta": th.radians(),
                    "orders": orders,
                    "estimates": estimates,
                    "last": estimates.last(),
                    "density_exact": optional_estimate(density_exact(model, th))?,
                    "sigma2_quenched": optional_estimate(sigma2_quenched(model, th))?,
                }),
                pass: None,
            })
        }
        CommandConfig::QuenchedClt { theta, n, reps, mode, center } => {
            let model = cfg.model.as_ref().expect("validated");
            let th = freq(*theta)?;
            let past;
            let past_ref = match mode {
                Mode::Quenched => {
                    past = shared_past(model, seed)?;
                    Some(&past)
                }
                Mode::Annealed => None,
            };
            let (sample, report) = run_clt(model, th, *n, *reps, *mode, *center, past_ref, seed)?;
            let sigma2 = sigma2_quenched(model, th)?.estimate;
            let rows = sample
                .values
                .iter()
                .enumerate()
                .map(|(i, z)| row(&[i.to_string(), num(z.re), num(z.im)]))
                .collect::<Vec<_>>();
            let pass = report.pass;
            Ok(RunOutput {
                header: "replicate,re,im",
                rows,
                results: json!({
                    "sigma2_oracle": sigma2,
                    "mode": mode,
                    "center": center,
                    "n": n,
                    "reps": reps,
                    "theta": th.radians(),
                    "report": report,
                    "verdict": if pass { "pass" } else { "fail" },
                }),
                pass: Some(pass),
            })
        }
        CommandConfig::MartApprox { theta, r, n, reps } => {
            let model = cfg.model.as_ref().expect("validated");
            let th = freq(*theta)?;
            let past = shared_past(model, seed)?;
            let mut rows = Vec::with_capacity(*r + 1);
            let mut ladder = Vec::with_capacity(*r + 1);
            for order in 0..=*r {
                let approx = d_r0(model, order, th)?;
                let err = approx_error(model, &past, th, order, *n, *reps, seed)?;
                rows.push(row(&[
                    order.to_string(),
                    num(approx.norm_sq),
                    num(err.mean_sq),
                    num(err.stderr),
                ]));
                ladder.push(json!({
                    "r": order,
                    "norm_sq": approx.norm_sq,
                    "mean_sq": err.mean_sq,
                    "max_sq": err.max_sq,
                    "stderr": err.stderr,
                }));
            }
            Ok(RunOutput {
                header: "r,norm_sq,mean_sq,stderr",
                rows,
                results: json!({
                    "theta": th.radians(),
                    "n": n,
                    "reps": reps,
                    "density_exact": optional_estimate(density_exact(model, th))?,
                    "ladder": ladder,
                }),
                pass: None,
            })
        }
        CommandConfig::Invariance { theta, n, reps, times } => {
            let model = cfg.model.as_ref().expect("validated");
            let th = freq(*theta)?;
            let past = shared_past(model, seed)?;
            let (sample, report) = run_invariance(model, &past, th, *n, *reps, times, seed)?;
            let mut rows = Vec::with_capacity(reps * times.len());
            for (rep, increments) in sample.rows.iter().enumerate() {
                for (t, z) in sample.times.iter().zip(increments) {
                    rows.push(row(&[rep.to_string(), num(*t), num(z.re), num(z.im)]));
                }
            }
            let pass = report.pass;
            Ok(RunOutput {
                header: "replicate,time,re,im",
                rows,
                results: json!({
                    "theta": th.radians(),
                    "n": n,
                    "reps": reps,
                    "times": sample.times,
                    "marks": sample.marks,
                    "sigma2_oracle": sigma2_quenched(model, th)?.estimate,
                    "report": report,
                    "verdict": if pass { "pass" } else { "fail" },
                }),
                pass: Some(pass),
            })
        }
        CommandConfig::Averaged { n, reps } => {
            let model = cfg.model.as_ref().expect("validated");
            let past = shared_past(model, seed)?;
            let (sample, report) = averaged_frequency_run(model, &past, *n, *reps, seed)?;
            let rows = sample
                .values
                .iter()
                .enumerate()
                .map(|(i, z)| row(&[i.to_string(), num(z.re), num(z.im)]))
                .collect::<Vec<_>>();
            let pass = report.pass;
            Ok(RunOutput {
                header: "replicate,re,im",
                rows,
                results: json!({
                    "n": n,
                    "reps": reps,
                    "kept": sample.values.len(),
                    "dropped": reps - sample.values.len(),
                    "report": report,
                    "verdict": if pass { "pass" } else { "fail" },
                }),
                pass: Some(pass),
            })
        }
        CommandConfig::Conditions { theta, horizon } => {
            let model = cfg.model.as_ref().expect("validated");
            let th = freq(*theta)?;
            let past = shared_past(model, seed)?;
            let hannan = condition_hannan(model, *horizon)?;
            let mw = condition_mw(model, th, *horizon)?;
            let ratio = condition_ratio(model, &past, *horizon)?;
            let weak = hannan.weak_partial_sums.as_deref().unwrap_or(&[]);
            let mut rows = Vec::with_capacity(*horizon);
            for k in 1..=*horizon {
                rows.push(row(&[
                    k.to_string(),
                    num(hannan.partial_sums[k]),
                    weak.get(k).map(|v| num(*v)).unwrap_or_default(),
                    num(mw.partial_sums[k - 1]),
                    num(ratio.partial_sums[k - 1]),
                ]));
            }
            let pass = [&hannan, &mw, &ratio].iter().all(|r| r.verdict == Verdict::Converged);
            let condition_json = |r: &ConditionReport| {
                json!({
                    "verdict": r.verdict.to_string(),
                    "tail": r.tail,
                    "weak_tail": r.weak_tail,
                    "divergence_hint": r.divergence_hint,
                    "final_sum": r.partial_sums.last(),
                })
            };
            Ok(RunOutput {
                header: "k,hannan,weak_hannan,mw,ratio",
                rows,
                results: json!({
                    "theta": th.radians(),
                    "horizon": horizon,
                    "hannan": condition_json(&hannan),
                    "mw": condition_json(&mw),
                    "ratio": condition_json(&ratio),
                    "verdict": if pass { "pass" } else { "fail" },
                }),
                pass: Some(pass),
            })
        }
        CommandConfig::Counterexample { action } => execute_counterexample(action, seed),
    }
}

fn execute_counterexample(action: &CounterexampleConfig, seed: u64) -> Result<RunOutput> {
    match action {
        CounterexampleConfig::Build { levels, tau, reps, n_max, endpoints } => {
            let grid = default_theta_grid(*endpoints);
            let spec = build_spec(*levels, *tau, grid, *reps, *n_max, seed)?;
            let rows = spec
                .levels
                .iter()
                .zip(&spec.targets)
                .map(|(level, target)| {
                    row(&[
                        level.k.to_string(),
                        level.n_k.to_string(),
                        num(level.a_k_value),
                        num(level.gamma_k),
                        num(target.threshold),
                        num(target.probability),
                        num(target.achieved),
                    ])
                })
                .collect::<Vec<_>>();
            Ok(RunOutput {
                header: "k,n_k,a_k,gamma_k,threshold,target,achieved",
                rows,
                results: json!({
                    "levels": levels,
                    "tau": tau,
                    "reps": reps,
                    "n_max": n_max,
                    "spec": spec,
                }),
                pass: None,
            })
        }
        CounterexampleConfig::Probe { spec, theta, reps } => {
            let probes = divergence_probe(spec, *theta, *reps, seed)?;
            let mut all_pass = true;
            let mut level_objs = Vec::with_capacity(probes.len());
            let mut rows = Vec::with_capacity(probes.len());
            for probe in &probes {
                let target = 1.0 - 0.5f64.powi(probe.k as i32 + 1);
                let pass = probe.probability >= target - 3.0 * probe.stderr;
                all_pass &= pass;
                rows.push(row(&[
                    probe.k.to_string(),
                    num(probe.threshold),
                    num(probe.probability),
                    num(probe.stderr),
                    num(target),
                ]));
                level_objs.push(json!({
                    "k": probe.k,
                    "threshold": probe.threshold,
                    "probability": probe.probability,
                    "stderr": probe.stderr,
                    "target": target,
                    "pass": pass,
                }));
            }
            Ok(RunOutput {
                header: "k,threshold,probability,stderr,target",
                rows,
                results: json!({
                    "theta": theta,
                    "reps": reps,
                    "levels": level_objs,
                    "verdict": if all_pass { "pass" } else { "fail" },
                }),
                pass: Some(all_pass),
            })
        }
        CounterexampleConfig::Verify { spec, level, theta, reps } => {
            let report = verify_block_inequality(spec, *level, *theta, *reps, seed)?;
            let rows = vec![row(&[
                report.k.to_string(),
                num(report.p_lhs),
                num(report.p_main),
                num(report.p_residual),
                num(report.stderr_lhs),
                num(report.stderr_main),
                num(report.stderr_residual),
                num(report.slack),
            ])];
            let holds = report.holds;
            Ok(RunOutput {
                header: "k,p_lhs,p_main,p_residual,stderr_lhs,stderr_main,stderr_residual,slack",
                rows,
                results: json!({
                    "theta": theta,
                    "reps": reps,
                    "report": report,
                    "verdict": if holds { "pass" } else { "fail" },
                }),
                pass: Some(holds),
            })
        }
    }
}

/// Quenched drift at the output length, exposed for sanity checks in tests.
#[allow(dead_code)]
pub fn drift_at(model: &ProcessModel, past: &FrozenPast, n: usize, theta: f64) -> Result<Complex64> {
    cond_exp_dft(model, past, n, freq(theta)?)
}
