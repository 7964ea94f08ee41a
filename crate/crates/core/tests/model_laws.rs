//! Distributional laws of the samplers: stationarity, the tower property of
//! conditional expectations, closed-form centering, and adaptedness.

use num_complex::Complex64;
use quench_dft_core::fourier::dft;
use quench_dft_core::models::{
    cond_exp_dft, exact_autocov, freeze_past, sample_path, sample_quenched_path, Frequency,
    FrozenPast, LinearAdaptedModel, MarkovFunctionalModel, ProcessModel,
};
use quench_dft_core::rng::{domains, stream};
use quench_dft_core::stats_kit::jackknife_stderr_mean;

fn two_tap() -> ProcessModel {
    ProcessModel::Linear(LinearAdaptedModel::from_coeffs(&[1.0, 0.5]).unwrap())
}

fn two_state() -> ProcessModel {
    ProcessModel::Markov(MarkovFunctionalModel {
        m: 2,
        kernel: vec![vec![0.7, 0.3], vec![0.2, 0.8]],
        stationary: vec![0.4, 0.6],
        observable: vec![1.2, -0.8],
        centered: true,
    })
}

/// Mean and jackknife standard error of per-path statistics.
fn mean_se(per_path: &[f64]) -> (f64, f64) {
    let mean = per_path.iter().sum::<f64>() / per_path.len() as f64;
    let se = jackknife_stderr_mean(per_path).unwrap();
    (mean, se)
}

/// Empirical autocovariance at `lag` from `paths` stationary paths, checked
/// against the closed form within four standard errors.
fn check_stationarity(model: &ProcessModel, lag: usize, paths: usize, len: usize, master: u64) {
    let per_path: Vec<f64> = (0..paths)
        .map(|rep| {
            let mut s = stream(master, domains::SIMULATE, rep as u64);
            let traj = sample_path(model, len, &mut s).unwrap();
            let pairs = len - lag;
            (0..pairs)
                .map(|k| (traj.values[k].conj() * traj.values[k + lag]).re)
                .sum::<f64>()
                / pairs as f64
        })
        .collect();
    let (mean, se) = mean_se(&per_path);
    let exact = exact_autocov(model, lag as i64).unwrap().re;
    assert!(
        (mean - exact).abs() <= 4.0 * se.max(1e-12),
        "lag {lag}: empirical {mean} vs exact {exact}, 4 se = {}",
        4.0 * se
    );
}

#[test]
fn linear_sampler_is_stationary_at_small_lags() {
    let model = two_tap();
    for lag in 0..3 {
        check_stationarity(&model, lag, 400, 252, 101);
    }
}

#[test]
fn markov_sampler_is_stationary_at_small_lags() {
    let model = two_state();
    for lag in 0..3 {
        check_stationarity(&model, lag, 400, 252, 103);
    }
}

#[test]
fn markov_state_frequencies_match_the_stationary_law() {
    let model = two_state();
    let draws = 10_000;
    let mut hits = [0usize; 2];
    for rep in 0..draws {
        let mut s = stream(7, domains::FREEZE_PAST, rep);
        match freeze_past(&model, &mut s).unwrap() {
            FrozenPast::Chain { state, .. } => hits[state] += 1,
            other => panic!("chain past expected, got {other:?}"),
        }
    }
    let freq0 = hits[0] as f64 / draws as f64;
    assert!(
        (freq0 - 0.4).abs() < 0.02,
        "state 0 frequency {freq0} strayed from the stationary weight 0.4"
    );
}

/// Averaging the conditional drift over fresh pasts recovers the
/// unconditional mean, which is zero for centered models.
fn check_tower_property(model: &ProcessModel, theta: f64, n: usize, pasts: usize, master: u64) {
    let th = Frequency::new(theta).unwrap();
    let re: Vec<f64> = (0..pasts)
        .map(|rep| {
            let mut s = stream(master, domains::FREEZE_PAST, rep as u64);
            let past = freeze_past(model, &mut s).unwrap();
            cond_exp_dft(model, &past, n, th).unwrap().re
        })
        .collect();
    let (mean, se) = mean_se(&re);
    assert!(
        mean.abs() <= 4.0 * se,
        "E E_0 S_n should vanish: mean {mean}, 4 se = {}",
        4.0 * se
    );
}

#[test]
fn conditional_drift_averages_to_the_unconditional_mean() {
    check_tower_property(&two_tap(), 0.9, 64, 1000, 211);
    check_tower_property(&two_state(), 0.9, 64, 1000, 223);
}

/// For one frozen past, the Monte Carlo mean of `S_n` must match the closed
/// form `E_0 S_n` within four standard errors.
fn check_centering(model: &ProcessModel, theta: f64, n: usize, reps: usize, master: u64) {
    let th = Frequency::new(theta).unwrap();
    let mut s = stream(master, domains::FREEZE_PAST, 0);
    let past = freeze_past(model, &mut s).unwrap();
    let center = cond_exp_dft(model, &past, n, th).unwrap();
    let re: Vec<f64> = (0..reps)
        .map(|rep| {
            let mut s = stream(master, domains::QUENCHED_PATH, rep as u64);
            let traj = sample_quenched_path(model, &past, n, &mut s).unwrap();
            dft(&traj, th).unwrap().sum.re
        })
        .collect();
    let (mean, se) = mean_se(&re);
    assert!(
        (mean - center.re).abs() <= 4.0 * se,
        "closed-form centering drifted: MC mean {mean} vs E_0 S_n = {}, 4 se = {}",
        center.re,
        4.0 * se
    );
}

#[test]
fn quenched_sample_mean_matches_the_closed_form_drift() {
    check_centering(&two_tap(), 1.1, 128, 3000, 307);
    check_centering(&two_state(), 1.1, 128, 3000, 311);
}

#[test]
fn time_zero_value_is_frozen_across_quenched_replicates() {
    for model in [two_tap(), two_state()] {
        let mut s = stream(5, domains::FREEZE_PAST, 0);
        let past = freeze_past(&model, &mut s).unwrap();
        let mut first: Option<Complex64> = None;
        for rep in 0..64 {
            let mut s = stream(5, domains::QUENCHED_PATH, rep);
            let traj = sample_quenched_path(&model, &past, 16, &mut s).unwrap();
            match first {
                None => first = Some(traj.values[0]),
                Some(x0) => assert_eq!(
                    traj.values[0], x0,
                    "X_0 must be measurable with respect to the frozen past"
                ),
            }
        }
    }
}

#[test]
fn cycle_autocovariance_is_exact_over_one_revolution() {
    use quench_dft_core::models::CycleRotationModel;
    let model = ProcessModel::Cycle(CycleRotationModel::roots_of_unity(4).unwrap());
    let mut s = stream(13, domains::FREEZE_PAST, 0);
    let past = freeze_past(&model, &mut s).unwrap();
    let mut t = stream(13, domains::QUENCHED_PATH, 0);
    let traj = sample_quenched_path(&model, &past, 8, &mut t).unwrap();
    for lag in 0..4usize {
        // Translation invariance on the cycle: one revolution averages to
        // gamma(lag) exactly, whatever the start.
        let mean = (0..4)
            .map(|k| traj.values[k].conj() * traj.values[k + lag])
            .sum::<Complex64>()
            / 4.0;
        let exact = exact_autocov(&model, lag as i64).unwrap();
        assert!(
            (mean - exact).norm() < 1e-12,
            "lag {lag}: cycle average {mean} vs exact {exact}"
        );
    }
}
