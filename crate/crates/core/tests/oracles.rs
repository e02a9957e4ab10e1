use nppq::diagnostics::{compare_pmfs, fft_reference};
use nppq::fpi::{run_fpi, FpiOptions};
use nppq::inversion::{full_marginals, invert_joint, lowest_marginal, plan_scheme};
use nppq::{JointPmf, MemoryLimit, ModelParams, PgfEvaluator, SchemeOptions};

fn fft(model: &ModelParams, n_max: usize) -> JointPmf {
    let scheme = plan_scheme(model, n_max, &SchemeOptions::default()).unwrap();
    invert_joint(
        &PgfEvaluator::new(model),
        &scheme,
        n_max,
        MemoryLimit::default(),
    )
    .unwrap()
}

fn mean(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(n, v)| n as f64 * v).sum()
}

/// Mean waiting-room occupancy per level from the classical non-preemptive
/// priority waiting times `W_k = W_0 / ((1 - s_{k-1})(1 - s_k))`, `W_0 = P_wait / (c mu)`.
fn cobham_means(model: &ModelParams) -> Vec<f64> {
    let p_wait = 1.0 - model.erlang().p_no_wait;
    let c_mu = model.servers() as f64 * model.mu();
    let w0 = p_wait / c_mu;
    let lambda = model.arrival_rates();
    let mut s_prev = 0.0;
    lambda
        .iter()
        .zip(model.rates())
        .map(|(l, r)| {
            let s = s_prev + r;
            let w = w0 / ((1.0 - s_prev) * (1.0 - s));
            s_prev = s;
            l * w
        })
        .collect()
}

#[test]
fn joint_means_match_classical_waiting_times() {
    let model = ModelParams::from_arrivals(&[0.3, 0.4, 0.5], 1.0, 2).unwrap();
    let full = fft(&model, 60).to_full().unwrap();
    for (k, expected) in cobham_means(&model).iter().enumerate() {
        let got = mean(&full.marginal(k));
        assert!(
            (got / expected - 1.0).abs() < 1e-9,
            "level {}: {got} vs {expected}",
            k + 1
        );
    }
}

#[test]
fn marginal_means_match_classical_waiting_times() {
    let model = ModelParams::from_arrivals(&[0.2, 0.1, 0.3, 0.2], 1.0, 1).unwrap();
    let scheme = plan_scheme(&model, 200, &SchemeOptions::default()).unwrap();
    let marginals = full_marginals(&model, &scheme, 200).unwrap();
    for (k, (m, expected)) in marginals.iter().zip(cobham_means(&model)).enumerate() {
        assert!(
            (mean(m) / expected - 1.0).abs() < 1e-8,
            "level {}: {} vs {expected}",
            k + 1,
            mean(m)
        );
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn highest_level_is_geometric_given_wait() {
    let model = ModelParams::from_fractions(0.7, &[0.3, 0.5, 0.2], 1, 1.0).unwrap();
    // lower axes long enough that their truncated tails are below round-off
    let pmf = fft(&model, 100);
    let r1 = model.rate(0);
    for (ell, p) in pmf.marginal(0).iter().enumerate().take(20) {
        let exact = (1.0 - r1) * r1.powi(ell as i32);
        assert!(
            (p / exact - 1.0).abs() < 1e-9,
            "ell = {ell}: {p:e} vs {exact:e}"
        );
    }
}

#[test]
fn lowest_marginal_matches_joint() {
    let model = ModelParams::from_fractions(0.5, &[1.0, 1.0, 2.0], 1, 1.0).unwrap();
    let pmf = fft(&model, 40);
    let scheme = plan_scheme(&model, 40, &SchemeOptions::default()).unwrap();
    let lo = lowest_marginal(&PgfEvaluator::new(&model), &scheme, 40).unwrap();
    for (n, (a, b)) in pmf.marginal(2).iter().zip(&lo).enumerate().take(25) {
        assert!((a - b).abs() < 1e-12 + 1e-9 * b, "n = {n}: {a:e} vs {b:e}");
    }
}

#[test]
fn fpi_agrees_with_fft_at_low_load() {
    let model = ModelParams::from_fractions(0.3, &[1.0, 2.0], 1, 1.0).unwrap();
    let run = run_fpi(
        &model,
        30,
        &FpiOptions {
            tolerance: 1e-12,
            ..Default::default()
        },
    )
    .unwrap();
    let reference = fft_reference(
        &model,
        30,
        &SchemeOptions::default(),
        MemoryLimit::default(),
    )
    .unwrap();
    let report = compare_pmfs(&reference, &run.pmf, 1e-10, None).unwrap();
    assert!(report.xi > 4.0, "xi_fpi = {}", report.xi);
}

#[test]
fn fpi_single_level_is_geometric() {
    let model = ModelParams::new(1, 1.0, vec![0.4]).unwrap();
    let run = run_fpi(&model, 50, &FpiOptions::default()).unwrap();
    for (n, p) in run.pmf.values().iter().enumerate() {
        assert!((p - 0.6 * 0.4f64.powi(n as i32)).abs() < 1e-8, "n = {n}");
    }
    assert_eq!(run.pmf.values()[0], 0.6);
}

#[test]
fn multi_server_fpi_tracks_fft() {
    let model = ModelParams::from_arrivals(&[0.4, 0.6], 1.0, 3).unwrap();
    let run = run_fpi(
        &model,
        30,
        &FpiOptions {
            tolerance: 1e-12,
            ..Default::default()
        },
    )
    .unwrap();
    let reference = fft(&model, 30);
    let report = compare_pmfs(&reference, &run.pmf, 1e-10, None).unwrap();
    assert!(report.xi > 4.0, "xi_fpi = {}", report.xi);
}
