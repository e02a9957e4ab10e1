use nppq::inversion::{full_marginals, plan_scheme};
use nppq::simulator::{compare_marginals, simulate, Discipline, SimConfig, SimResult};
use nppq::{ModelParams, SchemeOptions};

const EVENTS: u64 = 10_000_000;

fn run(model: &ModelParams, seed: u64, discipline: Discipline) -> SimResult {
    let mut cfg = SimConfig::new(model.clone(), EVENTS / 100, EVENTS, seed);
    cfg.discipline = discipline;
    simulate(&cfg).unwrap()
}

fn analytic(model: &ModelParams, res: &SimResult) -> Vec<Vec<f64>> {
    let n_max = res.level_histograms.iter().map(Vec::len).max().unwrap() - 1;
    let scheme = plan_scheme(model, n_max.max(1), &SchemeOptions::default()).unwrap();
    full_marginals(model, &scheme, n_max.max(1)).unwrap()
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    0.5 * (0..len)
        .map(|n| (a.get(n).unwrap_or(&0.0) - b.get(n).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

#[test]
fn mm1_mean_queue_within_three_standard_errors() {
    let model = ModelParams::new(1, 1.0, vec![0.5]).unwrap();
    let res = run(&model, 3, Discipline::NonPreemptive);
    let err = (res.mean_queue[0] - 0.5).abs();
    assert!(
        err < 3.0 * res.mean_queue_std_error[0],
        "{} +- {}",
        res.mean_queue[0],
        res.mean_queue_std_error[0]
    );
}

#[test]
fn two_level_high_marginal_and_empty_fraction() {
    let model = ModelParams::from_fractions(0.6, &[1.0, 1.0], 1, 1.0).unwrap();
    let res = run(&model, 5, Discipline::NonPreemptive);
    let psi: Vec<f64> = (0..res.level_histograms[0].len())
        .map(|l| model.high_priority_marginal(l))
        .collect();
    assert!(tv(&res.level_histograms[0], &psi) < 5e-3);
    let p0 = model.erlang().p0;
    assert!(
        (res.empty_fraction - p0).abs() < 3.0 * res.empty_std_error,
        "{} vs {p0}",
        res.empty_fraction
    );
}

#[test]
fn three_levels_match_analytic_marginals() {
    let model = ModelParams::from_fractions(0.75, &[0.2, 0.3, 0.5], 1, 1.0).unwrap();
    let res = run(&model, 7, Discipline::NonPreemptive);
    for row in compare_marginals(&res, &analytic(&model, &res)).unwrap() {
        assert!(
            row.total_variation < 1e-2,
            "level {}: {}",
            row.level,
            row.total_variation
        );
    }
}

#[test]
fn preemption_changes_the_marginals() {
    let model = ModelParams::from_fractions(0.8, &[1.0, 1.0], 2, 1.0).unwrap();
    let res = run(&model, 11, Discipline::Preemptive);
    let rows = compare_marginals(&res, &analytic(&model, &res)).unwrap();
    // low priority absorbs the displaced work; sampling noise in TV is ~1e-3 here
    assert!(
        rows[1].total_variation > 1e-2,
        "low-priority TV {}",
        rows[1].total_variation
    );
    // under preemption the top level is an M/M/c queue on its own
    let alone = ModelParams::new(2, 1.0, vec![model.rate(0)]).unwrap();
    let psi: Vec<f64> = (0..res.level_histograms[0].len())
        .map(|l| alone.high_priority_marginal(l))
        .collect();
    assert!(tv(&res.level_histograms[0], &psi) < 5e-3);
    assert!(
        rows[0].total_variation > 5e-3,
        "high-priority TV {}",
        rows[0].total_variation
    );
}
