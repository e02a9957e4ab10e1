use nppq::inversion::{
    invert_joint, lowest_marginal, mixture_coefficients, plan_scheme, vandermonde_residuals,
};
use nppq::pgf::{quadratic_roots, two_level_zeta_plus};
use nppq::{
    full_pmf, JointPmf, MemoryLimit, ModelParams, PgfEvaluator, PmfKind, ProductForm,
    SchemeOptions, C64,
};
use proptest::prelude::*;

fn complex_in_disc(radius: f64) -> impl Strategy<Value = C64> {
    (0.0..radius, 0.0..std::f64::consts::TAU).prop_map(|(m, a)| C64::from_polar(m, a))
}

/// K levels with total intensity in (0.05, 0.95).
fn rates(levels: usize) -> impl Strategy<Value = Vec<f64>> {
    (0.05..0.95f64, prop::collection::vec(0.02..1.0f64, levels)).prop_map(|(r, w)| {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| r * x / s).collect()
    })
}

fn model(rates: Vec<f64>) -> ModelParams {
    ModelParams::new(1, 1.0, rates).unwrap()
}

fn close(a: C64, b: C64, rel: f64) -> bool {
    (a - b).norm() <= rel * a.norm().max(b.norm()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn zeta_quadratic_identities(rates in rates(4), z in prop::collection::vec(complex_in_disc(1.2), 3), kappa in 0usize..4) {
        let pgf = PgfEvaluator::new(&model(rates));
        let model = pgf.model().clone();
        let (plus, minus) = pgf.zeta_pm(&z, kappa).unwrap();
        let b = C64::new(1.0 + pgf.total(), 0.0) - pgf.beta(&z, kappa).unwrap();
        let sigma = model.sigma(4 - kappa);
        prop_assert!(close(plus + minus, b, 1e-13), "sum {} vs {}", plus + minus, b);
        prop_assert!(close(plus * minus, C64::new(sigma, 0.0), 1e-13), "product {} vs {}", plus * minus, sigma);
    }

    #[test]
    fn removable_singularity_identity(rates in rates(4), z in prop::collection::vec(complex_in_disc(1.2), 3), kappa in 1usize..4) {
        let pgf = PgfEvaluator::new(&model(rates));
        let zk = z[kappa - 1];
        let one = C64::new(1.0, 0.0);
        let (p0, m0) = pgf.zeta_pm(&z, kappa - 1).unwrap();
        let (p1, m1) = pgf.zeta_pm(&z, kappa).unwrap();
        let lhs = (one - zk * p0) * (one - zk * m0);
        let rhs = (one - zk * p1) * (one - zk * m1);
        prop_assert!(close(lhs, rhs, 1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn two_level_identity(r_hi in 0.01..0.6f64, r_lo in 0.01..0.39f64, z in complex_in_disc(1.2)) {
        let plus = two_level_zeta_plus(z, r_hi, r_lo);
        let (_, minus) = quadratic_roots(C64::new(1.0 + r_hi + r_lo, 0.0) - r_lo * z, r_hi);
        let lhs = (1.0 - plus) * (1.0 - minus);
        prop_assert!(close(lhs, r_lo * (z - 1.0), 1e-13), "{lhs}");
    }

    #[test]
    fn product_forms_agree(rates in rates(4), z in prop::collection::vec(complex_in_disc(1.0), 3)) {
        let pgf = PgfEvaluator::new(&model(rates));
        // keep away from the removable singularities of the plus form
        for kappa in 0..3 {
            let (p, _) = pgf.zeta_pm(&z, kappa + 1).unwrap();
            prop_assume!((C64::new(1.0, 0.0) - z[kappa] * p).norm() > 1e-3);
        }
        let plus = pgf.g0(&z, ProductForm::Plus).unwrap();
        let minus = pgf.g0(&z, ProductForm::Minus).unwrap();
        prop_assert!(close(plus, minus, 1e-12), "{plus} vs {minus}");
    }

    #[test]
    fn prefix_aggregation(rates in rates(5), head in prop::collection::vec(complex_in_disc(1.0), 4), kappa in 1usize..4) {
        // highest-side variables absent: z_j = 0 for j > K - 1 - kappa
        let full = PgfEvaluator::new(&model(rates.clone()));
        let keep = 4 - kappa;
        let mut z = head.clone();
        for v in z.iter_mut().skip(keep) {
            *v = C64::new(0.0, 0.0);
        }
        let mut merged = vec![rates[..=kappa].iter().sum::<f64>()];
        merged.extend_from_slice(&rates[kappa + 1..]);
        let reduced = PgfEvaluator::new(&model(merged));
        let a = full.g0(&z, ProductForm::Minus).unwrap();
        let b = reduced.g0(&head[..keep], ProductForm::Minus).unwrap();
        prop_assert!(close(a, b, 1e-12), "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mixture_coefficients_solve_vandermonde(m in 1usize..7, spread in 0.01..0.2f64, log_n in 4u32..9) {
        let n = 1usize << log_n;
        let radii: Vec<f64> = (0..m)
            .map(|i| if m == 1 { 0.9 } else { 0.9 * (1.0 - spread * i as f64 / (m - 1) as f64) })
            .collect();
        let f = mixture_coefficients(&radii, n).unwrap();
        // each weight carries an N-fold amplified rounding error of its radius ratios
        let size: f64 = f.iter().map(|x| x.abs()).sum();
        let bound = 4.0 * f64::EPSILON * (n * m) as f64 * size;
        let miss = (f.iter().sum::<f64>() - 1.0).abs();
        prop_assert!(miss < bound, "{miss:e} against {bound:e}");
        let (_, worst) = vandermonde_residuals(&radii, n, &f);
        prop_assert!(worst < 1e-10, "residual {worst:e}");
    }

    #[test]
    fn full_pmf_is_affine(values in prop::collection::vec(0.0..1.0f64, 27), p_nw_rate in 0.05..0.3f64) {
        let model = ModelParams::new(2, 1.0, vec![p_nw_rate, 0.2, 0.1]).unwrap();
        let wait = JointPmf::from_values(model.clone(), 3, values.clone(), PmfKind::WaitConditional).unwrap();
        let erlang = model.erlang();
        let full = full_pmf(&wait, &erlang).unwrap();
        let busy = 1.0 - erlang.p_no_wait;
        for (i, (&f, &w)) in full.values().iter().zip(&values).enumerate() {
            let expected = if i == 0 { busy * w + erlang.p_no_wait } else { busy * w };
            prop_assert_eq!(f, expected);
        }
    }
}

fn small_joint() -> JointPmf {
    let model = ModelParams::from_fractions(0.5, &[1.0, 1.0], 1, 1.0).unwrap();
    let scheme = plan_scheme(&model, 40, &SchemeOptions::default()).unwrap();
    invert_joint(
        &PgfEvaluator::new(&model),
        &scheme,
        40,
        MemoryLimit::default(),
    )
    .unwrap()
}

#[test]
fn shell_sums_are_geometric() {
    let pmf = small_joint();
    let r: f64 = 0.5;
    for (k, s) in pmf.shell_sums().iter().enumerate() {
        let exact = (1.0 - r) * r.powi(k as i32);
        assert!(
            (s - exact).abs() <= 1e-9 * exact,
            "k = {k}: {s:e} vs {exact:e}"
        );
    }
}

#[test]
fn exclusively_high_slice_is_geometric() {
    let pmf = small_joint();
    let pgf = PgfEvaluator::new(pmf.model());
    for (ell, p) in pmf.exclusively_high().iter().enumerate() {
        let exact = pgf.xhi_pmf(ell);
        if exact > 1e-20 {
            assert!(
                (p - exact).abs() < 1e-10 * exact + 1e-16,
                "ell = {ell}: {p:e} vs {exact:e}"
            );
        }
    }
}

#[test]
fn exclusively_low_slice_follows_lowest_marginal() {
    let pmf = small_joint();
    let pgf = PgfEvaluator::new(pmf.model());
    let scheme = plan_scheme(pmf.model(), 40, &SchemeOptions::default()).unwrap();
    let lo = lowest_marginal(&pgf, &scheme, 40).unwrap();
    for (n, p) in pmf.exclusively_low().iter().enumerate().skip(1) {
        if lo[n - 1] > 1e-6 {
            let predicted = pgf.xlo_pmf(n, &lo).unwrap();
            assert!(
                (p / predicted - 1.0).abs() < 1e-9,
                "n = {n}: {p:e} vs {predicted:e}"
            );
        }
    }
}

#[test]
fn equal_rates_relabel_to_the_same_solution() {
    // swapping two equal-rate levels leaves the rate vector, and hence the PMF, unchanged
    let a = ModelParams::from_fractions(0.6, &[2.0, 1.0, 1.0], 1, 1.0).unwrap();
    let b = ModelParams::from_arrivals(&[0.3, 0.15, 0.15], 1.0, 1).unwrap();
    let scheme = plan_scheme(&a, 20, &SchemeOptions::default()).unwrap();
    let pa = invert_joint(&PgfEvaluator::new(&a), &scheme, 20, MemoryLimit::default()).unwrap();
    let pb = invert_joint(&PgfEvaluator::new(&b), &scheme, 20, MemoryLimit::default()).unwrap();
    for (x, y) in pa.values().iter().zip(pb.values()) {
        assert!(
            (x - y).abs() <= 1e-12 * x.abs().max(1e-300),
            "{x:e} vs {y:e}"
        );
    }
    // priority breaks the symmetry between the two equal-rate axes
    assert!((pa.at(&[0, 1, 0]) - pa.at(&[0, 0, 1])).abs() > 1e-3);
}

#[test]
fn finite_differences_match_inversion() {
    let model = ModelParams::from_fractions(0.6, &[1.0, 2.0], 1, 1.0).unwrap();
    let pgf = PgfEvaluator::new(&model);
    let scheme = plan_scheme(&model, 30, &SchemeOptions::default()).unwrap();
    let pmf = invert_joint(&pgf, &scheme, 30, MemoryLimit::default()).unwrap();
    let g = |x: f64| pgf.g0(&[C64::new(x, 0.0)], ProductForm::Minus).unwrap().re;
    let h = 1e-3;
    // Richardson-extrapolated central differences around z = 0
    let d1 = |h: f64| (g(h) - g(-h)) / (2.0 * h);
    let d2 = |h: f64| (g(h) - 2.0 * g(0.0) + g(-h)) / (h * h);
    let coeffs = [
        g(0.0),
        (4.0 * d1(h / 2.0) - d1(h)) / 3.0,
        (4.0 * d2(h / 2.0) - d2(h)) / 6.0,
    ];
    for (n, c) in coeffs.iter().enumerate() {
        let inverted = pmf.at(&[0, n]);
        assert!(
            (inverted / c - 1.0).abs() < 1e-6,
            "n = {n}: {inverted:e} vs {c:e}"
        );
    }
}
