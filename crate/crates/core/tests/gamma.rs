use mvpoincare::gamma::*;
use mvpoincare::model::{CarrierSpace, Deterministic, Scaled};
use mvpoincare::sampler::RngStream;
use mvpoincare::zoo::{CompoundSumModel, CountModel, IsolatedCountModel, Kernel, PairCountModel, WienerItoModel};
use mvpoincare::{Mat, PoissonSpace};
use proptest::prelude::*;
use rand::Rng;

fn plan(n_outer: usize, n_inner: usize, seed: u64) -> NestedMcPlan {
    NestedMcPlan::new(n_outer, n_inner, seed).unwrap()
}

fn within(t: &GammaTerm, truth: f64, k: f64) -> bool {
    (t.value - truth).abs() <= k * t.std_error + 1e-9 * truth.abs().max(1.0)
}

/// E N^k for N ~ Poisson(mu), k <= 6, via Stirling numbers of the second kind.
fn poisson_moment(mu: f64, k: usize) -> f64 {
    let s: &[f64] = match k {
        1 => &[1.0],
        2 => &[1.0, 1.0],
        3 => &[1.0, 3.0, 1.0],
        4 => &[1.0, 7.0, 6.0, 1.0],
        6 => &[1.0, 31.0, 90.0, 65.0, 15.0, 1.0],
        _ => unreachable!(),
    };
    s.iter().enumerate().map(|(j, c)| c * mu.powi(j as i32 + 1)).sum()
}

/// |[x - r, x + r] cap [0, 1]|
fn ball_len(x: f64, r: f64) -> f64 {
    (x + r).min(1.0) - (x - r).max(0.0)
}

fn overlap(x: f64, y: f64, r: f64) -> f64 {
    ((x.min(y) + r).min(1.0) - (x.max(y) - r).max(0.0)).max(0.0)
}

/// E[(A + C)^2 (B + C)^2] for independent Poisson A, B, C.
fn mixed_fourth(a: f64, b: f64, c: f64) -> f64 {
    let mut p = (-c).exp();
    let mut acc = 0.0;
    let top = (c + 12.0 * c.sqrt() + 30.0) as usize;
    for k in 0..=top {
        let kf = k as f64;
        acc += p * (a + a * a + 2.0 * a * kf + kf * kf) * (b + b * b + 2.0 * b * kf + kf * kf);
        p *= c / (kf + 1.0);
    }
    acc
}

#[test]
fn first_order_integral_closed_forms() {
    let f = WienerItoModel::unit_constant(1, 100.0);
    let sp = f.space();
    let p = plan(400, 200, 11);
    let (g1, g2) = estimate_gamma1_gamma2(&f, &sp, &p).unwrap();
    assert_eq!(g1.value, 0.0);
    assert_eq!(g2.value, 0.0);
    let g3 = estimate_gamma3(&f, &sp, &p).unwrap();
    let g4 = estimate_gamma4(&f, &sp, &p).unwrap();
    let g5 = estimate_gamma5(&f, &sp, &p).unwrap();
    assert!(within(&g3, 0.1, 3.0), "{g3:?}");
    assert!(within(&g4, 0.1, 3.0), "{g4:?}");
    assert!(within(&g5, 0.01, 3.0), "{g5:?}");
}

#[test]
fn deterministic_functional_has_zero_gammas() {
    let f = Deterministic { value: vec![1.5, -2.0] };
    let sp = PoissonSpace::unmarked(CarrierSpace::unit_cube(1, 30.0));
    let p = plan(50, 10, 2);
    let (g1, g2) = estimate_gamma1_gamma2(&f, &sp, &p).unwrap();
    for t in [g1, g2, estimate_gamma3(&f, &sp, &p).unwrap(), estimate_gamma4(&f, &sp, &p).unwrap(), estimate_gamma5(&f, &sp, &p).unwrap()] {
        assert_eq!(t.value, 0.0, "{}", t.name);
        assert_eq!(t.jackknife, 0.0);
    }
}

#[test]
fn compound_rademacher_third_moment_term() {
    let f = CompoundSumModel::rademacher(1, 25.0);
    let t = estimate_gamma3(&f, &f.space(), &plan(200, 5, 3)).unwrap();
    assert!((t.value - 0.2).abs() < 1e-9, "{t:?}");
}

#[test]
fn compound_uniform_fourth_moment_term() {
    let (a, s) = (1.5, 40.0);
    let f = CompoundSumModel::uniform(1, s, a);
    let t = estimate_gamma4(&f, &f.space(), &plan(4000, 4, 4)).unwrap();
    // D = X / sqrt(s), so gamma4^2 = s E X^4 / s^2 with E X^4 = a^4 / 5.
    let truth = a * a / (5.0 * s).sqrt();
    assert!(within(&t, truth, 3.0), "{t:?} vs {truth}");
}

#[test]
fn pair_count_without_interactions_is_zero() {
    let f = PairCountModel::new(20.0, 2, 1e-9).unwrap();
    let (g1, g2) = estimate_gamma1_gamma2(&f, &f.space, &plan(100, 20, 5)).unwrap();
    assert_eq!(g1.value, 0.0);
    assert_eq!(g2.value, 0.0);
}

#[test]
fn pair_count_second_order_terms_match_oracle() {
    let (s, r) = (50.0, 0.2);
    let f = PairCountModel::new(s, 1, r).unwrap();
    let (g1, g2) = estimate_gamma1_gamma2(&f, &f.space, &plan(3000, 200, 6)).unwrap();

    // gamma2^2 = s^3 int |B_x|^2 dx = s^3 (4 r^2 - 10 r^3 / 3).
    let g2_truth = (s.powi(3) * (4.0 * r * r - 10.0 * r.powi(3) / 3.0)).sqrt();
    assert!(within(&g2, g2_truth, 3.0), "{g2:?} vs {g2_truth}");

    // gamma1^2 = s^3 E[1{|x1-x3|<=r, |x2-x3|<=r} sqrt(E N1^2 N2^2)], exact
    // inner values, outer expectation by plain MC.
    let mut rng = RngStream::new(99, 0).rng();
    let n = 400_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let (x1, x2, x3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        if (x1 - x3).abs() <= r && (x2 - x3).abs() <= r {
            let c = s * overlap(x1, x2, r);
            let a = s * ball_len(x1, r) - c;
            let b = s * ball_len(x2, r) - c;
            acc += mixed_fourth(a, b, c).sqrt();
        }
    }
    let g1_truth = (s.powi(3) * acc / n as f64).sqrt();
    // The oracle carries about 0.3% MC error of its own.
    let tol = 3.0 * g1.std_error + 0.01 * g1_truth;
    assert!((g1.value - g1_truth).abs() <= tol, "{g1:?} vs {g1_truth}");
}

#[test]
fn pair_count_higher_terms_match_oracle() {
    let (s, r) = (30.0, 0.15);
    let f = PairCountModel::new(s, 1, r).unwrap();
    let p = plan(3000, 300, 7);
    let g4 = estimate_gamma4(&f, &f.space, &p).unwrap();
    let g5 = estimate_gamma5(&f, &f.space, &p).unwrap();
    let mut rng = RngStream::new(98, 0).rng();
    let n = 400_000;
    let (mut a4, mut a5) = (0.0, 0.0);
    for _ in 0..n {
        let (x, y): (f64, f64) = (rng.random(), rng.random());
        let mu = s * ball_len(x, r);
        let (m4, m6) = (poisson_moment(mu, 4), poisson_moment(mu, 6));
        let hit = if (x - y).abs() <= r { 1.0 } else { 0.0 };
        a4 += s * m4 + s * s * hit * (6.0 * m4.sqrt() + 3.0);
        a5 += s * m6 + s * s * hit * (8.0 * m6 + 42.0 * m6.powf(2.0 / 3.0) + 42.0 * m6.cbrt() + 14.0);
    }
    let t4 = (a4 / n as f64).sqrt();
    let t5 = (a5 / n as f64).sqrt();
    assert!((g4.value - t4).abs() <= 3.0 * g4.std_error + 0.01 * t4, "{g4:?} vs {t4}");
    assert!((g5.value - t5).abs() <= 3.0 * g5.std_error + 0.01 * t5, "{g5:?} vs {t5}");
}

#[test]
fn covariance_of_standardized_counts() {
    let sp = PoissonSpace::unmarked(CarrierSpace::unit_cube(2, 80.0));
    let f = CountModel::standardized(sp.clone());
    let c = estimate_covariance(&f, &sp, 20_000, 8).unwrap();
    assert!((c.matrix[(0, 0)] - 1.0).abs() <= 3.0 * c.std_errors[(0, 0)], "{c:?}");
    let one = Mat::identity(1);
    let d = covariance_discrepancy(&one, &c).unwrap();
    assert!(d.value <= 3.0 * d.std_error);
}

#[test]
fn covariance_of_first_order_integrals() {
    let s = 64.0;
    let f = WienerItoModel::new(
        vec![Kernel::constant(1.0), Kernel::cosine(2.0)],
        CarrierSpace::unit_cube(1, s),
        1.0 / s.sqrt(),
    )
    .unwrap();
    let c = estimate_covariance(&f, &f.space(), 20_000, 9).unwrap();
    assert!((c.matrix[(0, 0)] - 1.0).abs() <= 3.0 * c.std_errors[(0, 0)]);
    assert!((c.matrix[(1, 1)] - 0.5).abs() <= 3.0 * c.std_errors[(1, 1)]);
    assert!(c.matrix[(0, 1)].abs() <= 3.0 * c.std_errors[(0, 1)]);
    assert_eq!(c.matrix[(0, 1)], c.matrix[(1, 0)]);
}

#[test]
fn covariance_rejects_tiny_samples() {
    assert!(covariance_from_rows(&[vec![1.0], vec![2.0]], 0).is_err());
}

#[test]
fn doubling_outer_sample_shrinks_error() {
    let f = PairCountModel::new(20.0, 1, 0.1).unwrap();
    let a = estimate_gamma3(&f, &f.space, &plan(1000, 20, 10)).unwrap();
    let b = estimate_gamma3(&f, &f.space, &plan(2000, 20, 10)).unwrap();
    let ratio = a.std_error / b.std_error;
    assert!((0.5..=2.0).contains(&(ratio / 2f64.sqrt())), "ratio {ratio}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let f = PairCountModel::new(20.0, 1, 0.1).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| estimate_gamma1_gamma2(&f, &f.space, &plan(64, 16, 12)).unwrap())
    };
    let (a1, a2) = run(1);
    let (b1, b2) = run(3);
    assert_eq!(a1, b1);
    assert_eq!(a2, b2);
}

#[test]
fn csv_has_expected_header_and_rows() {
    let r = GammaReport::from_values([0.0, 0.0, 0.1, 0.1, 0.01], 0.0, 1);
    let csv = r.to_csv();
    assert!(csv.starts_with("term,value,std_error,n_outer,n_inner,seed\n"));
    assert!(csv.contains("\ngamma3,0.1,"));
    assert!(csv.contains("\ncov_discrepancy,0.0,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Powers of two scale every difference exactly, so the estimates scale
    /// exactly as well (up to the cube roots in gamma5).
    #[test]
    fn scaling_by_power_of_two(k in -2i32..=2, neg in any::<bool>(), seed in 0u64..1000) {
        let c = if neg { -(2f64.powi(k)) } else { 2f64.powi(k) };
        let base = PairCountModel::new(15.0, 1, 0.15).unwrap();
        let sp = base.space.clone();
        let scaled = Scaled { inner: base.clone(), factor: c };
        let p = plan(24, 8, seed);
        let (b1, b2) = estimate_gamma1_gamma2(&base, &sp, &p).unwrap();
        let (s1, s2) = estimate_gamma1_gamma2(&scaled, &sp, &p).unwrap();
        prop_assert_eq!(s1.value, c * c * b1.value);
        prop_assert_eq!(s2.value, c * c * b2.value);
        prop_assert_eq!(estimate_gamma3(&scaled, &sp, &p).unwrap().value, c.abs().powi(3) * estimate_gamma3(&base, &sp, &p).unwrap().value);
        prop_assert_eq!(estimate_gamma4(&scaled, &sp, &p).unwrap().value, c * c * estimate_gamma4(&base, &sp, &p).unwrap().value);
        // Cube roots inside gamma5 round differently after scaling.
        let g5 = estimate_gamma5(&base, &sp, &p).unwrap().value;
        let s5 = estimate_gamma5(&scaled, &sp, &p).unwrap().value;
        prop_assert!((s5 - c.abs().powi(3) * g5).abs() <= 1e-12 * s5);
    }

    #[test]
    fn gammas_are_nonnegative(s in 5.0f64..40.0, r in 0.01f64..0.4, seed in 0u64..1000) {
        let f = PairCountModel::new(s, 1, r).unwrap();
        let p = plan(16, 4, seed);
        let (g1, g2) = estimate_gamma1_gamma2(&f, &f.space, &p).unwrap();
        for t in [g1, g2, estimate_gamma4(&f, &f.space, &p).unwrap(), estimate_gamma5(&f, &f.space, &p).unwrap()] {
            prop_assert!(t.value >= 0.0 && t.jackknife >= 0.0 && t.std_error >= 0.0);
            prop_assert!(!t.unstable);
        }
    }
}

#[test]
fn marked_terms_vanish_without_differences() {
    let f = Deterministic { value: vec![0.3] };
    let sp = CompoundSumModel::rademacher(1, 10.0).space();
    let r = estimate_big_gammas(&f, &sp, 1.0, 3.0, &plan(40, 10, 13)).unwrap();
    for t in r.terms() {
        assert_eq!(t.value, 0.0, "{}", t.name);
    }
}

#[test]
fn marked_gamma2_equals_total_mass_when_differences_never_vanish() {
    let f = CompoundSumModel::rademacher(1, 37.0);
    let t = estimate_big_gamma(2, &f, &f.space(), 1.0, 1.0, &plan(30, 10, 14)).unwrap();
    assert_eq!(t.value, 37.0);
    assert_eq!(t.std_error, 0.0);
    let sp = PoissonSpace::unmarked(CarrierSpace::unit_cube(2, 12.5));
    let count = CountModel::standardized(sp.clone());
    let t = estimate_big_gamma(2, &count, &sp, 1.0, 5.0, &plan(30, 10, 15)).unwrap();
    assert_eq!(t.value, 12.5);
}

#[test]
fn marked_gamma4_requires_p_above_two() {
    let f = CompoundSumModel::rademacher(1, 10.0);
    let p = plan(10, 4, 16);
    for bad in [0.5, 2.0] {
        let e = estimate_big_gamma(4, &f, &f.space(), 1.0, bad, &p).unwrap_err();
        assert!(e.to_string().contains("p > 2"), "{e}");
        assert!(estimate_big_gammas(&f, &f.space(), 1.0, bad, &p).is_err());
    }
    assert!(estimate_big_gamma(1, &f, &f.space(), 1.0, 2.0, &p).is_ok());
    assert!(estimate_big_gamma(3, &f, &f.space(), 1.0, 0.5, &p).is_ok());
    assert!(estimate_big_gamma(2, &f, &f.space(), 0.0, 3.0, &p).is_err());
    assert!(estimate_big_gamma(5, &f, &f.space(), 1.0, 3.0, &p).is_err());
}

#[test]
fn marked_terms_stable_under_inner_doubling() {
    let f = IsolatedCountModel::new(60.0, 1.0).unwrap();
    let sp = f.space();
    let a = estimate_big_gammas(&f, &sp, 1.0, 4.0, &plan(300, 40, 17)).unwrap();
    let b = estimate_big_gammas(&f, &sp, 1.0, 4.0, &plan(300, 80, 17)).unwrap();
    for (x, y) in a.terms().iter().zip(b.terms()) {
        assert!(x.value.is_finite() && x.value > 0.0);
        let se = (x.std_error.powi(2) + y.std_error.powi(2)).sqrt();
        assert!((x.value - y.value).abs() <= 2.0 * se, "{} {} vs {} (se {se})", x.name, x.value, y.value);
    }
}

#[test]
fn bounded_difference_assumptions_for_linear_models() {
    let p = plan(100, 20, 18);
    for s in [25.0, 100.0] {
        let f = WienerItoModel::unit_constant(1, s);
        let row = check_bounded_differences(&f, &f.space(), s, 1.0, 1.0, 4, &p).unwrap();
        assert!(row.as1_pass && row.as2_pass, "{row:?}");
        assert_eq!(row.b_hat, 0.0);
        let sp = PoissonSpace::unmarked(CarrierSpace::unit_cube(1, s));
        let c = CountModel::standardized(sp.clone());
        let row = check_bounded_differences(&c, &sp, s, 1.0, 0.0, 4, &p).unwrap();
        assert!(row.as1_pass && row.as2_pass, "{row:?}");
    }
}

#[test]
fn isolated_count_interaction_integral_stabilizes() {
    let p = plan(60, 30, 19);
    let b: Vec<f64> = [50.0, 100.0, 200.0]
        .iter()
        .map(|&s| {
            let f = IsolatedCountModel::new(s, 1.0).unwrap();
            check_bounded_differences(&f, &f.space(), s, 10.0, 1e9, 16, &p).unwrap().b_mean
        })
        .collect();
    let (lo, hi) = (b.iter().cloned().fold(f64::MAX, f64::min), b.iter().cloned().fold(0.0, f64::max));
    assert!(lo > 0.0 && hi / lo < 2.0, "{b:?}");
}
