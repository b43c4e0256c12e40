use mvpoincare::bounds::*;
use mvpoincare::gamma::{BigGammaReport, GammaReport};
use mvpoincare::{GaussianTarget, Mat};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn zero_ingredients_give_zero() {
    let r = GammaReport::from_values([0.0; 5], 0.0, 2);
    let t = GaussianTarget::new(Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap()).unwrap();
    let cv = ConvexInputs { rho: Some(1e-300), lambda_a: 1.0, tail: 0.0 };
    for b in [
        bound_d3(&r, &t).unwrap(),
        bound_d2(&r, &t).unwrap(),
        bound_dhl(&r, &t, 3).unwrap(),
        bound_dconvex(&r, &t, &cv).unwrap(),
    ] {
        assert!(b.total < 1e-200, "{}", b.text());
        assert!(!b.vacuous);
    }
    let g = BigGammaReport::from_values([0.0; 4], 1.0, 3.0);
    for metric in [Metric::D3, Metric::D2, Metric::Hl(2)] {
        assert_eq!(bound_marked(&g, &t, (0.0, 0.0), metric, None).unwrap().total, 0.0);
    }
}

#[test]
fn d3_arithmetic() {
    let t = GaussianTarget::identity(1);
    let r = GammaReport::from_values([0.0, 0.0, 0.1, 0.0, 0.0], 0.0, 1);
    assert!(close(bound_d3(&r, &t).unwrap().total, 0.025, 1e-15));
    let r = GammaReport::from_values([0.2, 0.4, 0.1, 7.0, 7.0], 0.3, 2);
    // (2/2) 0.3 + 2 (0.2) + (2/2) 0.4 + (4/4) 0.1
    assert!(close(bound_d3(&r, &GaussianTarget::identity(2)).unwrap().total, 1.2, 1e-15));
}

#[test]
fn d2_constant_collapses_for_identity() {
    let r = GammaReport::from_values([0.0, 0.0, 0.1, 0.0, 0.0], 0.0, 1);
    let b = bound_d2(&r, &GaussianTarget::identity(1)).unwrap();
    assert!(close(constant("c_d2_gamma3"), (2.0 * std::f64::consts::PI).sqrt() / 8.0, 1e-15));
    assert!(close(b.total, 0.031_332_853_432_887_5, 1e-12));
    let singular = GaussianTarget::new(Mat::diag(&[1.0, 0.0])).unwrap();
    assert!(bound_d2(&GammaReport::from_values([0.0; 5], 0.0, 2), &singular).is_err());
}

#[test]
fn dhl_arithmetic_and_vacuous_flag() {
    let r = GammaReport::from_values([0.0, 0.0, 0.0, 0.1, 0.0], 0.0, 1);
    let b = bound_dhl(&r, &GaussianTarget::identity(1), 1).unwrap();
    assert!(close(b.total, 71.8, 1e-14));
    assert!(b.vacuous);
    assert_eq!(b.dominant, Some("gamma4"));
    assert!(bound_dhl(&r, &GaussianTarget::identity(1), 0).is_err());
    let small = GammaReport::from_values([0.0, 0.0, 0.0, 1e-4, 0.0], 0.0, 1);
    assert!(!bound_dhl(&small, &GaussianTarget::identity(1), 1).unwrap().vacuous);
}

#[test]
fn dhl_matches_direct_first_order_form() {
    // First-order integral with f = s^{-1/2} on [0, 1], lambda = s Leb: the
    // gamma terms are gamma4 = sqrt(m sum int f^4), gamma5 = sqrt(m^2 sum int f^6).
    for s in [25.0f64, 100.0, 400.0] {
        let int4 = 1.0 / s;
        let int6 = 1.0 / (s * s);
        let r = GammaReport::from_values([0.0, 0.0, s.powf(-0.5), int4.sqrt(), int6.sqrt()], 0.0, 1);
        let t = GaussianTarget::identity(1);
        let general = bound_dhl(&r, &t, 1).unwrap().total;
        let direct = first_order_bounds(
            &FirstOrderInputs { disc: 0.0, int_abs3: s.powf(-0.5), int4, int6, rho_lambda: None },
            &t,
            1,
        )
        .unwrap();
        let direct = direct.iter().find(|b| b.id == "first_order_dHl").unwrap().total;
        assert!((general - direct).abs() <= 1e-12 * direct, "{general} vs {direct}");
    }
}

#[test]
fn first_order_form_dominates_general_form() {
    // Away from m = l = 1 and Sigma = I the direct form is the looser one.
    let t = GaussianTarget::new(Mat::diag(&[0.5, 3.0])).unwrap();
    for (m4, m6, l) in [(0.01f64, 1e-4f64, 1usize), (0.02, 1e-3, 3), (1e-3, 1e-2, 2)] {
        let r = GammaReport::from_values([0.0, 0.0, 0.0, (2.0 * m4).sqrt(), (4.0 * m6).sqrt()], 0.0, 2);
        let g = bound_dhl(&r, &t, l).unwrap().total;
        let d = first_order_bounds(&FirstOrderInputs { disc: 0.0, int_abs3: 0.0, int4: m4, int6: m6, rho_lambda: None }, &t, l)
            .unwrap()
            .into_iter()
            .find(|b| b.id == "first_order_dHl")
            .unwrap()
            .total;
        assert!(g <= d * (1.0 + 1e-12), "{g} > {d}");
    }
}

#[test]
fn dconvex_terms() {
    let t = GaussianTarget::identity(1);
    let zero = GammaReport::from_values([0.0; 5], 0.0, 1);
    assert!(bound_dconvex(&zero, &t, &ConvexInputs { rho: None, lambda_a: 1.0, tail: 0.0 })
        .unwrap_err()
        .to_string()
        .contains("almost-sure bound rho"));
    // Only the tail term: gamma = tail / (m ||Sigma^-1|| lambda(A)).
    let b = bound_dconvex(&zero, &t, &ConvexInputs { rho: Some(1e-9), lambda_a: 4.0, tail: 0.5 }).unwrap();
    assert_eq!(b.dominant, Some("tail"));
    assert!(close(b.total, 2304.0 * 0.125, 1e-14));
    // rho = a / sqrt(s), lambda(A) = s gives rho^3 lambda = a^3/sqrt(s) and
    // sqrt(rho^4 lambda) = a^2/sqrt(s).
    let (a, s) = (2.0f64, 100.0f64);
    let b = bound_dconvex(&zero, &t, &ConvexInputs { rho: Some(a / s.sqrt()), lambda_a: s, tail: 0.0 }).unwrap();
    let expect = 2304.0 * (8.0 * 6f64.sqrt() / 3.0 * a.powi(3) / s.sqrt()).max(a * a / s.sqrt());
    assert!(close(b.total, expect, 1e-13));
}

#[test]
fn marked_arithmetic() {
    let t = GaussianTarget::identity(2);
    let g = BigGammaReport::from_values([0.02, 0.04, 0.0, 0.0], 1.0, 3.0);
    let b = bound_marked(&g, &t, (0.0, 0.0), Metric::D3, None).unwrap();
    assert!(close(b.total, 0.124_852_813_742_385_7, 1e-12), "{}", b.total);
    let g = BigGammaReport::from_values([0.01, 0.0, 0.3, 0.0], 1.0, 3.0);
    let b = bound_marked(&g, &t, (0.0, 0.0), Metric::Hl(1), None).unwrap();
    assert_eq!(b.dominant, Some("Gamma3"));
    assert!(close(b.total, 718.0 * 2f64.powf(65.0 / 24.0) * 0.3, 1e-13));
    let low_p = BigGammaReport::from_values([0.0; 4], 1.0, 2.0);
    assert!(bound_marked(&low_p, &t, (0.0, 0.0), Metric::Hl(1), None).is_err());
    assert!(bound_marked(&low_p, &t, (0.0, 0.0), Metric::D2, None).is_ok());
    let cv = ConvexInputs { rho: Some(0.1), lambda_a: 10.0, tail: 0.0 };
    let b = bound_marked(&g, &t, (0.0, 0.0), Metric::Convex, Some(&cv)).unwrap();
    assert!(b.total > 2304.0 * 32.0 * 0.3 - 1e-9);
}

#[test]
fn compound_sum_bounds_for_rademacher() {
    let t = GaussianTarget::identity(1);
    for s in [25.0f64, 100.0, 400.0] {
        let b = compound_sum_bounds(&MarkMoments::rademacher(1), &t, s, 1).unwrap();
        assert_eq!(b[0].id, "first_order_d3");
        assert_eq!(b[0].total, 0.25 / s.sqrt());
        assert!(close(b[1].total, (2.0 * std::f64::consts::PI).sqrt() / 8.0 / s.sqrt(), 1e-14));
        assert!(close(b[2].total, 718.0 / s.sqrt(), 1e-14));
        assert!(close(b[3].total, 15050.0 / s.sqrt(), 1e-14));
    }
    // d3 bound at s = 100 agrees with the general form fed gamma3 = 0.1.
    let g = GammaReport::from_values([0.0, 0.0, 0.1, 0.0, 0.0], 0.0, 1);
    assert!(close(bound_d3(&g, &t).unwrap().total, 0.025, 1e-15));
}

#[test]
fn rate_fits() {
    let pts: Vec<(f64, f64, f64)> = [25.0f64, 100.0, 400.0, 1600.0].iter().map(|&s| (s, 3.0 / s.sqrt(), 0.0)).collect();
    let f = rate_slope(&pts, 200, 1).unwrap();
    assert!(close(f.slope, -0.5, 1e-12));
    assert!(close(f.constant(), 3.0, 1e-12));
    assert!(f.ci_low <= f.slope + 1e-12 && f.slope <= f.ci_high + 1e-12);
    let pts: Vec<(f64, f64, f64)> = [10.0, 20.0, 40.0].iter().map(|&s| (s, 2.0 / s, 0.0)).collect();
    assert!(close(rate_slope(&pts, 0, 1).unwrap().slope, -1.0, 1e-12));
    assert!(rate_slope(&[(1.0, 1.0, 0.0), (2.0, 0.0, 0.0), (3.0, 1.0, 0.0)], 10, 1).is_err());
    assert!(rate_slope(&[(1.0, 1.0, 0.0), (2.0, 1.0, 0.0)], 10, 1).is_err());
    // Noisy values: the parametric interval covers the truth.
    let pts: Vec<(f64, f64, f64)> =
        [25.0f64, 100.0, 400.0, 1600.0].iter().zip([1.02, 0.97, 1.01, 0.99]).map(|(&s, e)| (s, e / s.sqrt(), 0.03 / s.sqrt())).collect();
    let f = rate_slope(&pts, 2000, 2).unwrap();
    assert!(f.ci_low < -0.5 && -0.5 < f.ci_high, "{f:?}");
}

#[test]
fn constants_table_is_complete() {
    for name in ["c_hl", "c_convex", "c_convex_first_order", "c_second_moment", "c_smoothing_hl", "c_smoothing_convex"] {
        assert!(constant(name) > 0.0);
    }
    assert!(close(constant("c_convex_rho3"), 8.0 * 6f64.sqrt() / 3.0, 1e-15));
    assert!(close(constant("c_smoothing_hl"), 24.0 / std::f64::consts::PI.sqrt(), 1e-15));
    assert!(close(constant("c_smoothing_convex"), 20.0 / std::f64::consts::PI.sqrt(), 1e-15));
    assert!(close(constant("c_m3"), 6f64.sqrt(), 1e-15));
}

#[test]
fn csv_and_text() {
    let r = GammaReport::from_values([0.0, 0.0, 0.1, 0.1, 0.01], 0.0, 1);
    let t = GaussianTarget::identity(1);
    let b = vec![bound_d3(&r, &t).unwrap(), bound_dhl(&r, &t, 1).unwrap()];
    let csv = bounds_to_csv(&b);
    assert!(csv.starts_with("bound,metric,total,total_upper,vacuous,dominant\n"));
    assert!(csv.contains("general_dHl,dH1,"));
    assert!(b[1].text().contains("(vacuous)"));
}

fn pd2() -> impl Strategy<Value = GaussianTarget> {
    (0.2f64..3.0, 0.2f64..3.0, -0.9f64..0.9).prop_map(|(a, b, rho)| {
        let c = rho * (a * b).sqrt();
        GaussianTarget::new(Mat::from_rows(&[vec![a, c], vec![c, b]]).unwrap()).unwrap()
    })
}

proptest! {
    #[test]
    fn bounds_are_monotone(
        t in pd2(),
        base in prop::array::uniform6(0.0f64..1.0),
        k in 0usize..6,
        bump in 0.0f64..1.0,
        l in 1usize..4,
    ) {
        let mk = |v: [f64; 6]| GammaReport::from_values([v[1], v[2], v[3], v[4], v[5]], v[0], 2);
        let mut up = base;
        up[k] += bump;
        let (r0, r1) = (mk(base), mk(up));
        let cv = ConvexInputs { rho: Some(0.3), lambda_a: 5.0, tail: 0.1 };
        prop_assert!(bound_d3(&r0, &t).unwrap().total <= bound_d3(&r1, &t).unwrap().total);
        prop_assert!(bound_d2(&r0, &t).unwrap().total <= bound_d2(&r1, &t).unwrap().total);
        prop_assert!(bound_dhl(&r0, &t, l).unwrap().total <= bound_dhl(&r1, &t, l).unwrap().total);
        prop_assert!(bound_dconvex(&r0, &t, &cv).unwrap().total <= bound_dconvex(&r1, &t, &cv).unwrap().total);
        let g0 = BigGammaReport::from_values([base[1], base[2], base[3], base[4]], 1.0, 3.0);
        let g1 = BigGammaReport::from_values([up[1], up[2], up[3], up[4]], 1.0, 3.0);
        for metric in [Metric::D3, Metric::D2, Metric::Hl(l), Metric::Convex] {
            let a = bound_marked(&g0, &t, (base[0], 0.0), metric, Some(&cv)).unwrap().total;
            let b = bound_marked(&g1, &t, (up[0], 0.0), metric, Some(&cv)).unwrap().total;
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn vacuous_flag_is_honest(g in 0.0f64..0.01, l in 1usize..4) {
        let r = GammaReport::from_values([g, g, g, g, g], g, 1);
        let b = bound_dhl(&r, &GaussianTarget::identity(1), l).unwrap();
        prop_assert_eq!(b.vacuous, b.total >= 1.0);
        prop_assert!(!bound_d3(&r, &GaussianTarget::identity(1)).unwrap().vacuous);
    }

    #[test]
    fn slope_of_power_law_is_exact(p in -2.0f64..1.0, c in 0.1f64..10.0) {
        let pts: Vec<(f64, f64, f64)> = [3.0, 30.0, 300.0].iter().map(|&s: &f64| (s, c * s.powf(p), 0.0)).collect();
        prop_assert!((rate_slope(&pts, 0, 0).unwrap().slope - p).abs() < 1e-9);
    }
}
