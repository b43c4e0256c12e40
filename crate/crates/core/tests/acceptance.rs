//! Acceptance suite. Runs every criterion and prints one line per criterion:
//!
//!     cargo test -p mvpoincare --test acceptance            # all
//!     cargo test -p mvpoincare --test acceptance -- 4 11    # a subset
//!
//! Exit status is nonzero iff a criterion fails. A check whose failure is
//! understood (an incorrect reference value, or a known estimator bias) is
//! printed as "FAIL (known)" with its explanation and does not affect the
//! exit status.

use mvpoincare::bounds::{compound_sum_bounds, rate_slope, MarkMoments};
use mvpoincare::boolean::{intrinsic_volumes_2d, BooleanModel2D, Disk, Raster};
use mvpoincare::distance::{estimate_dconvex, estimate_dhl, estimate_dk, ConvexCatalog, Samples, SearchBudget};
use mvpoincare::gamma::*;
use mvpoincare::malliavin::{diff1, diff2, poincare_check};
use mvpoincare::model::{CarrierSpace, Deterministic, Product};
use mvpoincare::sampler::{gaussian_table, sample_probe, sample_space, simulate_functional, RngStream};
use mvpoincare::special::{integrate_adaptive, norm_cdf, norm_pdf};
use mvpoincare::stein::*;
use mvpoincare::zoo::*;
use mvpoincare::{FunctionalModel, GaussianTarget, Mat, PoissonSpace, Result};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Fail,
    /// Only known failures, each explained on its line: a reference value
    /// that is itself incorrect, or an estimator bias analysed in the notes.
    Known,
}

struct Outcome {
    verdict: Verdict,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { verdict: Verdict::Pass, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
        if !ok {
            self.verdict = Verdict::Fail;
        }
    }

    /// A check whose failure is understood; reported, but not fatal.
    fn known(&mut self, ok: bool, line: String, reason: &str) {
        if ok {
            self.check(true, line);
            return;
        }
        self.lines.push(format!("FAIL (known) {line}"));
        self.lines.push(format!("     {reason}"));
        if self.verdict == Verdict::Pass {
            self.verdict = Verdict::Known;
        }
    }

    fn note(&mut self, line: String) {
        self.lines.push(format!("     {line}"));
    }
}

type Criterion = (u32, &'static str, u64, fn() -> Result<Outcome>);

fn sigma_21() -> Mat {
    Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap()
}

fn c1_difference_structure() -> Result<Outcome> {
    let mut o = Outcome::new();
    let draws = 1000;

    let wi = WienerItoModel::new(
        vec![Kernel::cosine(1.0), Kernel::cosine(2.0), Kernel::constant(1.0)],
        CarrierSpace::unit_cube(2, 100.0),
        0.1,
    )?;
    let cs = CompoundSumModel::uniform(2, 100.0, 1.0);
    let models: [(&str, &dyn FunctionalModel, PoissonSpace); 2] =
        [("wiener-ito", &wi, wi.space()), ("compound-sum", &cs, cs.space())];
    for (k, (name, f, space)) in models.iter().enumerate() {
        let root = RngStream::new(1, k as u64);
        let (mut bad1, mut bad2) = (0, 0);
        for r in 0..draws {
            let mut rng = root.derive(r).rng();
            let eta = sample_space(space, &mut rng)?;
            let x = sample_probe(space, &mut rng)?;
            let y = sample_probe(space, &mut rng)?;
            let want = if k == 0 { wi.contribution(&x.loc) } else { cs.contribution(x.mark_or_empty()) };
            if diff1(*f, &eta, &x) != want {
                bad1 += 1;
            }
            if diff2(*f, &eta, &x, &y).iter().any(|v| *v != 0.0) {
                bad2 += 1;
            }
        }
        o.check(bad1 == 0, format!("{name}: D_x F == analytic contribution on {draws} draws ({bad1} mismatches)"));
        o.check(bad2 == 0, format!("{name}: D^2 F == 0 on {draws} draws ({bad2} nonzero)"));
    }
    Ok(o)
}

fn c2_product_formula() -> Result<Outcome> {
    let mut o = Outcome::new();
    let pc = PairCountModel::new(30.0, 2, 0.2)?;
    let cnt_pc = CountModel::raw(pc.space.clone());
    let cs = CompoundSumModel::rademacher(1, 64.0);
    let cnt_cs = CountModel::raw(cs.space());
    let cases: [(&str, &dyn FunctionalModel, &dyn FunctionalModel, PoissonSpace); 3] = [
        ("pair-count x count", &pc, &cnt_pc, pc.space.clone()),
        ("compound-sum x count", &cs, &cnt_cs, cs.space()),
        ("compound-sum x compound-sum", &cs, &cs, cs.space()),
    ];
    let root = RngStream::new(2, 0);
    let mut bad = 0;
    let total = 100;
    for r in 0..total {
        let (_, f, g, space) = &cases[r % cases.len()];
        let mut rng = root.derive(r as u64).rng();
        let eta = sample_space(space, &mut rng)?;
        let x = sample_probe(space, &mut rng)?;
        let fg = Product { f: *f, g: *g };
        let lhs = diff1(&fg, &eta, &x)[0];
        let (fv, gv) = (f.evaluate(&eta)[0], g.evaluate(&eta)[0]);
        let (df, dg) = (diff1(*f, &eta, &x)[0], diff1(*g, &eta, &x)[0]);
        if lhs != df * gv + fv * dg + df * dg {
            bad += 1;
        }
    }
    let names: Vec<&str> = cases.iter().map(|c| c.0).collect();
    o.check(bad == 0, format!("D(FG) == (DF)G + F(DG) + (DF)(DG) on {total} cases ({bad} mismatches)"));
    o.note(format!("pairs: {}", names.join("; ")));
    Ok(o)
}

fn c3_poincare() -> Result<Outcome> {
    let mut o = Outcome::new();
    let s = 100.0;
    let n = 10_000;
    let count = CountModel::standardized(PoissonSpace::unmarked(CarrierSpace::unit_cube(2, s)));
    let pair = PairCountModel::new(s, 2, 0.05)?;
    let wi = WienerItoModel::new(vec![Kernel::cosine(1.0), Kernel::constant(1.0)], CarrierSpace::unit_cube(1, s), 0.1)?;
    let rad = CompoundSumModel::rademacher(2, s);
    let uni = CompoundSumModel::uniform(1, s, 1.0);
    let iso = IsolatedCountModel::new(s, 1.0)?;
    // Window side chosen so that the grain intensity measure has mass ~ s.
    let side = (s / 40.0).sqrt() - 0.2;
    let boolean = BooleanModel2D::new(side, 0.05, 0.1, 40.0)?;
    let models: Vec<(&str, &dyn FunctionalModel, PoissonSpace)> = vec![
        ("count", &count, count.space.clone()),
        ("pair-count", &pair, pair.space.clone()),
        ("wiener-ito", &wi, wi.space()),
        ("compound-rademacher", &rad, rad.space()),
        ("compound-uniform", &uni, uni.space()),
        ("isolated-count", &iso, iso.space()),
        ("boolean", &boolean, boolean.space()),
    ];
    for (k, (name, f, space)) in models.iter().enumerate() {
        let rep = poincare_check(*f, space, n, 300 + k as u64)?;
        for (i, ok) in rep.pass.iter().enumerate() {
            let (v, w) = (rep.variance[i], rep.integral[i]);
            o.check(
                *ok,
                format!(
                    "{name}[{i}]: Var = {:.5} (se {:.1e}) <= int E(D F)^2 = {:.5} (se {:.1e}), mass {:.1}",
                    v.value,
                    v.std_error,
                    w.value,
                    w.std_error,
                    space.total_mass()
                ),
            );
        }
    }
    Ok(o)
}

/// Kolmogorov distance between (N+ - N-)/sqrt(s), N+- ~ Poisson(s/2)
/// independent, and N(0, 1), over both one-sided limits at each atom.
fn skellam_dk(s: f64) -> f64 {
    let mu = s / 2.0;
    let top = (mu + 40.0 * mu.sqrt() + 40.0) as usize;
    let mut pois = vec![(-mu).exp(); top + 1];
    for k in 1..=top {
        pois[k] = pois[k - 1] * mu / k as f64;
    }
    let top = top as i64;
    let mut below = 0.0;
    let mut worst: f64 = 0.0;
    for k in -top..=top {
        let p: f64 = (0..=top).filter(|j| (0..=top).contains(&(j + k))).map(|j| pois[(j + k) as usize] * pois[j as usize]).sum();
        let phi = norm_cdf(k as f64 / s.sqrt());
        worst = worst.max((below - phi).abs()).max((below + p - phi).abs());
        below += p;
    }
    worst
}

fn c4_compound_sum() -> Result<Outcome> {
    let mut o = Outcome::new();
    let target = GaussianTarget::identity(1);
    let n = 100_000;
    let mut points = Vec::new();
    for (k, s) in [25.0f64, 100.0, 400.0].into_iter().enumerate() {
        let reps = compound_sum_bounds(&MarkMoments::rademacher(1), &target, s, 1)?;
        let d3 = reps.iter().find(|r| r.id == "first_order_d3").expect("d3 bound").total;
        o.check(d3 == 0.25 / s.sqrt(), format!("s={s}: d3 bound {d3:.6} == s^(-1/2)/4 exactly"));
        let f = CompoundSumModel::rademacher(1, s);
        let z: Vec<f64> = simulate_functional(&f, &f.space(), n, 40 + k as u64)?.into_iter().map(|v| v[0]).collect();
        let dk = estimate_dk(&z, &target)?;
        let exact = skellam_dk(s);
        o.check(exact <= d3, format!("s={s}: dK of the exact law {exact:.5} <= d3 bound {d3:.5}"));
        o.known(
            dk.value <= d3,
            format!("s={s}: empirical dK {:.5} <= d3 bound {d3:.5} (n={n})", dk.value),
            &format!(
                "the plug-in sup is biased upward by O(n^(-1/2)); exact value {exact:.5}, bias {:+.5}",
                dk.value - exact
            ),
        );
        let se = (dk.empirical * (1.0 - dk.empirical) / n as f64).sqrt();
        points.push((s, dk.value, se));
    }
    let fit = rate_slope(&points, 2000, 4)?;
    o.check(
        (fit.slope + 0.5).abs() <= 0.15,
        format!("rate slope of dK {:.3} in -0.5 +- 0.15 (bootstrap 95% [{:.3}, {:.3}])", fit.slope, fit.ci_low, fit.ci_high),
    );
    o.note("dK <= d3 bound is an empirical domination check, not an application of a theorem".into());
    Ok(o)
}

fn c5_gamma_closed_forms() -> Result<Outcome> {
    let mut o = Outcome::new();
    let f = WienerItoModel::unit_constant(1, 100.0);
    let sp = f.space();
    let plan = NestedMcPlan::new(400, 200, 5)?;
    let (g1, g2) = estimate_gamma1_gamma2(&f, &sp, &plan)?;
    o.check(g1.value == 0.0, format!("gamma1 = {} exactly 0", g1.value));
    o.check(g2.value == 0.0, format!("gamma2 = {} exactly 0", g2.value));
    // D F = s^{-1/2}: gamma3 = s E|D|^3 = s^{-1/2}, gamma4 = (s E D^4)^{1/2},
    // gamma5^2 = s E D^6 = s^{-2}.
    for (t, truth) in [
        (estimate_gamma3(&f, &sp, &plan)?, 0.1),
        (estimate_gamma4(&f, &sp, &plan)?, 0.1),
        (estimate_gamma5(&f, &sp, &plan)?, 0.01),
    ] {
        let ok = (t.value - truth).abs() <= 3.0 * t.std_error + 1e-9 * truth;
        o.check(ok, format!("{} = {:.12} (se {:.1e}) vs {truth}", t.name, t.value, t.std_error));
    }
    o.note(format!("plan: n_outer {}, n_inner {}", plan.n_outer, plan.n_inner));
    Ok(o)
}

fn c6_stein_residual() -> Result<Outcome> {
    let mut o = Outcome::new();
    let combos = [(1, Mat::identity(1)), (2, Mat::identity(2)), (2, sigma_21())];
    let n = 40_000;
    let mut worst: f64 = 0.0;
    for (c, (m, sigma)) in combos.into_iter().enumerate() {
        let target = GaussianTarget::new(sigma)?;
        let ys = gaussian_table(&target, 10, &RngStream::new(6, c as u64));
        let mut bad = 0;
        let mut count = 0;
        for (k, h) in random_halfspaces(m, 1, 5, 60 + c as u64).into_iter().enumerate() {
            for t in [0.3, 0.5] {
                let cfg = SteinConfig { n_inner: n, n_nodes: 32, seed: 600 + 10 * c as u64 + k as u64 };
                let sol = SteinSolution::new(h.clone(), t, target.clone(), cfg)?;
                for y in ys.chunks_exact(m) {
                    let r = sol.residual(y, n)?;
                    count += 1;
                    worst = worst.max(r.value() / (3.0 * r.se).max(5e-3));
                    if r.value() > (3.0 * r.se).max(5e-3) {
                        bad += 1;
                    }
                }
            }
        }
        o.check(bad == 0, format!("m={m}, Sigma={:?}: {count} residuals, {bad} beyond max(3 se, 5e-3)", target.sigma.rows()));
    }
    o.note(format!("largest residual / tolerance: {worst:.3}"));
    Ok(o)
}

fn c7_derivative_bounds() -> Result<Outcome> {
    let mut o = Outcome::new();
    let configs = [(1, Mat::identity(1), 0.1), (1, Mat::diag(&[0.5]), 0.5), (2, sigma_21(), 0.1), (2, Mat::identity(2), 0.3)];
    let per = 250;
    for (c, (m, sigma, t)) in configs.into_iter().enumerate() {
        let target = GaussianTarget::new(sigma)?;
        let b2 = bound_second_partials(m, &target, t)?;
        let b3 = bound_third_partials(m, &target, t)?;
        let hs = random_halfspaces(m, 1, 5, 70 + c as u64);
        let sols: Vec<SteinSolution> = hs
            .into_iter()
            .enumerate()
            .map(|(k, h)| {
                SteinSolution::new(h, t, target.clone(), SteinConfig { n_inner: 5_000, n_nodes: 32, seed: 700 + k as u64 })
            })
            .collect::<Result<_>>()?;
        // Spread y wider than the target so the tails are visited.
        let ys = gaussian_table(&target, per, &RngStream::new(7, c as u64));
        let (mut v2, mut v3) = (0, 0);
        let (mut r2, mut r3): (f64, f64) = (0.0, 0.0);
        for (k, y) in ys.chunks_exact(m).enumerate() {
            let y: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
            let sol = &sols[k % sols.len()];
            let (a, se) = sol.derivatives(&y, 2)?.max_abs();
            r2 = r2.max(a / b2);
            if a - 3.0 * se > b2 {
                v2 += 1;
            }
            let (a, se) = sol.derivatives(&y, 3)?.max_abs();
            r3 = r3.max(a / b3);
            if a - 3.0 * se > b3 {
                v3 += 1;
            }
        }
        o.check(v2 == 0, format!("m={m} t={t}: |d2 f| <= {b2:.3} at {per} y, {v2} violations (max ratio {r2:.3})"));
        o.check(v3 == 0, format!("m={m} t={t}: |d3 f| <= {b3:.3} at {per} y, {v3} violations (max ratio {r3:.3})"));
    }
    Ok(o)
}

fn c8_second_moment_null() -> Result<Outcome> {
    let mut o = Outcome::new();
    let target = GaussianTarget::identity(1);
    let n = 100_000;
    let samples = Samples::from_flat(1, gaussian_table(&target, n, &RngStream::new(8, 0)))?;
    let mut catalog = random_halfspaces(1, 1, 8, 80);
    catalog.extend(standard_convex_catalog(1));
    let cfg = SteinConfig { n_inner: 5_000, n_nodes: 32, seed: 81 };
    let rep = check_second_moment(&samples, &target, 0.1, TestClass::Halfspaces(1), &catalog, 1000, cfg, &SearchBudget::default())?;
    let r = &rep.row;
    o.check(
        r.margin() > 0.0 && r.pass,
        format!("catalog LHS {:.4} (se {:.1e}) <= RHS {:.3}, margin {:.3}", r.lhs, r.se, r.rhs, r.margin()),
    );
    o.note(format!("distance term at the null: {:.5}; {}", rep.distance.value, rep.note));
    Ok(o)
}

fn c9_constants() -> Result<Outcome> {
    let mut o = Outcome::new();
    let m1 = constant_m2(1)?;
    o.check((m1 - 0.23421).abs() <= 1e-4, format!("M2(1) = {m1:.6} vs 0.23421 +- 1e-4"));
    for m in 1..=5 {
        let v = constant_m2(m)?;
        o.check(v <= (m * m) as f64, format!("M2({m}) = {v:.5} <= {}", m * m));
    }
    let m3 = constant_m3(1, 1_000_000, 9)?;
    let cap = 6f64.sqrt();
    o.check(m3.value <= cap + 3.0 * m3.std_error, format!("M3(1) = {:.5} (se {:.1e}) <= sqrt 6 = {cap:.5}", m3.value, m3.std_error));
    let h = hermite3_second_moment(1_000_000, 10);
    o.check((h.value - 6.0).abs() <= 3.0 * h.std_error, format!("E(N^3 - 3N)^2 = {:.4} (se {:.1e}) vs 6", h.value, h.std_error));
    Ok(o)
}

fn c10_inverse_distance() -> Result<Outcome> {
    let mut o = Outcome::new();
    let n = 2_000_000;
    for m in [1, 2] {
        let rep = check_inverse_distance(0.5, m, &standard_convex_catalog(m), n, 100 + m as u64)?;
        let r = &rep.row;
        o.check(
            r.margin() > 0.0 && rep.skipped.is_empty(),
            format!("m={m}: max catalog estimate {:.4} (se {:.1e}) <= {:.4}, margin {:.4}", r.lhs, r.se, r.rhs, r.margin()),
        );
    }
    let half = mvpoincare::TestFunction::halfspace(vec![1.0], 0.0)?;
    let rep = check_inverse_distance(0.5, 1, &[half], n, 110)?;
    let est = rep.per_shape[0].1;
    // E|N|^{-1/2} = 2^{-1/4} Gamma(1/4) / sqrt(pi); substitute z = v^2.
    let exact = integrate_adaptive(&|v: f64| 4.0 * norm_pdf(v * v), 0.0, 8.0, 1e-13);
    o.check(
        (est.value - exact).abs() <= 3.0 * est.std_error + 0.01,
        format!("half-space m=1: estimate {:.4} (se {:.1e}) vs quadrature {exact:.4}", est.value, est.std_error),
    );
    let reference = 1.3803;
    o.known(
        (est.value - reference).abs() <= 3.0 * est.std_error,
        format!("half-space m=1: estimate {:.4} (se {:.1e}) vs reference value {reference}", est.value, est.std_error),
        &format!("the reference value disagrees with the quadrature value {exact:.4} of E|N|^(-1/2)"),
    );
    Ok(o)
}

fn c11_distance_calibration() -> Result<Outcome> {
    let mut o = Outcome::new();
    let n = 100_000;
    let budget = SearchBudget::default();
    for (k, sigma) in [Mat::identity(2), sigma_21()].into_iter().enumerate() {
        let target = GaussianTarget::new(sigma)?;
        let samples = Samples::from_flat(2, gaussian_table(&target, n, &RngStream::new(11, k as u64)))?;
        let dh = estimate_dhl(&samples, &target, 2, &budget)?;
        let dc = estimate_dconvex(&samples, &target, &ConvexCatalog::standard(2), &budget)?;
        let tag = format!("Sigma={:?}", target.sigma.rows());
        o.check(dh.value <= 0.02, format!("{tag}: null dH2 {:.5} <= 0.02", dh.value));
        o.check(dc.value <= 0.02, format!("{tag}: null dconvex {:.5} <= 0.02", dc.value));
        o.check(dc.value >= dh.value, format!("{tag}: dconvex {:.5} >= dH2 {:.5}", dc.value, dh.value));
        if k == 1 {
            let theta = Mat::from_rows(&[vec![1.5, -0.4], vec![0.3, 0.8]])?;
            let rep = check_smoothing_lemmas(&samples, &target, 0.1, 2, &standard_convex_catalog(2), &theta, &budget, 12)?;
            let row = rep.rows.iter().find(|r| r.check.starts_with("affine_invariance")).expect("affine row");
            o.check(row.pass, format!("affine invariance: dH2 {:.5} after map vs {:.5} (se {:.1e})", row.lhs, row.rhs, row.se));
        }
    }
    Ok(o)
}

fn c12_boolean() -> Result<Outcome> {
    let mut o = Outcome::new();
    let (r_min, r_max, gamma) = (0.05, 0.1, 40.0);
    let h = BooleanModel2D::new(4.0, r_min, r_max, gamma)?.h;
    for r in [r_min, 0.075, r_max] {
        let n_px = (1.0 / h).round() as usize;
        let v = intrinsic_volumes_2d(&Raster::render(&[Disk { cx: 0.5, cy: 0.5, r }], n_px, h));
        let tol = 3.0 * h * (1.0 + PI * r);
        let ok = v[0] == 1.0 && (v[1] - PI * r).abs() < tol && (v[2] - PI * r * r).abs() < tol;
        o.check(ok, format!("disk r={r}: volumes {v:.5?} vs [1, {:.5}, {:.5}], pixel {h}", PI * r, PI * r * r));
    }
    let tr = check_translative_inequality(r_max, 1.0, h, 20_000, 121)?;
    o.check(tr.margin() >= 0.0, format!("translative inequality: {:.4} (se {:.1e}) <= {:.4}", tr.lhs, tr.se, tr.rhs));

    let n = 100_000;
    let budget = SearchBudget::default();
    let mut rows = Vec::new();
    for (k, side) in [4.0, 8.0, 16.0].into_iter().enumerate() {
        let t0 = Instant::now();
        let row = boolean_scale_row(side, r_min, r_max, gamma, n, 2, &budget, 1200 + k as u64)?;
        o.note(format!(
            "L={side}: dH2 {:.5}, cov diag [{:.4}, {:.4}, {:.5}] ({:.0?})",
            row.distance.value,
            row.cov[(0, 0)],
            row.cov[(1, 1)],
            row.cov[(2, 2)],
            t0.elapsed()
        ));
        rows.push(row);
    }
    let change = covariance_relative_change(&rows[2].cov, &rows[1].cov);
    o.check(change < 0.2, format!("covariance relative change L=8 -> 16: {change:.4} < 0.2"));
    let points: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| {
            let d = &r.distance;
            let se = (d.empirical * (1.0 - d.empirical) / n as f64 + d.gaussian_prob_se.powi(2)).sqrt();
            (r.window_area(), d.value, se)
        })
        .collect();
    let fit = rate_slope(&points, 2000, 12)?;
    o.check(
        (-0.7..=-0.3).contains(&fit.slope),
        format!("rate slope of dH2 vs V2(W): {:.3} in [-0.7, -0.3] (bootstrap 95% [{:.3}, {:.3}])", fit.slope, fit.ci_low, fit.ci_high),
    );
    Ok(o)
}

fn c13_marked_pipeline() -> Result<Outcome> {
    let mut o = Outcome::new();
    let plan = NestedMcPlan::new(40, 10, 13)?;
    let zero = Deterministic { value: vec![0.3] };
    let sp = CompoundSumModel::rademacher(1, 10.0).space();
    let r = estimate_big_gammas(&zero, &sp, 1.0, 3.0, &plan)?;
    let vals: Vec<f64> = r.terms().iter().map(|t| t.value).collect();
    o.check(vals.iter().all(|v| *v == 0.0), format!("D == 0 model: Gamma1..4 = {vals:?}"));

    let f = CompoundSumModel::rademacher(1, 37.0);
    let t = estimate_big_gamma(2, &f, &f.space(), 1.0, 1.0, &plan)?;
    o.check(t.value == 37.0 && t.std_error == 0.0, format!("|D| == s^(-1/2) everywhere, p=1, c=1: Gamma2 = {} == lambda(X) = 37", t.value));

    for bad in [1.0, 2.0] {
        match estimate_big_gamma(4, &f, &f.space(), 1.0, bad, &plan) {
            Err(e) => o.check(e.to_string().contains("p > 2"), format!("p={bad}: Gamma4 rejected ({e})")),
            Ok(_) => o.check(false, format!("p={bad}: Gamma4 accepted a p <= 2")),
        }
    }
    Ok(o)
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        (1, "difference operators of linear functionals", 60, c1_difference_structure),
        (2, "product formula", 60, c2_product_formula),
        (3, "first-order Poincare inequality across the zoo", 600, c3_poincare),
        (4, "compound-sum bound and empirical rate", 900, c4_compound_sum),
        (5, "gamma closed forms", 600, c5_gamma_closed_forms),
        (6, "Stein equation residual", 600, c6_stein_residual),
        (7, "Stein solution derivative bounds", 600, c7_derivative_bounds),
        (8, "second-moment inequality at the null", 600, c8_second_moment_null),
        (9, "constants M2, M3", 300, c9_constants),
        (10, "inverse-distance inequality", 300, c10_inverse_distance),
        (11, "distance-estimator calibration", 900, c11_distance_calibration),
        (12, "Boolean model", 3600, c12_boolean),
        (13, "marked Gamma pipeline", 300, c13_marked_pipeline),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, limit, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let mut out = run().unwrap_or_else(|e| {
            let mut o = Outcome::new();
            o.check(false, format!("error: {e}"));
            o
        });
        let elapsed = t0.elapsed();
        if elapsed > Duration::from_secs(limit) {
            out.check(false, format!("runtime {elapsed:.0?} exceeds {limit} s"));
        }
        let tag = match out.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Known => "FAIL (known)",
        };
        println!("criterion {id:>2} {tag:<16} {name} [{:.1} s]", elapsed.as_secs_f64());
        for l in &out.lines {
            println!("    {l}");
        }
        if out.verdict == Verdict::Fail {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: no unexplained failures");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
