//! Explicit right-hand sides of the normal approximation bounds, assembled
//! from estimated or closed-form ingredients, plus log-log rate fits.

use crate::error::{Error, Result};
use crate::gamma::{BigGammaReport, GammaReport};
use crate::linalg::GaussianTarget;
use crate::sampler::RngStream;
use crate::stats;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::{self, Write};

/// Every numeric constant used below, with the bound it belongs to.
pub const CONSTANTS: &[(&str, f64, &str)] = &[
    ("c_hl", 718.0, "general d_Hl bound; first-order and marked d_Hl bounds"),
    ("c_convex", 2304.0, "general and marked d_convex bounds"),
    ("c_convex_first_order", 15050.0, "first-order and compound-sum d_convex bounds"),
    ("c_second_moment", 444.0, "second moment of smoothed Stein derivatives, times m^(23/6)"),
    ("c_d2_gamma3", 0.313_328_534_328_875_03, "sqrt(2 pi)/8 in the d2 bounds"),
    ("c_convex_rho3", 6.531_972_647_421_807, "8 sqrt(6)/3 in the d_convex bounds"),
    ("c_smoothing_hl", 13.540_550_005_146_152, "24/sqrt(pi) in the half-space smoothing lemma"),
    ("c_smoothing_convex", 11.283_791_670_955_127, "20/sqrt(pi) in the convex smoothing lemma"),
    ("c_third_partials", 6.0, "6 m^3 in the third-derivative sup bound"),
    ("c_m3", 2.449_489_742_783_178, "sqrt(6) m^(3/2) bound on M3(m)"),
];

pub fn constant(name: &str) -> f64 {
    CONSTANTS.iter().find(|c| c.0 == name).map(|c| c.1).expect("unknown constant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    D3,
    D2,
    Hl(usize),
    Convex,
}

impl Metric {
    /// Distances bounded by 1 by definition.
    pub fn is_probability_metric(&self) -> bool {
        matches!(self, Metric::Hl(_) | Metric::Convex)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::D3 => write!(f, "d3"),
            Metric::D2 => write!(f, "d2"),
            Metric::Hl(l) => write!(f, "dH{l}"),
            Metric::Convex => write!(f, "dconvex"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingredient {
    pub name: &'static str,
    pub value: f64,
    pub std_error: f64,
}

impl Ingredient {
    pub fn new(name: &'static str, value: f64, std_error: f64) -> Self {
        Ingredient { name, value, std_error }
    }

    pub fn exact(name: &'static str, value: f64) -> Self {
        Ingredient { name, value, std_error: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub id: &'static str,
    pub metric: Metric,
    pub ingredients: Vec<Ingredient>,
    pub constants: Vec<(&'static str, f64)>,
    pub total: f64,
    /// Total with every ingredient raised by 3 standard errors; all bounds
    /// are nondecreasing in their ingredients.
    pub total_upper: f64,
    /// For max-type bounds, the term attaining the max.
    pub dominant: Option<&'static str>,
    /// Total >= 1 for a distance that never exceeds 1.
    pub vacuous: bool,
}

impl BoundReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} bound on {}: {:.6e}{}", self.id, self.metric, self.total, if self.vacuous { " (vacuous)" } else { "" });
        let _ = writeln!(s, "  upper (ingredients + 3 s.e.): {:.6e}", self.total_upper);
        if let Some(d) = self.dominant {
            let _ = writeln!(s, "  dominant term: {d}");
        }
        for i in &self.ingredients {
            let _ = writeln!(s, "  {} = {:.6e} +- {:.2e}", i.name, i.value, i.std_error);
        }
        for (n, v) in &self.constants {
            let _ = writeln!(s, "  const {n} = {v}");
        }
        s
    }
}

pub const BOUND_CSV_HEADER: &str = "bound,metric,total,total_upper,vacuous,dominant";

pub fn bounds_to_csv(reports: &[BoundReport]) -> String {
    let mut s = String::from(BOUND_CSV_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{:?},{:?},{},{}",
            r.id,
            r.metric,
            r.total,
            r.total_upper,
            r.vacuous,
            r.dominant.unwrap_or("")
        );
    }
    s
}

/// Evaluates `eval` at the ingredient values and at values + 3 s.e.
fn assemble<E>(
    id: &'static str,
    metric: Metric,
    ingredients: Vec<Ingredient>,
    constants: Vec<(&'static str, f64)>,
    eval: E,
) -> Result<BoundReport>
where
    E: Fn(&[f64]) -> (f64, Option<&'static str>),
{
    for i in &ingredients {
        if !(i.value >= 0.0 && i.value.is_finite()) {
            return Err(Error::Precondition(format!("ingredient {} must be finite and >= 0, got {}", i.name, i.value)));
        }
    }
    let v: Vec<f64> = ingredients.iter().map(|i| i.value).collect();
    let up: Vec<f64> = ingredients.iter().map(|i| i.value + 3.0 * i.std_error).collect();
    let (total, dominant) = eval(&v);
    let (total_upper, _) = eval(&up);
    Ok(BoundReport {
        id,
        metric,
        ingredients,
        constants,
        total,
        total_upper,
        dominant,
        vacuous: metric.is_probability_metric() && total >= 1.0,
    })
}

/// Max over named terms; the first maximal term is reported.
fn arg_max(terms: &[(&'static str, f64)]) -> (f64, Option<&'static str>) {
    let mut best = (f64::NEG_INFINITY, None);
    for &(n, v) in terms {
        if v > best.0 {
            best = (v, Some(n));
        }
    }
    best
}

fn gamma_ingredients(r: &GammaReport) -> Vec<Ingredient> {
    let mut v = vec![Ingredient::new("cov_discrepancy", r.cov_discrepancy.value, r.cov_discrepancy.std_error)];
    for t in r.terms() {
        v.push(Ingredient::new(t.name, t.value, t.std_error));
    }
    v
}

/// Indices into `gamma_ingredients`.
const DISC: usize = 0;
const G1: usize = 1;
const G2: usize = 2;
const G3: usize = 3;
const G4: usize = 4;
const G5: usize = 5;

/// (m/2) disc + m g1 + (m/2) g2 + (m^2/4) g3; Sigma only needs to be PSD.
pub fn bound_d3(r: &GammaReport, target: &GaussianTarget) -> Result<BoundReport> {
    let m = target.dim() as f64;
    assemble("general_d3", Metric::D3, gamma_ingredients(r), vec![], |v| {
        (m / 2.0 * v[DISC] + m * v[G1] + m / 2.0 * v[G2] + m * m / 4.0 * v[G3], None)
    })
}

pub fn bound_d2(r: &GammaReport, target: &GaussianTarget) -> Result<BoundReport> {
    let inv = target.require_pd()?;
    let m = target.dim() as f64;
    let op = target.op_norm;
    let c = constant("c_d2_gamma3");
    assemble("general_d2", Metric::D2, gamma_ingredients(r), vec![("c_d2_gamma3", c)], |v| {
        let a = inv * op.sqrt();
        (a * (v[DISC] + 2.0 * v[G1] + v[G2]) + c * m * m * inv.powf(1.5) * op * v[G3], None)
    })
}

pub fn bound_dhl(r: &GammaReport, target: &GaussianTarget, l: usize) -> Result<BoundReport> {
    let inv = target.require_pd()?;
    if l == 0 {
        return Err(Error::Precondition("l must be >= 1".into()));
    }
    let m = target.dim() as f64;
    let lf = l as f64;
    let c = constant("c_hl");
    assemble("general_dHl", Metric::Hl(l), gamma_ingredients(r), vec![("c_hl", c)], |v| {
        let (mx, d) = arg_max(&[
            ("cov_discrepancy", v[DISC]),
            ("gamma1", v[G1]),
            ("gamma2", v[G2]),
            ("gamma4", v[G4]),
            ("sqrt(l gamma5)", lf.sqrt() * v[G5].sqrt() / inv.powf(0.25)),
        ]);
        (c * m.powf(47.0 / 24.0) * lf * inv * mx, d)
    })
}

/// Extra inputs of the d_convex bound. `rho` bounds |D_x F_i| almost surely;
/// `tail` is the integral of P(D_x F != 0) outside A (0 when A is the whole
/// space).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexInputs {
    pub rho: Option<f64>,
    pub lambda_a: f64,
    pub tail: f64,
}

fn check_convex_inputs(c: &ConvexInputs) -> Result<f64> {
    let rho = c.rho.ok_or_else(|| {
        Error::Precondition(
            "the d_convex bound needs an almost-sure bound rho on max_i |D_x F_i|; none was given".into(),
        )
    })?;
    if !(rho > 0.0 && c.lambda_a > 0.0 && c.lambda_a.is_finite() && c.tail >= 0.0) {
        return Err(Error::Precondition("need rho > 0, 0 < lambda(A) < inf and tail >= 0".into()));
    }
    Ok(rho)
}

pub fn bound_dconvex(r: &GammaReport, target: &GaussianTarget, inputs: &ConvexInputs) -> Result<BoundReport> {
    let inv = target.require_pd()?;
    let rho = check_convex_inputs(inputs)?;
    let m = target.dim() as f64;
    let la = inputs.lambda_a;
    let c = constant("c_convex");
    let c3 = constant("c_convex_rho3");
    let mut ing = gamma_ingredients(r);
    ing.push(Ingredient::exact("tail", inputs.tail));
    assemble("general_dconvex", Metric::Convex, ing, vec![("c_convex", c), ("c_convex_rho3", c3)], |v| {
        let (mx, d) = arg_max(&[
            ("cov_discrepancy", v[DISC]),
            ("gamma1", v[G1]),
            ("gamma2", v[G2]),
            ("gamma4", v[G4]),
            ("rho^3 lambda(A)", c3 * m * m * inv.sqrt() * rho.powi(3) * la),
            ("sqrt(rho^4 lambda(A))", m.powf(1.5) * (rho.powi(4) * la).sqrt() / inv.powf(0.25)),
            ("tail", v[6] / (m * inv * la)),
        ]);
        (c * m.powi(3) * inv * mx, d)
    })
}

fn big_ingredients(g: &BigGammaReport, disc: f64, disc_se: f64) -> Vec<Ingredient> {
    let mut v = vec![Ingredient::new("cov_discrepancy", disc, disc_se)];
    for t in g.terms() {
        v.push(Ingredient::new(t.name, t.value, t.std_error));
    }
    v
}

/// Bounds for marked functionals with moment conditions of order 4 + p.
pub fn bound_marked(
    g: &BigGammaReport,
    target: &GaussianTarget,
    disc: (f64, f64),
    metric: Metric,
    convex: Option<&ConvexInputs>,
) -> Result<BoundReport> {
    let m = target.dim() as f64;
    let ing = big_ingredients(g, disc.0, disc.1);
    let needs_p = matches!(metric, Metric::Hl(_) | Metric::Convex);
    if needs_p && g.p <= 2.0 {
        return Err(Error::Precondition(format!("the marked {metric} bound requires p > 2; got p = {}", g.p)));
    }
    match metric {
        Metric::D3 => assemble("marked_d3", metric, ing, vec![], |v| {
            (m / 2.0 * v[0] + 1.5 * m.powf(1.5) * v[1] + m * m / 4.0 * v[2], None)
        }),
        Metric::D2 => {
            let inv = target.require_pd()?;
            let op = target.op_norm;
            let c = constant("c_d2_gamma3");
            assemble("marked_d2", metric, ing, vec![("c_d2_gamma3", c)], |v| {
                (
                    inv * op.sqrt() * v[0] + 3.0 * inv * op * m.sqrt() * v[1] + c * inv.powf(1.5) * op * m * m * v[2],
                    None,
                )
            })
        }
        Metric::Hl(l) => {
            let inv = target.require_pd()?;
            if l == 0 {
                return Err(Error::Precondition("l must be >= 1".into()));
            }
            let lf = l as f64;
            let c = constant("c_hl");
            assemble("marked_dHl", metric, ing, vec![("c_hl", c)], |v| {
                let (mx, d) = arg_max(&[
                    ("cov_discrepancy", v[0]),
                    ("Gamma1", v[1]),
                    ("Gamma3", v[3]),
                    ("sqrt(l Gamma4)", lf.sqrt() * v[4].sqrt() / inv.powf(0.25)),
                ]);
                (c * m.powf(65.0 / 24.0) * lf * inv * mx, d)
            })
        }
        Metric::Convex => {
            let inv = target.require_pd()?;
            let inputs = convex.ok_or_else(|| Error::Precondition("marked d_convex bound needs rho and lambda(A)".into()))?;
            let rho = check_convex_inputs(inputs)?;
            let la = inputs.lambda_a;
            let c = constant("c_convex");
            let c3 = constant("c_convex_rho3");
            let mut ing = ing;
            ing.push(Ingredient::exact("tail", inputs.tail));
            assemble("marked_dconvex", metric, ing, vec![("c_convex", c), ("c_convex_rho3", c3)], |v| {
                let (mx, d) = arg_max(&[
                    ("cov_discrepancy", v[0]),
                    ("Gamma1", v[1]),
                    ("Gamma3", v[3]),
                    ("rho^3 lambda(A)", c3 * inv.sqrt() * rho.powi(3) * la),
                    ("sqrt(rho^4 lambda(A))", (rho.powi(4) * la).sqrt() / inv.powf(0.25)),
                    ("tail", v[5] / (m * inv * la)),
                ]);
                (c * m.powi(5) * inv * mx, d)
            })
        }
    }
}

/// Ingredients of a vector of first-order integrals F = (I_1(f_i)):
/// disc against Sigma and the sums over i of int |f_i|^k d lambda.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderInputs {
    pub disc: f64,
    pub int_abs3: f64,
    pub int4: f64,
    pub int6: f64,
    /// sup |f_i| and lambda(X), for the d_convex bound.
    pub rho_lambda: Option<(f64, f64)>,
}

/// Direct bounds for first-order integrals (D^2 = 0).
pub fn first_order_bounds(x: &FirstOrderInputs, target: &GaussianTarget, l: usize) -> Result<Vec<BoundReport>> {
    let m = target.dim() as f64;
    let ing = vec![
        Ingredient::exact("cov_discrepancy", x.disc),
        Ingredient::exact("int|f|^3", x.int_abs3),
        Ingredient::exact("int f^4", x.int4),
        Ingredient::exact("int f^6", x.int6),
    ];
    let mut out = vec![assemble("first_order_d3", Metric::D3, ing.clone(), vec![], |v| {
        (m / 2.0 * v[0] + m * m / 4.0 * v[1], None)
    })?];
    let inv = match target.inv_op_norm {
        Some(i) => i,
        None => return Ok(out),
    };
    let op = target.op_norm;
    let c2 = constant("c_d2_gamma3");
    out.push(assemble("first_order_d2", Metric::D2, ing.clone(), vec![("c_d2_gamma3", c2)], |v| {
        (inv * op.sqrt() * v[0] + c2 * m * m * inv.powf(1.5) * op * v[1], None)
    })?);
    if l == 0 {
        return Err(Error::Precondition("l must be >= 1".into()));
    }
    let lf = l as f64;
    let ch = constant("c_hl");
    out.push(assemble("first_order_dHl", Metric::Hl(l), ing.clone(), vec![("c_hl", ch)], |v| {
        let (mx, d) = arg_max(&[("cov_discrepancy", v[0]), ("sqrt(int f^4)", v[2].sqrt()), ("(int f^6)^(1/4)", v[3].powf(0.25))]);
        (ch * m.powf(59.0 / 24.0) * lf.powf(1.5) * inv.max(inv.powf(0.75)) * mx, d)
    })?);
    if let Some((rho, lam)) = x.rho_lambda {
        let cc = constant("c_convex_first_order");
        out.push(assemble("first_order_dconvex", Metric::Convex, ing, vec![("c_convex_first_order", cc)], |v| {
            let (mx, d) = arg_max(&[
                ("cov_discrepancy", v[0]),
                ("rho^3 lambda", rho.powi(3) * lam),
                ("rho^2 sqrt(lambda)", rho * rho * lam.sqrt()),
            ]);
            (cc * m.powi(5) * inv.powf(0.75).max(inv.powf(1.5)) * mx, d)
        })?);
    }
    Ok(out)
}

/// Moments of the marks of a compound Poisson sum, summed over coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkMoments {
    pub abs3: f64,
    pub m4: f64,
    pub m6: f64,
    /// Almost-sure bound on |X^(i)|.
    pub a: Option<f64>,
}

impl MarkMoments {
    pub fn rademacher(m: usize) -> Self {
        let mf = m as f64;
        MarkMoments { abs3: mf, m4: mf, m6: mf, a: Some(1.0) }
    }

    /// Coordinates uniform on [-a, a].
    pub fn uniform(m: usize, a: f64) -> Self {
        let mf = m as f64;
        MarkMoments { abs3: mf * a.powi(3) / 4.0, m4: mf * a.powi(4) / 5.0, m6: mf * a.powi(6) / 7.0, a: Some(a) }
    }
}

/// Bounds for the standardized compound Poisson sum at intensity s, against
/// its exact covariance.
pub fn compound_sum_bounds(mm: &MarkMoments, target: &GaussianTarget, s: f64, l: usize) -> Result<Vec<BoundReport>> {
    if !(s > 0.0) {
        return Err(Error::Precondition("s must be > 0".into()));
    }
    let rs = s.sqrt();
    first_order_bounds(
        &FirstOrderInputs {
            disc: 0.0,
            int_abs3: mm.abs3 / rs,
            int4: mm.m4 / s,
            int6: mm.m6 / (s * s),
            rho_lambda: mm.a.map(|a| (a / rs, s)),
        },
        target,
        l,
    )
}

/// Fitted exponent of value ~ C s^slope.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_points: usize,
    pub n_boot: usize,
}

impl RateFit {
    pub fn constant(&self) -> f64 {
        self.intercept.exp()
    }
}

/// Least-squares slope of log value against log scale, with a 95% bootstrap
/// interval. Points are (scale, value, std_error). With standard errors the
/// bootstrap is parametric (log value perturbed by se/value); without them
/// the residuals are resampled.
pub fn rate_slope(points: &[(f64, f64, f64)], n_boot: usize, seed: u64) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::Precondition("rate fit needs at least 3 scales".into()));
    }
    for &(s, v, se) in points {
        if !(s > 0.0 && v > 0.0) || se < 0.0 || !se.is_finite() {
            return Err(Error::Precondition(format!("rate fit needs positive scales and values; got ({s}, {v})")));
        }
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    if x.iter().all(|v| (v - x[0]).abs() < 1e-12) {
        return Err(Error::Precondition("rate fit needs distinct scales".into()));
    }
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (intercept, slope) = stats::linear_fit(&x, &y);
    let resid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - intercept - slope * a).collect();
    let parametric = points.iter().any(|p| p.2 > 0.0);
    let mut rng = RngStream::new(seed, 0xB007).rng();
    let n = points.len();
    let mut slopes = Vec::with_capacity(n_boot);
    let mut yb = vec![0.0; n];
    for _ in 0..n_boot {
        for k in 0..n {
            yb[k] = if parametric {
                let z: f64 = StandardNormal.sample(&mut rng);
                y[k] + z * points[k].2 / points[k].1
            } else {
                let j = (crate::model::unit_f64(&mut rng) * n as f64) as usize;
                intercept + slope * x[k] + resid[j.min(n - 1)]
            };
        }
        slopes.push(stats::linear_fit(&x, &yb).1);
    }
    let (ci_low, ci_high) = if slopes.is_empty() {
        (slope, slope)
    } else {
        slopes.sort_by(|a, b| a.total_cmp(b));
        (stats::quantile_sorted(&slopes, 0.025), stats::quantile_sorted(&slopes, 0.975))
    };
    Ok(RateFit { slope, intercept, ci_low, ci_high, n_points: n, n_boot })
}
