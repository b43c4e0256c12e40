//! Nested Monte Carlo estimators of the bound ingredients gamma_1..gamma_5,
//! their marked counterparts Gamma_1..Gamma_4, covariances and the
//! covariance discrepancy.
//!
//! Outer tuples of probe points are drawn from the normalized intensity and
//! weighted by powers of the total mass W. For each tuple, `n_inner`
//! independent Poisson replicates give inner means; nonlinear functions of
//! those means (square roots, fractional powers) are applied per tuple, both
//! plug-in and jackknife-debiased. Outer averages use a pairwise sum in tuple
//! order, so results do not depend on the thread count.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::malliavin::{diff_batch_auto, DifferenceSample};
use crate::model::{EstimateWithError, FunctionalModel, Point, PoissonSpace};
use crate::sampler::{sample_probe, sample_space, RngStream};
use crate::stats;
use rayon::prelude::*;
use std::fmt::Write;

/// Differences at or below this magnitude count as zero.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedMcPlan {
    pub n_outer: usize,
    pub n_inner: usize,
    pub seed: u64,
}

impl NestedMcPlan {
    pub fn new(n_outer: usize, n_inner: usize, seed: u64) -> Result<Self> {
        let p = NestedMcPlan { n_outer, n_inner, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_outer < 2 || self.n_inner < 2 {
            return Err(Error::Precondition("nested plan needs n_outer >= 2 and n_inner >= 2".into()));
        }
        Ok(())
    }
}

/// One estimated ingredient.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTerm {
    pub name: &'static str,
    /// Plug-in estimate after clipping and the final transform.
    pub value: f64,
    pub std_error: f64,
    /// Jackknife-debiased variant, same clipping and transform.
    pub jackknife: f64,
    /// Outer average before clipping and the final transform.
    pub pre_clip: f64,
    /// The outer average fell below -3 s.e.
    pub unstable: bool,
    pub n_outer: usize,
    pub n_inner: usize,
    pub seed: u64,
}

impl GammaTerm {
    pub fn estimate(&self) -> EstimateWithError {
        EstimateWithError { value: self.value, std_error: self.std_error, n_replicates: self.n_outer, seed: self.seed }
    }

    pub fn zero(name: &'static str) -> Self {
        GammaTerm {
            name,
            value: 0.0,
            std_error: 0.0,
            jackknife: 0.0,
            pre_clip: 0.0,
            unstable: false,
            n_outer: 0,
            n_inner: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Finish {
    Identity,
    Sqrt,
}

fn snap(v: f64) -> f64 {
    if v.abs() <= ZERO_TOL {
        0.0
    } else {
        v
    }
}

fn nonzero(v: f64) -> f64 {
    if v.abs() > ZERO_TOL {
        1.0
    } else {
        0.0
    }
}

fn vec_nonzero(v: &[f64]) -> f64 {
    if v.iter().any(|x| x.abs() > ZERO_TOL) {
        1.0
    } else {
        0.0
    }
}

/// Shape of one outer tuple.
struct TupleSpec<'a> {
    n_locs: usize,
    pairs: &'a [(usize, usize)],
    /// Redraw probe marks for every inner replicate.
    fresh_marks: bool,
    stream: u64,
}

/// Per-tuple plug-in and jackknife values of g(inner means of q).
fn nested<F, Q, G>(f: &F, space: &PoissonSpace, plan: &NestedMcPlan, spec: &TupleSpec, q: Q, g: G) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FunctionalModel + ?Sized,
    Q: Fn(&DifferenceSample) -> Vec<f64> + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
{
    plan.validate()?;
    let root = RngStream::new(plan.seed, spec.stream);
    let n = plan.n_inner;
    let per: Vec<Result<(f64, f64)>> = (0..plan.n_outer)
        .into_par_iter()
        .map(|o| {
            let mut rng = root.derive(o as u64).rng();
            let mut probes: Vec<Point> =
                (0..spec.n_locs).map(|_| sample_probe(space, &mut rng)).collect::<Result<_>>()?;
            let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
            for r in 0..n {
                let mut rr = root.for_replicate(o as u64, r as u64 + 1).rng();
                if spec.fresh_marks {
                    if let Some(ms) = &space.marks {
                        for p in probes.iter_mut() {
                            p.mark = Some(ms.sample(&mut rr));
                        }
                    }
                }
                let eta = sample_space(space, &mut rr)?;
                let d = diff_batch_auto(f, &eta, &probes, spec.pairs);
                rows.push(q(&d));
            }
            let k = rows[0].len();
            let mut tot = vec![0.0; k];
            for row in &rows {
                for (t, v) in tot.iter_mut().zip(row) {
                    *t += v;
                }
            }
            let nf = n as f64;
            let mean: Vec<f64> = tot.iter().map(|t| t / nf).collect();
            let plug = g(&mean);
            let mut loo = vec![0.0; k];
            let mut acc = Vec::with_capacity(n);
            for row in &rows {
                for j in 0..k {
                    loo[j] = (tot[j] - row[j]) / (nf - 1.0);
                }
                acc.push(g(&loo));
            }
            let jack = nf * plug - (nf - 1.0) * stats::mean(&acc);
            Ok((plug, jack))
        })
        .collect();
    let mut plug = Vec::with_capacity(plan.n_outer);
    let mut jack = Vec::with_capacity(plan.n_outer);
    for r in per {
        let (a, b) = r?;
        plug.push(a);
        jack.push(b);
    }
    Ok((plug, jack))
}

fn finish_term(name: &'static str, plan: &NestedMcPlan, plug: &[f64], jack: &[f64], how: Finish, scale: f64) -> GammaTerm {
    let mean = stats::mean(plug);
    let se = stats::std_error(plug);
    let jm = stats::mean(jack);
    let unstable = mean < -3.0 * se;
    let (value, std_error, jackknife) = match how {
        Finish::Identity => (mean.max(0.0), se, jm.max(0.0)),
        Finish::Sqrt => {
            let c = mean.max(0.0);
            (c.sqrt(), (c + se).sqrt() - c.sqrt(), jm.max(0.0).sqrt())
        }
    };
    GammaTerm {
        name,
        value: scale * value,
        std_error: scale * std_error,
        jackknife: scale * jackknife,
        pre_clip: mean,
        unstable,
        n_outer: plan.n_outer,
        n_inner: plan.n_inner,
        seed: plan.seed,
    }
}

/// sum_i int E|D_x F_i|^3 lambda(dx)
pub fn estimate_gamma3<F: FunctionalModel + ?Sized>(f: &F, space: &PoissonSpace, plan: &NestedMcPlan) -> Result<GammaTerm> {
    let w = space.total_mass();
    let spec = TupleSpec { n_locs: 1, pairs: &[], fresh_marks: false, stream: 0x6A03 };
    let (p, j) = nested(
        f,
        space,
        plan,
        &spec,
        |d| d.d1[0].iter().map(|v| v.abs().powi(3)).collect(),
        |m| w * m.iter().sum::<f64>(),
    )?;
    Ok(finish_term("gamma3", plan, &p, &j, Finish::Identity, 1.0))
}

/// gamma_1 and gamma_2 from shared triples (x1, x2, x3).
pub fn estimate_gamma1_gamma2<F: FunctionalModel + ?Sized>(
    f: &F,
    space: &PoissonSpace,
    plan: &NestedMcPlan,
) -> Result<(GammaTerm, GammaTerm)> {
    let m = f.output_dim();
    let w3 = space.total_mass().powi(3);
    let pairs = [(0, 2), (1, 2)];
    let spec = TupleSpec { n_locs: 3, pairs: &pairs, fresh_marks: false, stream: 0x6A12 };
    // q = [(D2_13 D2_23)_i^2 for i] ++ [(D_1 D_2)_j^2 for j]
    let q = |d: &DifferenceSample| -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * m);
        for i in 0..m {
            v.push((snap(d.d2[0][i]) * snap(d.d2[1][i])).powi(2));
        }
        for j in 0..m {
            v.push((d.d1[0][j] * d.d1[1][j]).powi(2));
        }
        v
    };
    let a_sum = |v: &[f64]| v[..m].iter().map(|x| x.max(0.0).sqrt()).sum::<f64>();
    let b_sum = |v: &[f64]| v[m..].iter().map(|x| x.max(0.0).sqrt()).sum::<f64>();
    let (p1, j1) = nested(f, space, plan, &spec, q, |v| w3 * a_sum(v) * b_sum(v))?;
    let (p2, j2) = nested(f, space, plan, &spec, q, |v| w3 * a_sum(v).powi(2))?;
    Ok((
        finish_term("gamma1", plan, &p1, &j1, Finish::Sqrt, 1.0),
        finish_term("gamma2", plan, &p2, &j2, Finish::Sqrt, 1.0),
    ))
}

/// Pairs (x, y): the single-point terms use x with weight W, the two-point
/// terms (x, y) with weight W^2.
pub fn estimate_gamma4<F: FunctionalModel + ?Sized>(f: &F, space: &PoissonSpace, plan: &NestedMcPlan) -> Result<GammaTerm> {
    let m = f.output_dim();
    let mf = m as f64;
    let w = space.total_mass();
    let pairs = [(0, 1)];
    let spec = TupleSpec { n_locs: 2, pairs: &pairs, fresh_marks: false, stream: 0x6A04 };
    // q = [D_x F_k^4 for k] ++ [D2_xy F_j^4 for j]
    let q = |d: &DifferenceSample| -> Vec<f64> {
        let mut v: Vec<f64> = d.d1[0].iter().map(|x| x.powi(4)).collect();
        v.extend(d.d2[0].iter().map(|x| snap(*x).powi(4)));
        v
    };
    let g = |v: &[f64]| {
        let sb: f64 = v[..m].iter().sum();
        let rb: f64 = v[..m].iter().map(|x| x.max(0.0).sqrt()).sum();
        let ra: f64 = v[m..].iter().map(|x| x.max(0.0).sqrt()).sum();
        w * mf * sb + w * w * (6.0 * ra * rb + 3.0 * ra * ra)
    };
    let (p, j) = nested(f, space, plan, &spec, q, g)?;
    Ok(finish_term("gamma4", plan, &p, &j, Finish::Sqrt, 1.0))
}

pub fn estimate_gamma5<F: FunctionalModel + ?Sized>(f: &F, space: &PoissonSpace, plan: &NestedMcPlan) -> Result<GammaTerm> {
    let m = f.output_dim();
    let mf = m as f64;
    let w = space.total_mass();
    let pairs = [(0, 1)];
    let spec = TupleSpec { n_locs: 2, pairs: &pairs, fresh_marks: false, stream: 0x6A05 };
    // q = [D_x F_k^6 for k] ++ [|D2 F_i|^6 for i] ++ [1{D2 F != 0} |D_x F_i D_x F_j|^3 for i, j]
    let q = |d: &DifferenceSample| -> Vec<f64> {
        let d1 = &d.d1[0];
        let d2: Vec<f64> = d.d2[0].iter().map(|x| snap(*x)).collect();
        let ind = vec_nonzero(&d2);
        let mut v: Vec<f64> = d1.iter().map(|x| x.powi(6)).collect();
        v.extend(d2.iter().map(|x| x.abs().powi(6)));
        for i in 0..m {
            for j in 0..m {
                v.push(ind * (d1[i] * d1[j]).abs().powi(3));
            }
        }
        v
    };
    let g = |v: &[f64]| {
        let b = &v[..m];
        let c = &v[m..2 * m];
        let e = &v[2 * m..];
        let sb: f64 = b.iter().sum();
        let bs: f64 = b.iter().map(|x| x.max(0.0).cbrt()).sum();
        let cs: f64 = c.iter().map(|x| x.max(0.0).cbrt()).sum();
        let es: f64 = e.iter().map(|x| x.max(0.0).powf(2.0 / 3.0)).sum();
        w * mf * mf * sb
            + w * w * (8.0 * es * bs + 42.0 * cs * bs * bs + 42.0 * cs * cs * bs + 14.0 * cs * cs * cs)
    };
    let (p, j) = nested(f, space, plan, &spec, q, g)?;
    Ok(finish_term("gamma5", plan, &p, &j, Finish::Sqrt, 1.0))
}

/// Sample covariance with per-entry jackknife standard errors.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub matrix: Mat,
    pub std_errors: Mat,
    pub n: usize,
    pub seed: u64,
}

pub fn covariance_from_rows(rows: &[Vec<f64>], seed: u64) -> Result<CovarianceEstimate> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::Precondition("covariance needs n >= 3".into()));
    }
    let m = rows[0].len();
    let nf = n as f64;
    let means: Vec<f64> = (0..m).map(|i| stats::mean(&rows.iter().map(|r| r[i]).collect::<Vec<_>>())).collect();
    let mut matrix = Mat::zeros(m);
    let mut std_errors = Mat::zeros(m);
    for i in 0..m {
        for j in 0..=i {
            // Deviations from the full-sample means; leave-one-out values by
            // exact downdates of the centred sums.
            let x: Vec<f64> = rows.iter().map(|r| r[i] - means[i]).collect();
            let y: Vec<f64> = rows.iter().map(|r| r[j] - means[j]).collect();
            let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
            let sxy = stats::pairwise_sum(&xy);
            let sx = stats::pairwise_sum(&x);
            let sy = stats::pairwise_sum(&y);
            let c = (sxy - sx * sy / nf) / (nf - 1.0);
            let loo: Vec<f64> = (0..n)
                .map(|k| {
                    let (a, b, ab) = (sx - x[k], sy - y[k], sxy - xy[k]);
                    (ab - a * b / (nf - 1.0)) / (nf - 2.0)
                })
                .collect();
            let lm = stats::mean(&loo);
            let var = (nf - 1.0) / nf * loo.iter().map(|v| (v - lm) * (v - lm)).sum::<f64>();
            matrix[(i, j)] = c;
            matrix[(j, i)] = c;
            std_errors[(i, j)] = var.sqrt();
            std_errors[(j, i)] = var.sqrt();
        }
    }
    Ok(CovarianceEstimate { matrix, std_errors, n, seed })
}

/// Covariance of n independent evaluations of the centred functional.
pub fn estimate_covariance<F: FunctionalModel + ?Sized>(
    f: &F,
    space: &PoissonSpace,
    n: usize,
    seed: u64,
) -> Result<CovarianceEstimate> {
    let root = RngStream::new(seed, 0xC0F);
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.derive(r as u64).rng();
            Ok(f.centered(&sample_space(space, &mut rng)?))
        })
        .collect();
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    covariance_from_rows(&rows, seed)
}

/// sum_ij |sigma_ij - Cov(F_i, F_j)|; the error is the sum of the entry
/// errors (an upper bound whatever their correlation).
pub fn covariance_discrepancy(sigma: &Mat, cov: &CovarianceEstimate) -> Result<EstimateWithError> {
    let m = sigma.dim();
    if cov.matrix.dim() != m {
        return Err(Error::Dimension { expected: m, got: cov.matrix.dim() });
    }
    let mut v = 0.0;
    let mut se = 0.0;
    for i in 0..m {
        for j in 0..m {
            v += (sigma[(i, j)] - cov.matrix[(i, j)]).abs();
            se += cov.std_errors[(i, j)];
        }
    }
    Ok(EstimateWithError { value: v, std_error: se, n_replicates: cov.n, seed: cov.seed })
}

#[derive(Debug, Clone)]
pub struct GammaReport {
    pub gamma1: GammaTerm,
    pub gamma2: GammaTerm,
    pub gamma3: GammaTerm,
    pub gamma4: GammaTerm,
    pub gamma5: GammaTerm,
    pub cov: CovarianceEstimate,
    pub cov_discrepancy: EstimateWithError,
}

impl GammaReport {
    pub fn terms(&self) -> [&GammaTerm; 5] {
        [&self.gamma1, &self.gamma2, &self.gamma3, &self.gamma4, &self.gamma5]
    }

    pub fn any_unstable(&self) -> bool {
        self.terms().iter().any(|t| t.unstable)
    }

    /// Report built from known ingredient values (no estimation).
    pub fn from_values(g: [f64; 5], discrepancy: f64, m: usize) -> Self {
        let names = ["gamma1", "gamma2", "gamma3", "gamma4", "gamma5"];
        let t = |k: usize| GammaTerm { value: g[k], jackknife: g[k], pre_clip: g[k], ..GammaTerm::zero(names[k]) };
        GammaReport {
            gamma1: t(0),
            gamma2: t(1),
            gamma3: t(2),
            gamma4: t(3),
            gamma5: t(4),
            cov: CovarianceEstimate { matrix: Mat::zeros(m), std_errors: Mat::zeros(m), n: 0, seed: 0 },
            cov_discrepancy: EstimateWithError::exact(discrepancy),
        }
    }
}

/// All five gammas plus covariance against `sigma`.
pub fn estimate_gammas<F: FunctionalModel + ?Sized>(
    f: &F,
    space: &PoissonSpace,
    sigma: &Mat,
    plan: &NestedMcPlan,
    n_cov: usize,
) -> Result<GammaReport> {
    let (gamma1, gamma2) = estimate_gamma1_gamma2(f, space, plan)?;
    let gamma3 = estimate_gamma3(f, space, plan)?;
    let gamma4 = estimate_gamma4(f, space, plan)?;
    let gamma5 = estimate_gamma5(f, space, plan)?;
    let cov = estimate_covariance(f, space, n_cov, plan.seed ^ 0xC0)?;
    let cov_discrepancy = covariance_discrepancy(sigma, &cov)?;
    Ok(GammaReport { gamma1, gamma2, gamma3, gamma4, gamma5, cov, cov_discrepancy })
}

pub const GAMMA_CSV_HEADER: &str = "term,value,std_error,n_outer,n_inner,seed";

pub fn gamma_terms_to_csv(terms: &[&GammaTerm]) -> String {
    let mut s = String::from(GAMMA_CSV_HEADER);
    s.push('\n');
    for t in terms {
        let _ = writeln!(s, "{},{:?},{:?},{},{},{}", t.name, t.value, t.std_error, t.n_outer, t.n_inner, t.seed);
        let _ = writeln!(s, "{}_jackknife,{:?},{:?},{},{},{}", t.name, t.jackknife, t.std_error, t.n_outer, t.n_inner, t.seed);
    }
    s
}

impl GammaReport {
    pub fn to_csv(&self) -> String {
        let mut s = gamma_terms_to_csv(&self.terms());
        let d = &self.cov_discrepancy;
        let _ = writeln!(s, "cov_discrepancy,{:?},{:?},{},0,{}", d.value, d.std_error, d.n_replicates, d.seed);
        let m = self.cov.matrix.dim();
        for i in 0..m {
            for j in 0..m {
                let _ = writeln!(
                    s,
                    "cov_{i}{j},{:?},{:?},{},0,{}",
                    self.cov.matrix[(i, j)],
                    self.cov.std_errors[(i, j)],
                    self.cov.n,
                    self.cov.seed
                );
            }
        }
        s
    }
}

/// Marked ingredients, indexed 1..=4.
#[derive(Debug, Clone)]
pub struct BigGammaReport {
    pub c: f64,
    pub p: f64,
    pub big1: GammaTerm,
    pub big2: GammaTerm,
    pub big3: GammaTerm,
    pub big4: GammaTerm,
}

impl BigGammaReport {
    pub fn terms(&self) -> [&GammaTerm; 4] {
        [&self.big1, &self.big2, &self.big3, &self.big4]
    }

    pub fn from_values(g: [f64; 4], c: f64, p: f64) -> Self {
        let names = ["Gamma1", "Gamma2", "Gamma3", "Gamma4"];
        let t = |k: usize| GammaTerm { value: g[k], jackknife: g[k], pre_clip: g[k], ..GammaTerm::zero(names[k]) };
        BigGammaReport { c, p, big1: t(0), big2: t(1), big3: t(2), big4: t(3) }
    }
}

fn check_cp(c: f64, p: f64) -> Result<()> {
    if !(c > 0.0 && p > 0.0 && c.is_finite() && p.is_finite()) {
        return Err(Error::Precondition("need c > 0 and p > 0".into()));
    }
    Ok(())
}

/// One of Gamma_1..Gamma_4 (k = 1..=4) with marks resampled per replicate.
pub fn estimate_big_gamma<F: FunctionalModel + ?Sized>(
    k: usize,
    f: &F,
    space: &PoissonSpace,
    c: f64,
    p: f64,
    plan: &NestedMcPlan,
) -> Result<GammaTerm> {
    check_cp(c, p)?;
    let m = f.output_dim();
    let w = space.total_mass();
    match k {
        1 => {
            let a = p / (16.0 + 4.0 * p);
            let pairs = [(0, 1), (0, 2)];
            let spec = TupleSpec { n_locs: 3, pairs: &pairs, fresh_marks: true, stream: 0x6B01 };
            let q = |d: &DifferenceSample| -> Vec<f64> {
                let mut v: Vec<f64> = d.d2[0].iter().map(|x| nonzero(*x)).collect();
                v.extend(d.d2[1].iter().map(|x| nonzero(*x)));
                v
            };
            let g = |v: &[f64]| w * w * w * (0..m).map(|i| v[i].powf(a) * v[m + i].powf(a)).sum::<f64>();
            let (pl, jk) = nested(f, space, plan, &spec, q, g)?;
            Ok(finish_term("Gamma1", plan, &pl, &jk, Finish::Sqrt, c.powf(2.0 / (4.0 + p))))
        }
        2 => {
            let e = (1.0 + p) / (4.0 + p);
            let spec = TupleSpec { n_locs: 1, pairs: &[], fresh_marks: true, stream: 0x6B02 };
            let q = |d: &DifferenceSample| -> Vec<f64> { d.d1[0].iter().map(|x| nonzero(*x)).collect() };
            let g = |v: &[f64]| w * v.iter().map(|x| x.powf(e)).sum::<f64>();
            let (pl, jk) = nested(f, space, plan, &spec, q, g)?;
            Ok(finish_term("Gamma2", plan, &pl, &jk, Finish::Identity, c.powf(3.0 / (4.0 + p))))
        }
        3 | 4 => {
            let (c2, e2, e1, cpow, name, stream) = if k == 3 {
                (9.0, p / (8.0 + 2.0 * p), p / (4.0 + p), 2.0 / (4.0 + p), "Gamma3", 0x6B03)
            } else {
                if p <= 2.0 {
                    return Err(Error::Precondition(format!(
                        "Gamma4 requires p > 2 (the Kolmogorov-type bound assumes p > 2); got p = {p}"
                    )));
                }
                (106.0, (p - 2.0) / (12.0 + 3.0 * p), (p - 2.0) / (4.0 + p), 3.0 / (4.0 + p), "Gamma4", 0x6B04)
            };
            let pairs = [(0, 1)];
            let spec = TupleSpec { n_locs: 2, pairs: &pairs, fresh_marks: true, stream };
            let q = |d: &DifferenceSample| -> Vec<f64> {
                let mut v: Vec<f64> = d.d2[0].iter().map(|x| nonzero(*x)).collect();
                v.extend(d.d1[0].iter().map(|x| nonzero(*x)));
                v
            };
            let g = |v: &[f64]| (0..m).map(|i| c2 * w * w * v[i].powf(e2) + w * v[m + i].powf(e1)).sum::<f64>();
            let (pl, jk) = nested(f, space, plan, &spec, q, g)?;
            Ok(finish_term(name, plan, &pl, &jk, Finish::Sqrt, c.powf(cpow)))
        }
        _ => Err(Error::Precondition("Gamma index must be 1..=4".into())),
    }
}

/// All four marked ingredients; p <= 2 is rejected because Gamma_4 needs p > 2.
pub fn estimate_big_gammas<F: FunctionalModel + ?Sized>(
    f: &F,
    space: &PoissonSpace,
    c: f64,
    p: f64,
    plan: &NestedMcPlan,
) -> Result<BigGammaReport> {
    check_cp(c, p)?;
    let big4 = estimate_big_gamma(4, f, space, c, p, plan)?;
    Ok(BigGammaReport {
        c,
        p,
        big1: estimate_big_gamma(1, f, space, c, p, plan)?,
        big2: estimate_big_gamma(2, f, space, c, p, plan)?,
        big3: estimate_big_gamma(3, f, space, c, p, plan)?,
        big4,
    })
}

/// Bounded-difference assumptions at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedDifferenceRow {
    pub s: f64,
    /// max over probes and replicates of sqrt(s) max(|D F_i|, |D^2 F_i|).
    pub a_hat: f64,
    pub as1_pass: bool,
    /// max over outer x of s int P(D^2_{x,y} F_i != 0)^{1/4} mu(dy).
    pub b_hat: f64,
    pub b_mean: f64,
    pub as2_pass: bool,
}

/// Checks the two bounded-difference assumptions for one scale; `space`
/// carries lambda = s mu. The y-integral uses `n_y` draws per outer x, each
/// with `plan.n_inner` replicates.
pub fn check_bounded_differences<F: FunctionalModel + ?Sized>(
    f: &F,
    space: &PoissonSpace,
    s: f64,
    a: f64,
    b: f64,
    n_y: usize,
    plan: &NestedMcPlan,
) -> Result<BoundedDifferenceRow> {
    plan.validate()?;
    if n_y == 0 || !(s > 0.0) {
        return Err(Error::Precondition("need n_y >= 1 and s > 0".into()));
    }
    let m = f.output_dim();
    let w = space.total_mass();
    let root = RngStream::new(plan.seed, 0x6C13);
    let per: Vec<Result<(f64, f64)>> = (0..plan.n_outer)
        .into_par_iter()
        .map(|o| {
            let mut rng = root.derive(o as u64).rng();
            let x = sample_probe(space, &mut rng)?;
            let mut probes = vec![x];
            for _ in 0..n_y {
                probes.push(sample_probe(space, &mut rng)?);
            }
            let pairs: Vec<(usize, usize)> = (1..=n_y).map(|k| (0, k)).collect();
            let mut hits = vec![vec![0.0; m]; n_y];
            let mut amax: f64 = 0.0;
            for r in 0..plan.n_inner {
                let mut rr = root.for_replicate(o as u64, r as u64 + 1).rng();
                let eta = sample_space(space, &mut rr)?;
                let d = diff_batch_auto(f, &eta, &probes, &pairs);
                for v in d.d1.iter().flatten().chain(d.d2.iter().flatten()) {
                    amax = amax.max(snap(*v).abs());
                }
                for (k, row) in d.d2.iter().enumerate() {
                    for i in 0..m {
                        hits[k][i] += nonzero(row[i]);
                    }
                }
            }
            let nf = plan.n_inner as f64;
            let mut best: f64 = 0.0;
            for i in 0..m {
                let v: f64 = hits.iter().map(|h| (h[i] / nf).powf(0.25)).sum::<f64>() / n_y as f64;
                best = best.max(w * v);
            }
            Ok((amax * s.sqrt(), best))
        })
        .collect();
    let mut a_hat: f64 = 0.0;
    let mut bs = Vec::with_capacity(plan.n_outer);
    for r in per {
        let (x, y) = r?;
        a_hat = a_hat.max(x);
        bs.push(y);
    }
    let b_hat = bs.iter().copied().fold(0.0, f64::max);
    Ok(BoundedDifferenceRow {
        s,
        a_hat,
        as1_pass: a_hat <= a * (1.0 + 1e-9),
        b_hat,
        b_mean: stats::mean(&bs),
        as2_pass: b_hat <= b,
    })
}
