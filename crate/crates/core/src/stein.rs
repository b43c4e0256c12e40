//! Smoothed indicators, the smoothed Stein solution f_{t,h,Sigma} and its
//! partial derivatives, the constants M2 and M3, and checks of the smoothing
//! and second-moment inequalities.
//!
//! All s-integrals over [t, 1] are taken in the variable u = sqrt(1 - s),
//! which removes the (1 - s)^{-1/2} endpoint singularity, and evaluated by
//! Gauss-Legendre on [0, sqrt(1 - t)]. Inner Gaussian expectations are plain
//! Monte Carlo over one table of draws shared by every y and every node.

use crate::distance::{
    estimate_dconvex, estimate_dhl, exact_region_prob, ConvexCatalog, DistanceEstimate, GaussPool, Samples,
    SearchBudget,
};
use crate::error::{Error, Result};
use crate::linalg::{GaussianTarget, Mat};
use crate::model::EstimateWithError;
use crate::report::CheckRow;
use crate::sampler::{gaussian_table, standard_normals, RngStream};
use crate::special::{gauss_legendre, integrate_adaptive, norm_pdf};
use crate::stats;
use crate::testfn::TestFunction;
use rand::RngCore;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Attached to every report whose left side is a search over a catalog.
pub const SUP_NOTE: &str =
    "supremum replaced by a finite catalog: the left side is a lower estimate, so a pass is a necessary condition only";

#[derive(Debug, Clone, Copy)]
pub struct SteinConfig {
    /// Gaussian draws for the inner expectations.
    pub n_inner: usize,
    /// Gauss-Legendre nodes in u = sqrt(1 - s).
    pub n_nodes: usize,
    pub seed: u64,
}

impl Default for SteinConfig {
    fn default() -> Self {
        SteinConfig { n_inner: 20_000, n_nodes: 32, seed: 0x57E1 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    u: f64,
    s: f64,
    sqrt_s: f64,
    weight: f64,
}

/// f_{t,h,Sigma} with its quadrature: the draws z ~ N_Sigma and w = Sigma^{-1} z.
#[derive(Debug, Clone)]
pub struct SteinSolution {
    pub h: TestFunction,
    pub t: f64,
    pub target: GaussianTarget,
    pub config: SteinConfig,
    precision: Mat,
    z: Vec<f64>,
    w: Vec<f64>,
    nodes: Vec<Node>,
}

/// Partial derivatives of one order, row-major over m^order indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Partials {
    pub order: usize,
    pub m: usize,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

impl Partials {
    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, i| acc * self.m + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.flat(idx)]
    }

    pub fn std_error(&self, idx: &[usize]) -> f64 {
        self.std_errors[self.flat(idx)]
    }

    /// max |entry| and the standard error of that entry.
    pub fn max_abs(&self) -> (f64, f64) {
        let mut best = (0.0, 0.0);
        for (v, se) in self.values.iter().zip(&self.std_errors) {
            if v.abs() > best.0 {
                best = (v.abs(), *se);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    /// h_t(y) - E h(N_Sigma)
    pub lhs: f64,
    /// <y, grad f> - <Sigma, Hess f>
    pub rhs: f64,
    pub se: f64,
}

impl Residual {
    pub fn value(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Sorted index tuples of length `order` over 0..m.
fn canonical_tuples(m: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..order {
        let mut next = Vec::new();
        for t in &out {
            let lo = t.last().copied().unwrap_or(0);
            for i in lo..m {
                let mut u = t.clone();
                u.push(i);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

fn all_tuples(m: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..order {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..m).map(move |i| {
                    let mut u = t.clone();
                    u.push(i);
                    u
                })
            })
            .collect();
    }
    out
}

/// d^k phi_Sigma / phi_Sigma at the canonical tuple, from w = Sigma^{-1} z.
fn density_ratio(idx: &[usize], w: &[f64], p: &Mat) -> f64 {
    match idx {
        [i] => -w[*i],
        [i, j] => w[*i] * w[*j] - p[(*i, *j)],
        [i, j, k] => {
            let (i, j, k) = (*i, *j, *k);
            -(w[i] * w[j] * w[k]) + p[(i, j)] * w[k] + p[(i, k)] * w[j] + p[(j, k)] * w[i]
        }
        _ => unreachable!("orders 1..=3"),
    }
}

impl SteinSolution {
    pub fn new(h: TestFunction, t: f64, target: GaussianTarget, config: SteinConfig) -> Result<Self> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Precondition(format!("smoothing parameter t = {t} must lie in (0, 1)")));
        }
        if h.dim() != target.dim() {
            return Err(Error::Dimension { expected: target.dim(), got: h.dim() });
        }
        target.require_pd()?;
        if config.n_inner == 0 || config.n_nodes == 0 {
            return Err(Error::Precondition("need n_inner >= 1 and n_nodes >= 1".into()));
        }
        let precision = target.inverse.clone().expect("positive definite");
        let m = target.dim();
        let z = gaussian_table(&target, config.n_inner, &RngStream::new(config.seed, 0x5731));
        let mut w = vec![0.0; z.len()];
        for (zr, wr) in z.chunks_exact(m).zip(w.chunks_exact_mut(m)) {
            wr.copy_from_slice(&precision.matvec(zr));
        }
        let (x, wt) = gauss_legendre(config.n_nodes);
        let top = (1.0 - t).sqrt();
        let nodes = x
            .iter()
            .zip(&wt)
            .map(|(xi, wi)| {
                let u = 0.5 * top * (xi + 1.0);
                let s = 1.0 - u * u;
                Node { u, s, sqrt_s: s.sqrt(), weight: 0.5 * top * wi }
            })
            .collect();
        Ok(SteinSolution { h, t, target, config, precision, z, w, nodes })
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    fn is_constant(&self) -> bool {
        matches!(self.h, TestFunction::Whole { .. })
    }

    /// Per-draw node sums for [value, order 1, order 2, order 3]; the order-k
    /// entry carries (-1)^k from the chain rule and multiplies the ratio
    /// d^k phi / phi. h is evaluated once per node.
    fn draw_sums(&self, y: &[f64], k: usize, buf: &mut [f64]) -> [f64; 4] {
        let m = self.dim();
        let z = &self.z[k * m..(k + 1) * m];
        let h0 = self.h.indicator(z);
        let mut a = [0.0; 4];
        for nd in &self.nodes {
            for i in 0..m {
                buf[i] = nd.sqrt_s * z[i] + nd.u * y[i];
            }
            let hv = self.h.indicator(buf);
            a[0] += nd.weight * (hv - h0) / nd.u;
            if hv != 0.0 {
                a[1] -= nd.weight * hv / nd.sqrt_s;
                a[2] += nd.weight * hv * nd.u / nd.s;
                a[3] -= nd.weight * hv * nd.u * nd.u / (nd.s * nd.sqrt_s);
            }
        }
        a
    }

    fn all_sums(&self, y: &[f64]) -> Vec<[f64; 4]> {
        let m = self.dim();
        (0..self.config.n_inner)
            .into_par_iter()
            .map_init(|| vec![0.0; m], |buf, k| self.draw_sums(y, k, buf))
            .collect()
    }

    fn check_point(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: y.len() });
        }
        Ok(())
    }

    /// f_{t,h,Sigma}(y).
    pub fn value(&self, y: &[f64]) -> Result<EstimateWithError> {
        self.check_point(y)?;
        let v: Vec<f64> = self.all_sums(y).iter().map(|a| a[0]).collect();
        Ok(EstimateWithError::from_samples(&v, self.config.seed))
    }

    /// All partial derivatives of the given order; entries that differ by an
    /// index permutation share one computation.
    pub fn derivatives(&self, y: &[f64], order: usize) -> Result<Partials> {
        self.check_point(y)?;
        if !(1..=3).contains(&order) {
            return Err(Error::Precondition("derivative order must be 1, 2 or 3".into()));
        }
        let m = self.dim();
        let size = m.pow(order as u32);
        let mut out = Partials { order, m, values: vec![0.0; size], std_errors: vec![0.0; size] };
        if self.is_constant() {
            return Ok(out);
        }
        let sums = self.all_sums(y);
        let mut canon = Vec::new();
        for idx in canonical_tuples(m, order) {
            let vals: Vec<f64> = sums
                .iter()
                .enumerate()
                .map(|(k, a)| a[order] * density_ratio(&idx, &self.w[k * m..(k + 1) * m], &self.precision))
                .collect();
            canon.push((idx, stats::mean(&vals), stats::std_error(&vals)));
        }
        for idx in all_tuples(m, order) {
            let mut key = idx.clone();
            key.sort_unstable();
            let (_, v, se) = canon.iter().find(|c| c.0 == key).expect("canonical tuple");
            let f = out.flat(&idx);
            out.values[f] = *v;
            out.std_errors[f] = *se;
        }
        Ok(out)
    }

    /// Both sides of the Stein equation at y. The left side uses two
    /// streams independent of the solution's draws.
    pub fn residual(&self, y: &[f64], n_lhs: usize) -> Result<Residual> {
        self.check_point(y)?;
        if self.is_constant() {
            return Ok(Residual { lhs: 0.0, rhs: 0.0, se: 0.0 });
        }
        let m = self.dim() as f64;
        let md = self.dim();
        let sums = self.all_sums(y);
        let per: Vec<f64> = sums
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let z = &self.z[k * md..(k + 1) * md];
                let w = &self.w[k * md..(k + 1) * md];
                let yw: f64 = y.iter().zip(w).map(|(a, b)| a * b).sum();
                let zw: f64 = z.iter().zip(w).map(|(a, b)| a * b).sum();
                -a[1] * yw - a[2] * (zw - m)
            })
            .collect();
        let rhs = stats::mean(&per);
        let rhs_se = stats::std_error(&per);
        let ht = smooth_h(&self.h, self.t, &self.target, y, n_lhs, self.config.seed ^ 0x1111)?;
        let eh = mc_region_prob(&self.target, &self.h, n_lhs, self.config.seed ^ 0x2222);
        let se = (rhs_se * rhs_se + ht.std_error * ht.std_error + eh.std_error * eh.std_error).sqrt();
        Ok(Residual { lhs: ht.value - eh.value, rhs, se })
    }
}

fn mc_region_prob(target: &GaussianTarget, h: &TestFunction, n: usize, seed: u64) -> EstimateWithError {
    let pool = GaussPool::new(target, n, seed);
    let (p, se) = pool.prob(h);
    EstimateWithError { value: p, std_error: se, n_replicates: n, seed }
}

/// h_{t,Sigma}(y) = E h(sqrt(t) N_Sigma + sqrt(1 - t) y) by Monte Carlo.
pub fn smooth_h(h: &TestFunction, t: f64, target: &GaussianTarget, y: &[f64], n: usize, seed: u64) -> Result<EstimateWithError> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Precondition(format!("smoothing parameter t = {t} must lie in (0, 1)")));
    }
    if y.len() != target.dim() || h.dim() != target.dim() {
        return Err(Error::Dimension { expected: target.dim(), got: y.len() });
    }
    if n == 0 {
        return Err(Error::Precondition("n >= 1".into()));
    }
    if let TestFunction::Whole { .. } = h {
        return Ok(EstimateWithError::exact(1.0));
    }
    let m = target.dim();
    let z = gaussian_table(target, n, &RngStream::new(seed, 0x5300));
    let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
    let mut buf = vec![0.0; m];
    let vals: Vec<f64> = z
        .chunks_exact(m)
        .map(|zr| {
            for i in 0..m {
                buf[i] = a * zr[i] + b * y[i];
            }
            h.indicator(&buf)
        })
        .collect();
    Ok(EstimateWithError::from_samples(&vals, seed))
}

/// E h_{t,Sigma}(Y) over a sample, one fresh Gaussian per sample point.
pub fn smoothed_expectation(h: &TestFunction, t: f64, target: &GaussianTarget, samples: &Samples, seed: u64) -> EstimateWithError {
    let m = samples.m;
    let z = gaussian_table(target, samples.n, &RngStream::new(seed, 0x5301));
    let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
    let mut buf = vec![0.0; m];
    let vals: Vec<f64> = (0..samples.n)
        .map(|k| {
            let (zr, yr) = (&z[k * m..(k + 1) * m], samples.row(k));
            for i in 0..m {
                buf[i] = a * zr[i] + b * yr[i];
            }
            h.indicator(&buf)
        })
        .collect();
    EstimateWithError::from_samples(&vals, seed)
}

/// The two one-dimensional blocks: int |phi''| = 4 phi(1) and
/// int |phi'| = 2 phi(0), by quadrature.
pub fn m2_building_blocks() -> (f64, f64) {
    let d2 = |z: f64| ((z * z - 1.0) * norm_pdf(z)).abs();
    let d1 = |z: f64| (z * norm_pdf(z)).abs();
    let second = 2.0 * (integrate_adaptive(&d2, 0.0, 1.0, 1e-13) + integrate_adaptive(&d2, 1.0, 40.0, 1e-13));
    let first = 2.0 * integrate_adaptive(&d1, 0.0, 40.0, 1e-13);
    (second, first)
}

/// (1/4) sum_ij (int |d_ij phi_I|)^2, assembled from the 1-D blocks.
pub fn constant_m2(m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Precondition("m >= 1".into()));
    }
    let (a, b) = m2_building_blocks();
    let m = m as f64;
    let v = 0.25 * (m * a * a + m * (m - 1.0) * b.powi(4));
    debug_assert!(v <= m * m);
    Ok(v)
}

/// E over N_I of the Frobenius norm of the third derivative ratio of phi_I,
/// i.e. int (sum_ijk (d_ijk phi_I)^2)^{1/2}.
pub fn constant_m3(m: usize, n: usize, seed: u64) -> Result<EstimateWithError> {
    if m == 0 || n < 2 {
        return Err(Error::Precondition("need m >= 1 and n >= 2".into()));
    }
    let root = RngStream::new(seed, 0x3300);
    let p = Mat::identity(m);
    let tuples = all_tuples(m, 3);
    let chunk = 4096;
    let vals: Vec<f64> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = root.derive(c as u64).rng();
            let len = chunk.min(n - c * chunk);
            let mut z = vec![0.0; len * m];
            standard_normals(&mut rng, &mut z);
            let tuples = &tuples;
            let p = &p;
            (0..len)
                .map(move |k| {
                    let w = &z[k * m..(k + 1) * m];
                    tuples.iter().map(|t| density_ratio(t, w, p).powi(2)).sum::<f64>().sqrt()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(EstimateWithError::from_samples(&vals, seed))
}

/// E[(N^3 - 3N)^2] for standard normal N, the one-dimensional block of M3.
pub fn hermite3_second_moment(n: usize, seed: u64) -> EstimateWithError {
    let mut z = vec![0.0; n];
    standard_normals(&mut RngStream::new(seed, 0x3301).rng(), &mut z);
    let vals: Vec<f64> = z.iter().map(|x| (x * x * x - 3.0 * x).powi(2)).collect();
    EstimateWithError::from_samples(&vals, seed)
}

pub fn bound_second_partials(m: usize, target: &GaussianTarget, t: f64) -> Result<f64> {
    let inv = target.require_pd()?;
    Ok((m * m) as f64 * inv * t.ln().abs())
}

pub fn bound_third_partials(m: usize, target: &GaussianTarget, t: f64) -> Result<f64> {
    let inv = target.require_pd()?;
    Ok(6.0 * (m as f64).powi(3) * inv.powf(1.5) / t.sqrt())
}

/// Random ell-fold half-space intersections in R^m with offsets N(0, 1).
pub fn random_halfspaces(m: usize, l: usize, count: usize, seed: u64) -> Vec<TestFunction> {
    let mut rng = RngStream::new(seed, 0x4A11).rng();
    (0..count)
        .map(|_| {
            let mut dirs = Vec::with_capacity(l);
            let mut offs = vec![0.0; l];
            for _ in 0..l {
                let mut u = vec![0.0; m];
                standard_normals(&mut rng, &mut u);
                dirs.push(u);
            }
            standard_normals(&mut rng, &mut offs);
            TestFunction::halfspaces(dirs, offs).expect("nonzero directions")
        })
        .collect()
}

/// Which class the second-moment and smoothing checks range over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestClass {
    Halfspaces(usize),
    Convex,
}

#[derive(Debug, Clone)]
pub struct SecondMomentReport {
    pub row: CheckRow,
    pub distance: DistanceEstimate,
    /// E sum_ij (d_ij f)^2 per catalog entry.
    pub per_function: Vec<EstimateWithError>,
    pub note: &'static str,
}

/// Catalog version of sup_h E sum_ij (d_ij f_{t,h,Sigma}(Y))^2 against
/// ||Sigma^{-1}||^2 (M2 (log t)^2 d(Y, N_Sigma) + 444 m^{23/6}), where d is
/// d_{H_{2l}} or d_convex by the class. `lhs_points` rows of `samples` are
/// used for the left side, all rows for the distance.
#[allow(clippy::too_many_arguments)]
pub fn check_second_moment(
    samples: &Samples,
    target: &GaussianTarget,
    t: f64,
    class: TestClass,
    catalog: &[TestFunction],
    lhs_points: usize,
    config: SteinConfig,
    budget: &SearchBudget,
) -> Result<SecondMomentReport> {
    let inv = target.require_pd()?;
    let m = target.dim();
    let k = lhs_points.min(samples.n);
    if k < 2 || catalog.is_empty() {
        return Err(Error::Precondition("need >= 2 left-side points and a nonempty catalog".into()));
    }
    let mut per_function = Vec::with_capacity(catalog.len());
    for h in catalog {
        let sol = SteinSolution::new(h.clone(), t, target.clone(), config)?;
        let vals: Vec<f64> = (0..k)
            .map(|r| {
                let d = sol.derivatives(samples.row(r), 2)?;
                Ok(d.values.iter().map(|v| v * v).sum::<f64>())
            })
            .collect::<Result<_>>()?;
        per_function.push(EstimateWithError::from_samples(&vals, config.seed));
    }
    let best = per_function
        .iter()
        .copied()
        .fold(EstimateWithError::exact(f64::NEG_INFINITY), |a, b| if b.value > a.value { b } else { a });
    let distance = match class {
        TestClass::Halfspaces(l) => estimate_dhl(samples, target, 2 * l, budget)?,
        TestClass::Convex => estimate_dconvex(samples, target, &ConvexCatalog::standard(m), budget)?,
    };
    let rhs = inv * inv * (constant_m2(m)? * t.ln().powi(2) * distance.value + 444.0 * (m as f64).powf(23.0 / 6.0));
    let name = match class {
        TestClass::Halfspaces(l) => format!("second_moment_H{l}"),
        TestClass::Convex => "second_moment_convex".to_string(),
    };
    Ok(SecondMomentReport {
        row: CheckRow::le(name, best.value, rhs, best.std_error),
        distance,
        per_function,
        note: SUP_NOTE,
    })
}

/// sup over a catalog of |E h_t(Y) - E h(N_Sigma)|; the Gaussian side is
/// exact where a closed form exists (sqrt(t) N' + sqrt(1-t) N ~ N_Sigma).
fn smoothed_sup(
    samples: &Samples,
    target: &GaussianTarget,
    t: f64,
    catalog: &[TestFunction],
    n_gauss: usize,
    seed: u64,
) -> (f64, f64) {
    let mut best = (0.0, 0.0);
    for (i, h) in catalog.iter().enumerate() {
        let e = smoothed_expectation(h, t, target, samples, seed.wrapping_add(i as u64));
        let g = match exact_region_prob(target, h) {
            Some(p) => EstimateWithError::exact(p),
            None => mc_region_prob(target, h, n_gauss, seed ^ 0x77),
        };
        let gap = (e.value - g.value).abs();
        if gap > best.0 {
            best = (gap, (e.std_error.powi(2) + g.std_error.powi(2)).sqrt());
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct SmoothingReport {
    pub rows: Vec<CheckRow>,
    pub note: &'static str,
}

/// The two smoothing inequalities and affine invariance of the d_Hl
/// estimate under a random invertible map `theta`.
#[allow(clippy::too_many_arguments)]
pub fn check_smoothing_lemmas(
    samples: &Samples,
    target: &GaussianTarget,
    t: f64,
    l: usize,
    catalog: &[TestFunction],
    theta: &Mat,
    budget: &SearchBudget,
    seed: u64,
) -> Result<SmoothingReport> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Precondition(format!("smoothing parameter t = {t} must lie in (0, 1)")));
    }
    target.require_pd()?;
    let m = target.dim() as f64;
    let binom = 0.5 / (samples.n as f64).sqrt();
    let mut rows = Vec::new();

    let dhl = estimate_dhl(samples, target, l, budget)?;
    let mut cat: Vec<TestFunction> = catalog.to_vec();
    cat.push(dhl.witness.clone());
    let (sup, sup_se) = smoothed_sup(samples, target, t, &cat, budget.n_gauss, seed);
    let rhs = 2.0 * sup + 24.0 * l as f64 * m.sqrt() / PI.sqrt() * t.sqrt();
    rows.push(CheckRow::le(format!("smoothing_H{l}"), dhl.value, rhs, (binom.powi(2) + 4.0 * sup_se.powi(2)).sqrt()));

    // The convex lemma is stated against N_I; whiten first.
    let white = samples.transformed(target.inv_sqrt.as_ref().expect("positive definite"));
    let id = GaussianTarget::identity(target.dim());
    let dc = estimate_dconvex(&white, &id, &ConvexCatalog::standard(target.dim()), budget)?;
    let mut ccat: Vec<TestFunction> = cat.iter().filter_map(|h| h.preimage(&target.sqrt)).collect();
    ccat.push(dc.witness.clone());
    let (csup, csup_se) = smoothed_sup(&white, &id, t, &ccat, budget.n_gauss, seed ^ 0xC0);
    let crhs = 4.0 / 3.0 * csup + 20.0 / PI.sqrt() * m * m * t.sqrt() / (1.0 - t);
    rows.push(CheckRow::le("smoothing_convex", dc.value, crhs, (binom.powi(2) + csup_se.powi(2)).sqrt()));

    let moved = samples.transformed(theta);
    let mtarget = target.transformed(theta)?;
    let dm = estimate_dhl(&moved, &mtarget, l, budget)?;
    let tol_se = (2.0 * binom.powi(2) + dhl.gaussian_prob_se.powi(2) + dm.gaussian_prob_se.powi(2)).sqrt();
    rows.push(CheckRow::close(format!("affine_invariance_H{l}"), dm.value, dhl.value, tol_se, 0.0));
    Ok(SmoothingReport { rows, note: SUP_NOTE })
}

/// Strip probability sup_{u,z} P(-w <= <u, N_I> - z <= w) = 2 Phi(w) - 1
/// against sqrt(2/pi) w.
pub fn check_stripe(w: f64) -> CheckRow {
    let exact = 2.0 * crate::special::norm_cdf(w) - 1.0;
    CheckRow::le(format!("stripe_w{w}"), exact, (2.0 / PI).sqrt() * w, 0.0)
}

#[derive(Debug, Clone)]
pub struct InverseDistanceReport {
    /// (shape witness, E d(N_I, boundary)^{-alpha})
    pub per_shape: Vec<(String, EstimateWithError)>,
    pub skipped: Vec<String>,
    pub row: CheckRow,
    pub note: &'static str,
}

pub fn inverse_distance_rhs(alpha: f64, m: usize) -> f64 {
    1.0 + 2.0 * (2.0 / PI).sqrt() * (m as f64).powf(1.5) * alpha / (1.0 - alpha)
}

/// E d(N_I, boundary of A)^{-alpha} over a catalog of convex sets, with the
/// exact distance formulas of half-spaces, balls and boxes.
pub fn check_inverse_distance(alpha: f64, m: usize, catalog: &[TestFunction], n: usize, seed: u64) -> Result<InverseDistanceReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition("alpha must lie in (0, 1)".into()));
    }
    if n < 2 {
        return Err(Error::Precondition("n >= 2".into()));
    }
    let probe = vec![0.0; m];
    let mut per_shape = Vec::new();
    let mut skipped = Vec::new();
    for (c, h) in catalog.iter().enumerate() {
        if h.dim() != m || h.distance_to_boundary(&probe).is_none() {
            skipped.push(h.to_witness());
            continue;
        }
        let root = RngStream::new(seed, 0x2500 + c as u64);
        let chunk = 8192;
        let vals: Vec<f64> = (0..n.div_ceil(chunk))
            .into_par_iter()
            .flat_map_iter(|b| {
                let mut rng = root.derive(b as u64).rng();
                let len = chunk.min(n - b * chunk);
                let mut z = vec![0.0; len * m];
                standard_normals(&mut rng as &mut dyn RngCore, &mut z);
                (0..len)
                    .map(|k| {
                        let d = h.distance_to_boundary(&z[k * m..(k + 1) * m]).expect("checked");
                        d.powf(-alpha)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        per_shape.push((h.to_witness(), EstimateWithError::from_samples(&vals, seed)));
    }
    let best = per_shape
        .iter()
        .map(|p| p.1)
        .fold(EstimateWithError::exact(0.0), |a, b| if b.value > a.value { b } else { a });
    let row = CheckRow::le(format!("inverse_distance_m{m}"), best.value, inverse_distance_rhs(alpha, m), best.std_error);
    Ok(InverseDistanceReport { per_shape, skipped, row, note: SUP_NOTE })
}

/// Half-spaces through and off the origin, unit and offset balls, and a
/// cube, in R^m.
pub fn standard_convex_catalog(m: usize) -> Vec<TestFunction> {
    let mut e1 = vec![0.0; m];
    e1[0] = 1.0;
    let mut diag = vec![1.0; m];
    let nd = (m as f64).sqrt();
    diag.iter_mut().for_each(|v| *v /= nd);
    vec![
        TestFunction::halfspace(e1.clone(), 0.0).expect("valid"),
        TestFunction::halfspace(diag, 0.5).expect("valid"),
        TestFunction::ball(vec![0.0; m], 1.0).expect("valid"),
        TestFunction::ball(e1.clone(), 0.5).expect("valid"),
        TestFunction::axis_box(vec![-1.0; m], vec![1.0; m]).expect("valid"),
        TestFunction::axis_box(vec![0.0; m], vec![2.0; m]).expect("valid"),
    ]
}
