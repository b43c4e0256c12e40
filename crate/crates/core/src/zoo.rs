//! Ready-made Poisson functionals with analytic reference quantities.

use crate::boolean::{wills_from_volumes, wills_functional_2d, BooleanModel2D, Disk, Raster};
use crate::distance::{estimate_dhl, DistanceEstimate, Samples, SearchBudget};
use crate::error::{Error, Result};
use crate::linalg::{GaussianTarget, Mat};
use crate::malliavin::{diff_batch_auto, DifferenceSample};
use crate::model::{unit_f64, CarrierSpace, FunctionalModel, MarkSpace, Point, PointConfiguration, PoissonSpace};
use crate::report::CheckRow;
use crate::sampler::{sample_probe, sample_space, RngStream};
use crate::special::gauss_legendre;
use crate::stats;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

/// Grid on which linear functionals accumulate their contributions. Sums of
/// grid values below 2^16 in magnitude are exact, so these functionals are
/// order independent and their first differences are exactly the
/// (rounded) contribution of the added point.
pub const DYADIC_BITS: i32 = 36;

pub fn dyadic(v: f64) -> f64 {
    let s = (DYADIC_BITS as f64).exp2();
    (v * s).round() / s
}

/// factor * (N(eta) - offset), N the number of points.
#[derive(Debug, Clone)]
pub struct CountModel {
    pub space: PoissonSpace,
    pub offset: f64,
    pub factor: f64,
}

impl CountModel {
    pub fn raw(space: PoissonSpace) -> Self {
        CountModel { space, offset: 0.0, factor: 1.0 }
    }

    /// (N - s) / sqrt(s) with s the total mass.
    pub fn standardized(space: PoissonSpace) -> Self {
        let s = space.total_mass();
        CountModel { space, offset: s, factor: 1.0 / s.sqrt() }
    }
}

impl FunctionalModel for CountModel {
    fn output_dim(&self) -> usize {
        1
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        vec![self.factor * (eta.len() as f64 - self.offset)]
    }
    fn mean_vector(&self) -> Vec<f64> {
        vec![self.factor * (self.space.total_mass() - self.offset)]
    }
    fn descriptor(&self) -> String {
        format!("count(factor={}, offset={})", self.factor, self.offset)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Number of unordered pairs at Euclidean distance <= r, times `factor`.
#[derive(Debug, Clone)]
pub struct PairCountModel {
    pub space: PoissonSpace,
    pub r: f64,
    pub factor: f64,
    mean: f64,
}

impl PairCountModel {
    /// Closed-form mean on [0,1]^d for d in {1, 2} and r <= 1.
    pub fn new(s: f64, d: usize, r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Precondition("pair radius must lie in (0, 1]".into()));
        }
        let p = match d {
            1 => 2.0 * r - r * r,
            2 => PI * r * r - 8.0 * r.powi(3) / 3.0 + r.powi(4) / 2.0,
            _ => return Err(Error::Precondition("pair-count mean is available for d <= 2".into())),
        };
        Ok(PairCountModel {
            space: PoissonSpace::unmarked(CarrierSpace::unit_cube(d, s)),
            r,
            factor: 1.0,
            mean: s * s / 2.0 * p,
        })
    }
}

impl FunctionalModel for PairCountModel {
    fn output_dim(&self) -> usize {
        1
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        let r2 = self.r * self.r;
        let pts = &eta.points;
        let mut k = 0u64;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if dist2(&pts[i].loc, &pts[j].loc) <= r2 {
                    k += 1;
                }
            }
        }
        vec![self.factor * k as f64]
    }
    fn mean_vector(&self) -> Vec<f64> {
        vec![self.factor * self.mean]
    }
    fn descriptor(&self) -> String {
        format!("pair-count(r={})", self.r)
    }
    /// D_x counts the neighbours of x; D^2_{x,y} is the indicator of {x, y}
    /// being a pair. Counts are integers, so this agrees with re-evaluation.
    fn fast_differences(
        &self,
        eta: &PointConfiguration,
        probes: &[Point],
        pairs: &[(usize, usize)],
    ) -> Option<DifferenceSample> {
        let r2 = self.r * self.r;
        let near = |x: &Point| eta.points.iter().filter(|p| dist2(&p.loc, &x.loc) <= r2).count();
        Some(DifferenceSample {
            base_value: self.evaluate(eta),
            d1: probes.iter().map(|x| vec![self.factor * near(x) as f64]).collect(),
            d2: pairs
                .iter()
                .map(|&(i, j)| {
                    let hit = dist2(&probes[i].loc, &probes[j].loc) <= r2;
                    vec![if hit { self.factor } else { 0.0 }]
                })
                .collect(),
        })
    }
}

pub type KernelFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Kernel {
    pub name: String,
    pub f: KernelFn,
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Kernel({})", self.name)
    }
}

impl Kernel {
    pub fn new(name: impl Into<String>, f: KernelFn) -> Self {
        Kernel { name: name.into(), f }
    }

    pub fn constant(c: f64) -> Self {
        Kernel::new(format!("{c}"), Arc::new(move |_: &[f64]| c))
    }

    /// cos(2 pi k x_1)
    pub fn cosine(k: f64) -> Self {
        Kernel::new(format!("cos(2pi*{k}*x1)"), Arc::new(move |x: &[f64]| (2.0 * PI * k * x[0]).cos()))
    }
}

/// Tensor Gauss-Legendre rule on a box, `q` nodes per axis.
fn box_quadrature(carrier: &CarrierSpace, q: usize, g: impl Fn(&[f64]) -> f64) -> f64 {
    let (x, w) = gauss_legendre(q);
    let d = carrier.dim();
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    let mut pt = vec![0.0; d];
    loop {
        let mut wt = 1.0;
        for k in 0..d {
            let half = 0.5 * (carrier.hi[k] - carrier.lo[k]);
            pt[k] = carrier.lo[k] + half * (x[idx[k]] + 1.0);
            wt *= half * w[idx[k]];
        }
        total += wt * g(&pt);
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < q {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// factor * I_1(f) = factor * (sum_{x in eta} f(x) - int f d lambda),
/// componentwise over the kernels.
#[derive(Debug, Clone)]
pub struct WienerItoModel {
    pub kernels: Vec<Kernel>,
    pub carrier: CarrierSpace,
    pub factor: f64,
    compensator: Vec<f64>,
    covariance: Mat,
}

impl WienerItoModel {
    pub fn new(kernels: Vec<Kernel>, carrier: CarrierSpace, factor: f64) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Precondition("need at least one kernel".into()));
        }
        let q = match carrier.dim() {
            1 => 256,
            2 => 64,
            _ => 24,
        };
        let s = carrier.scale;
        let m = kernels.len();
        let compensator = kernels
            .iter()
            .map(|k| dyadic(factor * s * box_quadrature(&carrier, q, |x| (k.f)(x) * carrier.density_at(x))))
            .collect();
        let mut covariance = Mat::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                let (fi, fj) = (&kernels[i].f, &kernels[j].f);
                let v = factor * factor * s * box_quadrature(&carrier, q, |x| fi(x) * fj(x) * carrier.density_at(x));
                covariance[(i, j)] = v;
                covariance[(j, i)] = v;
            }
        }
        Ok(WienerItoModel { kernels, carrier, factor, compensator, covariance })
    }

    /// factor * f / sqrt(s) with f == 1 on [0,1]^d: the standardized count.
    pub fn unit_constant(d: usize, s: f64) -> Self {
        Self::new(vec![Kernel::constant(1.0)], CarrierSpace::unit_cube(d, s), 1.0 / s.sqrt()).expect("valid")
    }

    pub fn space(&self) -> PoissonSpace {
        PoissonSpace::unmarked(self.carrier.clone())
    }

    /// D_x F, i.e. the grid-rounded factor * f(x).
    pub fn contribution(&self, x: &[f64]) -> Vec<f64> {
        self.kernels.iter().map(|k| dyadic(self.factor * (k.f)(x))).collect()
    }

    /// factor^2 * int f_i f_j d lambda by quadrature.
    pub fn covariance(&self) -> &Mat {
        &self.covariance
    }
}

impl FunctionalModel for WienerItoModel {
    fn output_dim(&self) -> usize {
        self.kernels.len()
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        let mut acc = vec![0.0; self.kernels.len()];
        for p in &eta.points {
            for (a, c) in acc.iter_mut().zip(self.contribution(&p.loc)) {
                *a += c;
            }
        }
        acc.iter().zip(&self.compensator).map(|(a, c)| a - c).collect()
    }
    fn mean_vector(&self) -> Vec<f64> {
        vec![0.0; self.kernels.len()]
    }
    fn descriptor(&self) -> String {
        let k: Vec<&str> = self.kernels.iter().map(|k| k.name.as_str()).collect();
        format!("I1[{}] * {}, s={}", k.join(", "), self.factor, self.carrier.scale)
    }
    fn fast_differences(
        &self,
        eta: &PointConfiguration,
        probes: &[Point],
        pairs: &[(usize, usize)],
    ) -> Option<DifferenceSample> {
        Some(DifferenceSample {
            base_value: self.evaluate(eta),
            d1: probes.iter().map(|x| self.contribution(&x.loc)).collect(),
            d2: vec![vec![0.0; self.kernels.len()]; pairs.len()],
        })
    }
}

/// Z_s = s^{-1/2} sum of the marks of a Poisson(s) process on [0,1].
#[derive(Debug, Clone)]
pub struct CompoundSumModel {
    pub m: usize,
    pub s: f64,
    pub marks: MarkSpace,
    pub mark_mean: Vec<f64>,
    /// E[X X^T], the covariance of Z_s.
    pub second_moment: Option<Mat>,
    offset: Vec<f64>,
}

impl CompoundSumModel {
    pub fn new(m: usize, s: f64, marks: MarkSpace, mark_mean: Vec<f64>, second_moment: Option<Mat>) -> Result<Self> {
        if mark_mean.len() != m || !(s > 0.0) {
            return Err(Error::Precondition("need s > 0 and an m-vector mark mean".into()));
        }
        let offset = mark_mean.iter().map(|mu| dyadic(s.sqrt() * mu)).collect();
        Ok(CompoundSumModel { m, s, marks, mark_mean, second_moment, offset })
    }

    pub fn rademacher(m: usize, s: f64) -> Self {
        Self::new(m, s, MarkSpace::rademacher(m), vec![0.0; m], Some(Mat::identity(m))).expect("valid")
    }

    /// Marks uniform on [-a, a]^m.
    pub fn uniform(m: usize, s: f64, a: f64) -> Self {
        let v = a * a / 3.0;
        Self::new(m, s, MarkSpace::uniform_cube(m, a), vec![0.0; m], Some(Mat::diag(&vec![v; m]))).expect("valid")
    }

    pub fn space(&self) -> PoissonSpace {
        PoissonSpace::new(CarrierSpace::unit_cube(1, self.s), Some(self.marks.clone()))
    }

    /// D_{(x, X)} Z_s, i.e. the grid-rounded X / sqrt(s).
    pub fn contribution(&self, mark: &[f64]) -> Vec<f64> {
        let k = 1.0 / self.s.sqrt();
        mark.iter().map(|x| dyadic(x * k)).collect()
    }
}

impl FunctionalModel for CompoundSumModel {
    fn output_dim(&self) -> usize {
        self.m
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        let mut acc = vec![0.0; self.m];
        for p in &eta.points {
            for (a, c) in acc.iter_mut().zip(self.contribution(p.mark_or_empty())) {
                *a += c;
            }
        }
        acc.iter().zip(&self.offset).map(|(a, c)| a - c).collect()
    }
    fn mean_vector(&self) -> Vec<f64> {
        vec![0.0; self.m]
    }
    fn descriptor(&self) -> String {
        format!("compound-sum(m={}, s={}, marks={})", self.m, self.s, self.marks.description)
    }
    fn fast_differences(
        &self,
        eta: &PointConfiguration,
        probes: &[Point],
        pairs: &[(usize, usize)],
    ) -> Option<DifferenceSample> {
        Some(DifferenceSample {
            base_value: self.evaluate(eta),
            d1: probes.iter().map(|x| self.contribution(x.mark_or_empty())).collect(),
            d2: vec![vec![0.0; self.m]; pairs.len()],
        })
    }
}

/// Isolated points and edges of the random geometric graph on the flat unit
/// torus with radius r_s = (theta / s)^{1/2}; both counts centred exactly
/// and divided by sqrt(s).
#[derive(Debug, Clone)]
pub struct IsolatedCountModel {
    pub s: f64,
    pub theta: f64,
    pub r: f64,
}

impl IsolatedCountModel {
    pub fn new(s: f64, theta: f64) -> Result<Self> {
        let r = (theta / s).sqrt();
        if !(s > 0.0 && theta > 0.0 && r < 0.5) {
            return Err(Error::Precondition("need s, theta > 0 and radius < 1/2".into()));
        }
        Ok(IsolatedCountModel { s, theta, r })
    }

    pub fn space(&self) -> PoissonSpace {
        PoissonSpace::unmarked(CarrierSpace::unit_cube(2, self.s))
    }

    /// (isolated points, edges), uncentred.
    pub fn raw_counts(&self, eta: &PointConfiguration) -> (u64, u64) {
        let deg = torus_degrees(&eta.points, self.r);
        let iso = deg.iter().filter(|d| **d == 0).count() as u64;
        let edges = deg.iter().sum::<u64>() / 2;
        (iso, edges)
    }

    pub fn mean_counts(&self) -> (f64, f64) {
        let a = PI * self.r * self.r;
        (self.s * (-self.s * a).exp(), self.s * self.s * a / 2.0)
    }
}

fn torus_d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs();
            let d = d.min(1.0 - d);
            d * d
        })
        .sum()
}

fn torus_degrees(pts: &[Point], r: f64) -> Vec<u64> {
    let n = pts.len();
    let r2 = r * r;
    let g = (1.0 / r).floor() as usize;
    let mut deg = vec![0u64; n];
    if g < 3 {
        for i in 0..n {
            for j in i + 1..n {
                if torus_d2(&pts[i].loc, &pts[j].loc) <= r2 {
                    deg[i] += 1;
                    deg[j] += 1;
                }
            }
        }
        return deg;
    }
    let cell = |v: f64| ((v * g as f64) as usize).min(g - 1);
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); g * g];
    for (i, p) in pts.iter().enumerate() {
        cells[cell(p.loc[0]) * g + cell(p.loc[1])].push(i);
    }
    for i in 0..n {
        let (cx, cy) = (cell(pts[i].loc[0]), cell(pts[i].loc[1]));
        for dx in [g - 1, 0, 1] {
            for dy in [g - 1, 0, 1] {
                for &j in &cells[((cx + dx) % g) * g + (cy + dy) % g] {
                    if j != i && torus_d2(&pts[i].loc, &pts[j].loc) <= r2 {
                        deg[i] += 1;
                    }
                }
            }
        }
    }
    deg
}

impl FunctionalModel for IsolatedCountModel {
    fn output_dim(&self) -> usize {
        2
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        let (iso, edges) = self.raw_counts(eta);
        let (mi, me) = self.mean_counts();
        let k = 1.0 / self.s.sqrt();
        vec![(iso as f64 - mi) * k, (edges as f64 - me) * k]
    }
    fn mean_vector(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
    fn descriptor(&self) -> String {
        format!("isolated-count(s={}, theta={})", self.s, self.theta)
    }
}

/// Fitted constants C_k = max over probes of (E|D V_i|^k)^{1/k} / W(K ∩ W)
/// for the unnormalised intrinsic volumes of a Boolean model.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub orders: Vec<u32>,
    /// c_hat[order][component]
    pub c_hat: Vec<[f64; 3]>,
    pub n_probes: usize,
    pub n_inner: usize,
    /// max / min of the fitted constants across orders, per component.
    pub spread: [f64; 3],
}

/// Wills functional of (x + K) ∩ W for a disk grain, from its raster.
pub fn grain_wills_in_window(model: &BooleanModel2D, grain: &Point) -> f64 {
    let d = Disk { cx: grain.loc[0], cy: grain.loc[1], r: grain.mark_or_empty()[0] };
    let v = Raster::render(&[d], model.n_px, model.h).counts().volumes(model.h);
    wills_from_volumes(&v)
}

pub fn check_moment_bound(
    model: &BooleanModel2D,
    max_order: u32,
    n_probes: usize,
    n_inner: usize,
    seed: u64,
) -> Result<MomentReport> {
    if !(1..=6).contains(&max_order) {
        return Err(Error::Precondition("moment order must lie in 1..=6".into()));
    }
    let space = model.space();
    let root = RngStream::new(seed, 0x44);
    let orders: Vec<u32> = (1..=max_order).filter(|k| k % 2 == 0 || max_order == 1).collect();
    let per_probe: Vec<Result<Option<Vec<[f64; 3]>>>> = (0..n_probes)
        .into_par_iter()
        .map(|p| {
            let mut rng = root.derive(p as u64).rng();
            let probe = sample_probe(&space, &mut rng)?;
            let wills = grain_wills_in_window(model, &probe);
            if wills <= 0.0 || grain_misses_window(model, &probe) {
                return Ok(None);
            }
            let mut mom = vec![[0.0; 3]; orders.len()];
            for _ in 0..n_inner {
                let eta = sample_space(&space, &mut rng)?;
                let d = diff_batch_auto(model, &eta, std::slice::from_ref(&probe), &[]);
                for (o, k) in orders.iter().enumerate() {
                    for i in 0..3 {
                        mom[o][i] += (d.d1[0][i] * model.side).abs().powi(*k as i32) / n_inner as f64;
                    }
                }
            }
            Ok(Some(
                orders
                    .iter()
                    .enumerate()
                    .map(|(o, k)| {
                        let mut c = [0.0; 3];
                        for i in 0..3 {
                            c[i] = mom[o][i].powf(1.0 / *k as f64) / wills;
                        }
                        c
                    })
                    .collect(),
            ))
        })
        .collect();
    let mut c_hat = vec![[0.0f64; 3]; orders.len()];
    let mut used = 0;
    for r in per_probe {
        if let Some(v) = r? {
            used += 1;
            for (o, c) in v.iter().enumerate() {
                for i in 0..3 {
                    c_hat[o][i] = c_hat[o][i].max(c[i]);
                }
            }
        }
    }
    let mut spread = [1.0; 3];
    for i in 0..3 {
        let hi = c_hat.iter().map(|c| c[i]).fold(0.0, f64::max);
        let lo = c_hat.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min);
        spread[i] = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    }
    Ok(MomentReport { orders, c_hat, n_probes: used, n_inner, spread })
}

fn grain_misses_window(model: &BooleanModel2D, grain: &Point) -> bool {
    let r = grain.mark_or_empty()[0];
    let dx = (-grain.loc[0]).max(grain.loc[0] - model.side).max(0.0);
    let dy = (-grain.loc[1]).max(grain.loc[1] - model.side).max(0.0);
    dx * dx + dy * dy > r * r
}

/// Translative inequality: MC estimate of int W((x + K) ∩ Q) dx against
/// W(K) W(Q), for a disk K of radius r and the square Q = [0, a]^2.
pub fn check_translative_inequality(r: f64, a: f64, h: f64, n: usize, seed: u64) -> Result<CheckRow> {
    if !(r > 0.0 && a > 0.0 && h > 0.0 && n >= 2) {
        return Err(Error::Precondition("need r, a, h > 0 and n >= 2".into()));
    }
    let n_px = (a / h).round().max(1.0) as usize;
    let h = a / n_px as f64;
    let span = a + 2.0 * r;
    let area = span * span;
    let root = RngStream::new(seed, 0x45);
    let vals: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = root.derive(k as u64).rng();
            let cx = -r + span * unit_f64(&mut rng);
            let cy = -r + span * unit_f64(&mut rng);
            let v = Raster::render(&[Disk { cx, cy, r }], n_px, h).counts().volumes(h);
            area * wills_from_volumes(&v)
        })
        .collect();
    let lhs = stats::mean(&vals);
    let se = stats::std_error(&vals);
    let wills_q = PI + 2.0 * (2.0 * a) + a * a;
    let rhs = wills_functional_2d(r)? * wills_q;
    Ok(CheckRow::le("translative_wills", lhs, rhs, se))
}

/// One window size of the Boolean-model study: covariance of the scaled
/// intrinsic volumes and the d_Hl gap to N(0, covariance).
#[derive(Debug, Clone)]
pub struct BooleanScaleRow {
    pub side: f64,
    pub n: usize,
    /// Sample mean of (V0, V1, V2)(Z ∩ W).
    pub mean: [f64; 3],
    pub cov: Mat,
    pub distance: DistanceEstimate,
}

impl BooleanScaleRow {
    /// V2(W) = L^2, the scale the rate is measured against.
    pub fn window_area(&self) -> f64 {
        self.side * self.side
    }
}

/// Simulates n realisations in window [0, L]^2, centres by the sample mean,
/// divides by L and estimates d_Hl against the Gaussian with the sample
/// covariance.
#[allow(clippy::too_many_arguments)]
pub fn boolean_scale_row(
    side: f64,
    r_min: f64,
    r_max: f64,
    intensity: f64,
    n: usize,
    l: usize,
    budget: &SearchBudget,
    seed: u64,
) -> Result<BooleanScaleRow> {
    if n < 3 {
        return Err(Error::Precondition("need n >= 3 realisations".into()));
    }
    let model = BooleanModel2D::new(side, r_min, r_max, intensity)?;
    let space = model.space();
    let root = RngStream::new(seed, 0xB0B);
    let vols: Vec<Result<[f64; 3]>> = (0..n)
        .into_par_iter()
        .map(|r| Ok(model.volumes(&sample_space(&space, &mut root.derive(r as u64).rng())?)))
        .collect();
    let vols: Vec<[f64; 3]> = vols.into_iter().collect::<Result<_>>()?;
    let mut mean = [0.0; 3];
    for (i, m) in mean.iter_mut().enumerate() {
        *m = stats::mean(&vols.iter().map(|v| v[i]).collect::<Vec<_>>());
    }
    let rows: Vec<Vec<f64>> = vols.iter().map(|v| (0..3).map(|i| (v[i] - mean[i]) / side).collect()).collect();
    let mut cov = Mat::zeros(3);
    for i in 0..3 {
        for j in 0..=i {
            let p: Vec<f64> = rows.iter().map(|r| r[i] * r[j]).collect();
            let c = stats::pairwise_sum(&p) / (n as f64 - 1.0);
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let target = GaussianTarget::new(cov.clone())?;
    let samples = Samples::from_rows(&rows)?;
    let distance = estimate_dhl(&samples, &target, l, budget)?;
    Ok(BooleanScaleRow { side, n, mean, cov, distance })
}

/// Largest relative entry change |a_ij - b_ij| / |b_ij| between two
/// covariance estimates.
pub fn covariance_relative_change(a: &Mat, b: &Mat) -> f64 {
    let m = a.dim();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs() / b[(i, j)].abs().max(f64::MIN_POSITIVE));
        }
    }
    worst
}
