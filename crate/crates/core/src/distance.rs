//! Empirical lower estimates of d_K, d_Hl and d_convex between a sample and
//! N(0, sigma). Every estimate carries a replayable witness set.

use crate::error::{Error, Result};
use crate::linalg::GaussianTarget;
use crate::model::EstimateWithError;
use crate::sampler::{gaussian_table, standard_normals, RngStream};
use crate::special::{bvn_cdf, norm_cdf};
use crate::testfn::TestFunction;
use rand::RngCore;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Kolmogorov,
    Halfspaces(usize),
    Convex,
}

impl std::fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistanceKind::Kolmogorov => write!(f, "dK"),
            DistanceKind::Halfspaces(l) => write!(f, "dH{l}"),
            DistanceKind::Convex => write!(f, "dconvex"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistanceEstimate {
    pub kind: DistanceKind,
    /// |empirical - gaussian| at the witness; a lower bound of the distance.
    pub value: f64,
    pub witness: TestFunction,
    pub empirical: f64,
    pub gaussian: f64,
    pub n_samples: usize,
    pub gaussian_prob_se: f64,
    /// Monte Carlo pool used for non-closed-form Gaussian probabilities.
    pub n_gauss: usize,
    pub gauss_seed: u64,
    /// Same estimator run on n draws from the target itself.
    pub null_calibration: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchBudget {
    /// Random starts for the multistart search.
    pub n_starts: usize,
    /// Best screened candidates refined on the full sample.
    pub n_refine: usize,
    /// Local direction perturbations per refined candidate.
    pub n_perturb: usize,
    /// Size of the common-random-number Gaussian pool.
    pub n_gauss: usize,
    /// Subsample size used for screening.
    pub n_screen: usize,
    /// Offset grid per axis used for screening.
    pub grid: usize,
    pub seed: u64,
    pub calibrate_null: bool,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            n_starts: 2000,
            n_refine: 8,
            n_perturb: 24,
            n_gauss: 1_000_000,
            n_screen: 20_000,
            grid: 32,
            seed: 0x5EED,
            calibrate_null: false,
        }
    }
}

/// Row-major sample matrix.
#[derive(Debug, Clone)]
pub struct Samples {
    pub n: usize,
    pub m: usize,
    pub data: Vec<f64>,
}

impl Samples {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Precondition("empty sample".into()));
        }
        let m = rows[0].len();
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            if r.len() != m {
                return Err(Error::Dimension { expected: m, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Samples { n, m, data })
    }

    pub fn from_flat(m: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 || data.is_empty() || data.len() % m != 0 {
            return Err(Error::Precondition("flat sample length must be a positive multiple of m".into()));
        }
        Ok(Samples { n: data.len() / m, m, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.m).map(|r| dot(u, r)).collect()
    }

    /// Apply x -> theta x to every row.
    pub fn transformed(&self, theta: &crate::linalg::Mat) -> Samples {
        let mut data = Vec::with_capacity(self.data.len());
        for r in self.data.chunks_exact(self.m) {
            data.extend(theta.matvec(r));
        }
        Samples { n: self.n, m: self.m, data }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(u: &mut [f64]) {
    let n = dot(u, u).sqrt();
    for v in u.iter_mut() {
        *v /= n;
    }
}

fn random_direction(m: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    loop {
        let mut u = vec![0.0; m];
        standard_normals(rng, &mut u);
        if dot(&u, &u) > 1e-20 {
            normalize(&mut u);
            return u;
        }
    }
}

/// Draws from N(0, sigma) shared by every probability evaluation of a search.
pub struct GaussPool {
    pub m: usize,
    pub data: Vec<f64>,
    pub seed: u64,
}

impl GaussPool {
    pub fn new(target: &GaussianTarget, n: usize, seed: u64) -> Self {
        let data = gaussian_table(target, n.max(1), &RngStream::new(seed, 0x6A55));
        GaussPool { m: target.dim(), data, seed }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn prob(&self, h: &TestFunction) -> (f64, f64) {
        let n = self.len();
        let hits = self.data.chunks_exact(self.m).filter(|r| h.evaluate(r)).count();
        let p = hits as f64 / n as f64;
        (p, (p * (1.0 - p) / n as f64).sqrt())
    }
}

fn halfline_prob(z: f64, sd: f64) -> f64 {
    if sd > 0.0 {
        norm_cdf(z / sd)
    } else if z >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Closed form of E h(N) where one exists: all of R^m, one half-space, or
/// two half-spaces (bivariate normal CDF).
pub fn exact_region_prob(target: &GaussianTarget, h: &TestFunction) -> Option<f64> {
    match h {
        TestFunction::Whole { .. } => Some(1.0),
        TestFunction::Halfspaces { dirs, offsets } if dirs.len() == 1 => {
            Some(halfline_prob(offsets[0], target.directional_variance(&dirs[0]).sqrt()))
        }
        TestFunction::Halfspaces { dirs, offsets } if dirs.len() == 2 => {
            let s1 = target.directional_variance(&dirs[0]).sqrt();
            let s2 = target.directional_variance(&dirs[1]).sqrt();
            if s1 == 0.0 || s2 == 0.0 {
                return Some(halfline_prob(offsets[0], s1) * halfline_prob(offsets[1], s2));
            }
            let rho = (target.sigma.quad_form(&dirs[0], &dirs[1]) / (s1 * s2)).clamp(-1.0, 1.0);
            Some(bvn_cdf(offsets[0] / s1, offsets[1] / s2, rho))
        }
        _ => None,
    }
}

/// E h(N_sigma): closed form for l <= 2 half-spaces, otherwise Monte Carlo
/// with n draws.
pub fn gaussian_region_prob(target: &GaussianTarget, h: &TestFunction, n: usize, seed: u64) -> Result<EstimateWithError> {
    if h.dim() != target.dim() {
        return Err(Error::Dimension { expected: target.dim(), got: h.dim() });
    }
    if n == 0 {
        return Err(Error::Precondition("n >= 1".into()));
    }
    if let Some(p) = exact_region_prob(target, h) {
        return Ok(EstimateWithError::exact(p));
    }
    let pool = GaussPool::new(target, n, seed);
    let (p, se) = pool.prob(h);
    Ok(EstimateWithError { value: p, std_error: se, n_replicates: n, seed })
}

fn region_prob(target: &GaussianTarget, pool: &GaussPool, h: &TestFunction) -> (f64, f64) {
    match exact_region_prob(target, h) {
        Some(p) => (p, 0.0),
        None => pool.prob(h),
    }
}

pub fn empirical_frequency(samples: &Samples, h: &TestFunction) -> f64 {
    let hits = samples.data.chunks_exact(samples.m).filter(|r| h.evaluate(r)).count();
    hits as f64 / samples.n as f64
}

/// Recomputes (gap, empirical, gaussian, gaussian se) for a witness.
pub fn replay_gap(samples: &Samples, target: &GaussianTarget, h: &TestFunction, pool: &GaussPool) -> (f64, f64, f64, f64) {
    let emp = empirical_frequency(samples, h);
    let (g, se) = region_prob(target, pool, h);
    ((emp - g).abs(), emp, g, se)
}

fn finish(
    kind: DistanceKind,
    samples: &Samples,
    target: &GaussianTarget,
    witness: TestFunction,
    pool: &GaussPool,
) -> DistanceEstimate {
    let (value, empirical, gaussian, se) = replay_gap(samples, target, &witness, pool);
    DistanceEstimate {
        kind,
        value,
        witness,
        empirical,
        gaussian,
        n_samples: samples.n,
        gaussian_prob_se: se,
        n_gauss: pool.len(),
        gauss_seed: pool.seed,
        null_calibration: None,
    }
}

/// One-sample Kolmogorov distance against N(0, sigma^2), exact over jumps.
pub fn estimate_dk(samples: &[f64], target: &GaussianTarget) -> Result<DistanceEstimate> {
    if target.dim() != 1 {
        return Err(Error::Dimension { expected: 1, got: target.dim() });
    }
    if samples.is_empty() {
        return Err(Error::Precondition("empty sample".into()));
    }
    let sd = target.sigma[(0, 0)].max(0.0).sqrt();
    let mut p = samples.to_vec();
    p.sort_by(f64::total_cmp);
    let best = sweep_halfline(&p, sd);
    let s = Samples::from_flat(1, samples.to_vec())?;
    let pool = GaussPool { m: 1, data: vec![0.0], seed: 0 };
    Ok(finish(DistanceKind::Kolmogorov, &s, target, best.witness(&[1.0]), &pool))
}

#[derive(Debug, Clone, Copy)]
struct HalflineBest {
    gap: f64,
    /// true: {<u,x> <= v}; false: {<u,x> >= v}, i.e. {<-u,x> <= -v}.
    upper: bool,
    v: f64,
}

impl HalflineBest {
    fn witness(&self, u: &[f64]) -> TestFunction {
        if self.upper {
            TestFunction::Halfspaces { dirs: vec![u.to_vec()], offsets: vec![self.v] }
        } else {
            TestFunction::Halfspaces { dirs: vec![u.iter().map(|x| -x).collect()], offsets: vec![-self.v] }
        }
    }
}

/// Exact sup over closed half-lines in both orientations of a sorted projection.
fn sweep_halfline(sorted: &[f64], sd: f64) -> HalflineBest {
    let n = sorted.len() as f64;
    let mut best = HalflineBest { gap: -1.0, upper: true, v: sorted[0] };
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let lt = i;
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let g = halfline_prob(v, sd);
        let gap_le = (j as f64 / n - g).abs();
        let gap_ge = ((sorted.len() - lt) as f64 / n - (1.0 - g)).abs();
        if gap_le > best.gap {
            best = HalflineBest { gap: gap_le, upper: true, v };
        }
        if gap_ge > best.gap {
            best = HalflineBest { gap: gap_ge, upper: false, v };
        }
        i = j;
    }
    best
}

fn subsample(samples: &Samples, k: usize, seed: u64) -> Samples {
    if k >= samples.n {
        return samples.clone();
    }
    let mut rng = RngStream::new(seed, 0x5C12).rng();
    let mut idx: Vec<usize> = (0..samples.n).collect();
    for i in 0..k {
        let j = i + (rng.next_u64() % (samples.n - i) as u64) as usize;
        idx.swap(i, j);
    }
    let mut data = Vec::with_capacity(k * samples.m);
    for &i in &idx[..k] {
        data.extend_from_slice(samples.row(i));
    }
    Samples { n: k, m: samples.m, data }
}

fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn axis_directions(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            e
        })
        .collect()
}

fn halfline_score(samples: &Samples, target: &GaussianTarget, u: &[f64]) -> HalflineBest {
    let mut p = samples.project(u);
    p.sort_unstable_by(f64::total_cmp);
    sweep_halfline(&p, target.directional_variance(u).sqrt())
}

fn search_l1(samples: &Samples, target: &GaussianTarget, budget: &SearchBudget) -> (f64, TestFunction) {
    let m = samples.m;
    let screen = subsample(samples, budget.n_screen, budget.seed);
    let root = RngStream::new(budget.seed, 0x11);
    let mut dirs = axis_directions(m);
    for k in 0..m {
        dirs.push(target.eigen.vectors.rows().iter().map(|r| r[k]).collect());
    }
    let extra = budget.n_starts.saturating_sub(dirs.len());
    dirs.extend((0..extra).map(|i| random_direction(m, &mut root.derive(i as u64).rng())));
    if m == 1 {
        dirs = vec![vec![1.0]];
    }
    let scores: Vec<f64> = dirs.par_iter().map(|u| halfline_score(&screen, target, u).gap).collect();
    let mut best_gap = -1.0;
    let mut best_w = TestFunction::Whole { dim: m };
    for (rank, &i) in top_k(&scores, budget.n_refine).iter().enumerate() {
        let mut u = dirs[i].clone();
        let mut cur = halfline_score(samples, target, &u);
        if m > 1 {
            let mut rng = root.derive(0xABC0 + rank as u64).rng();
            let mut step = 0.2;
            for _ in 0..budget.n_perturb {
                let g = random_direction(m, &mut rng);
                let mut cand: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a + step * b).collect();
                normalize(&mut cand);
                let c = halfline_score(samples, target, &cand);
                if c.gap > cur.gap {
                    cur = c;
                    u = cand;
                } else {
                    step *= 0.7;
                }
            }
        }
        if cur.gap > best_gap {
            best_gap = cur.gap;
            best_w = cur.witness(&u);
        }
    }
    (best_gap, best_w)
}

/// Two-half-space candidate (u1, u2, z1, z2).
#[derive(Debug, Clone)]
struct PairCand {
    u1: Vec<f64>,
    u2: Vec<f64>,
    slab: bool,
}

struct PairGeom {
    s1: f64,
    s2: f64,
    rho: f64,
}

fn pair_geom(target: &GaussianTarget, u1: &[f64], u2: &[f64]) -> PairGeom {
    let s1 = target.directional_variance(u1).sqrt();
    let s2 = target.directional_variance(u2).sqrt();
    let rho = if s1 > 0.0 && s2 > 0.0 {
        (target.sigma.quad_form(u1, u2) / (s1 * s2)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    PairGeom { s1, s2, rho }
}

fn pair_prob(g: &PairGeom, z1: f64, z2: f64) -> f64 {
    if g.s1 == 0.0 || g.s2 == 0.0 {
        return halfline_prob(z1, g.s1) * halfline_prob(z2, g.s2);
    }
    bvn_cdf(z1 / g.s1, z2 / g.s2, g.rho)
}

/// Screening score on a quantile grid of both projections.
fn pair_screen(samples: &Samples, target: &GaussianTarget, c: &PairCand, grid: usize) -> (f64, f64, f64) {
    let p1 = samples.project(&c.u1);
    let p2: Vec<f64> = if c.slab { p1.iter().map(|v| -v).collect() } else { samples.project(&c.u2) };
    let grid_of = |p: &[f64]| -> Vec<f64> {
        let mut s = p.to_vec();
        s.sort_unstable_by(f64::total_cmp);
        let mut g: Vec<f64> = (0..grid).map(|k| s[((k as f64 + 0.5) / grid as f64 * (s.len() - 1) as f64) as usize]).collect();
        g.dedup();
        g
    };
    let g1 = grid_of(&p1);
    let g2 = grid_of(&p2);
    let (n1, n2) = (g1.len(), g2.len());
    let mut cnt = vec![0u32; (n1 + 1) * (n2 + 1)];
    for (a, b) in p1.iter().zip(&p2) {
        let i = g1.partition_point(|g| g < a);
        let j = g2.partition_point(|g| g < b);
        cnt[i * (n2 + 1) + j] += 1;
    }
    // cum[i][j] = #{p1 <= g1[i], p2 <= g2[j]}
    let mut cum = vec![0u32; n1 * n2];
    for i in 0..n1 {
        let mut row = 0u32;
        for j in 0..n2 {
            row += cnt[i * (n2 + 1) + j];
            cum[i * n2 + j] = row + if i > 0 { cum[(i - 1) * n2 + j] } else { 0 };
        }
    }
    let geom = pair_geom(target, &c.u1, &c.u2);
    let n = samples.n as f64;
    let mut best = (-1.0, 0.0, 0.0);
    for i in 0..n1 {
        for j in 0..n2 {
            let gap = (cum[i * n2 + j] as f64 / n - pair_prob(&geom, g1[i], g2[j])).abs();
            if gap > best.0 {
                best = (gap, g1[i], g2[j]);
            }
        }
    }
    best
}

/// Exact sweep over z1 with (u1, u2, z2) fixed.
fn sweep_first(p1: &[f64], p2: &[f64], z2: f64, geom: &PairGeom, n: usize) -> (f64, f64) {
    let mut sel: Vec<f64> = p1.iter().zip(p2).filter(|(_, b)| **b <= z2).map(|(a, _)| *a).collect();
    sel.sort_unstable_by(f64::total_cmp);
    let nf = n as f64;
    // The empty intersection (z1 below every selected point) is also a candidate.
    let mut best = (-1.0, f64::NAN);
    let mut i = 0;
    while i < sel.len() {
        let v = sel[i];
        let mut j = i;
        while j < sel.len() && sel[j] == v {
            j += 1;
        }
        let gap = (j as f64 / nf - pair_prob(geom, v, z2)).abs();
        if gap > best.0 {
            best = (gap, v);
        }
        i = j;
    }
    if best.1.is_nan() {
        best = ((0.0 - pair_prob(geom, 0.0, z2)).abs(), 0.0);
    }
    best
}

fn refine_pair(samples: &Samples, target: &GaussianTarget, c: &PairCand, z1: f64, z2: f64) -> (f64, f64, f64) {
    let p1 = samples.project(&c.u1);
    let p2: Vec<f64> = if c.slab { p1.iter().map(|v| -v).collect() } else { samples.project(&c.u2) };
    let geom = pair_geom(target, &c.u1, &c.u2);
    let swapped = PairGeom { s1: geom.s2, s2: geom.s1, rho: geom.rho };
    let (mut z1, mut z2) = (z1, z2);
    let mut gap = -1.0;
    for _ in 0..3 {
        let (g1, nz1) = sweep_first(&p1, &p2, z2, &geom, samples.n);
        z1 = nz1;
        let (g2, nz2) = sweep_first(&p2, &p1, z1, &swapped, samples.n);
        z2 = nz2;
        let g = g1.max(g2);
        if g <= gap + 1e-15 {
            break;
        }
        gap = g;
    }
    let final_gap = (p1.iter().zip(&p2).filter(|(a, b)| **a <= z1 && **b <= z2).count() as f64 / samples.n as f64
        - pair_prob(&geom, z1, z2))
    .abs();
    (final_gap, z1, z2)
}

fn search_l2(samples: &Samples, target: &GaussianTarget, budget: &SearchBudget) -> (f64, TestFunction) {
    let m = samples.m;
    let screen = subsample(samples, budget.n_screen, budget.seed);
    let root = RngStream::new(budget.seed, 0x22);
    let mut cands = Vec::new();
    let axes = axis_directions(m);
    for a in &axes {
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        cands.push(PairCand { u1: a.clone(), u2: neg, slab: true });
    }
    for i in 0..m {
        for j in 0..m {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                if i < j {
                    let u1: Vec<f64> = axes[i].iter().map(|v| si * v).collect();
                    let u2: Vec<f64> = axes[j].iter().map(|v| sj * v).collect();
                    cands.push(PairCand { u1, u2, slab: false });
                }
            }
        }
    }
    let extra = budget.n_starts.saturating_sub(cands.len());
    for k in 0..extra {
        let mut rng = root.derive(k as u64).rng();
        let u1 = random_direction(m, &mut rng);
        if k % 4 == 0 {
            let u2 = u1.iter().map(|v| -v).collect();
            cands.push(PairCand { u1, u2, slab: true });
        } else {
            let u2 = random_direction(m, &mut rng);
            cands.push(PairCand { u1, u2, slab: false });
        }
    }
    let screened: Vec<(f64, f64, f64)> =
        cands.par_iter().map(|c| pair_screen(&screen, target, c, budget.grid)).collect();
    let scores: Vec<f64> = screened.iter().map(|s| s.0).collect();
    let mut best_gap = -1.0;
    let mut best_w = TestFunction::Whole { dim: m };
    for (rank, &i) in top_k(&scores, budget.n_refine).iter().enumerate() {
        let mut c = cands[i].clone();
        let (mut gap, mut z1, mut z2) = refine_pair(samples, target, &c, screened[i].1, screened[i].2);
        let mut rng = root.derive(0xABC0 + rank as u64).rng();
        let mut step = 0.15;
        for it in 0..budget.n_perturb {
            let mut nc = c.clone();
            let g = random_direction(m, &mut rng);
            if c.slab || it % 2 == 0 {
                nc.u1 = c.u1.iter().zip(&g).map(|(a, b)| a + step * b).collect();
                normalize(&mut nc.u1);
                if c.slab {
                    nc.u2 = nc.u1.iter().map(|v| -v).collect();
                }
            } else {
                nc.u2 = c.u2.iter().zip(&g).map(|(a, b)| a + step * b).collect();
                normalize(&mut nc.u2);
            }
            let (ng, nz1, nz2) = refine_pair(samples, target, &nc, z1, z2);
            if ng > gap {
                gap = ng;
                z1 = nz1;
                z2 = nz2;
                c = nc;
            } else {
                step *= 0.7;
            }
        }
        if gap > best_gap {
            best_gap = gap;
            best_w = TestFunction::Halfspaces { dirs: vec![c.u1.clone(), c.u2.clone()], offsets: vec![z1, z2] };
        }
    }
    (best_gap, best_w)
}

/// Coordinate refinement of one offset of a half-space intersection whose
/// Gaussian probability is estimated on the pool.
fn refine_offsets_mc(
    samples: &Samples,
    pool: &GaussPool,
    dirs: &[Vec<f64>],
    offsets: &mut [f64],
    rounds: usize,
) -> f64 {
    let l = dirs.len();
    let sp: Vec<Vec<f64>> = dirs.iter().map(|u| samples.project(u)).collect();
    let pool_s = Samples { n: pool.len(), m: pool.m, data: pool.data.clone() };
    let gp: Vec<Vec<f64>> = dirs.iter().map(|u| pool_s.project(u)).collect();
    let (n, ng) = (samples.n as f64, pool.len() as f64);
    let mut gap = -1.0;
    for _ in 0..rounds {
        let before = gap;
        for k in 0..l {
            let others_ok = |proj: &[Vec<f64>], i: usize| (0..l).all(|j| j == k || proj[j][i] <= offsets[j]);
            let mut s: Vec<f64> = (0..samples.n).filter(|&i| others_ok(&sp, i)).map(|i| sp[k][i]).collect();
            let mut g: Vec<f64> = (0..pool.len()).filter(|&i| others_ok(&gp, i)).map(|i| gp[k][i]).collect();
            s.sort_unstable_by(f64::total_cmp);
            g.sort_unstable_by(f64::total_cmp);
            let mut best = (-1.0, offsets[k]);
            let mut i = 0;
            while i < s.len() {
                let v = s[i];
                let mut j = i;
                while j < s.len() && s[j] == v {
                    j += 1;
                }
                let gc = g.partition_point(|x| *x <= v);
                let d = (j as f64 / n - gc as f64 / ng).abs();
                if d > best.0 {
                    best = (d, v);
                }
                i = j;
            }
            if best.0 >= 0.0 {
                offsets[k] = best.1;
                gap = best.0;
            }
        }
        if gap <= before + 1e-15 {
            break;
        }
    }
    gap
}

fn mc_gap(samples: &Samples, pool: &GaussPool, h: &TestFunction) -> f64 {
    (empirical_frequency(samples, h) - pool.prob(h).0).abs()
}

/// Search over intersections of l >= 3 half-spaces (Gaussian side on the pool).
fn search_general(
    samples: &Samples,
    target: &GaussianTarget,
    pool: &GaussPool,
    l: usize,
    budget: &SearchBudget,
    fixed_axes: bool,
) -> (f64, TestFunction) {
    let m = samples.m;
    let screen = subsample(samples, budget.n_screen, budget.seed);
    let screen_pool = GaussPool {
        m,
        data: pool.data[..pool.data.len().min(budget.n_screen.max(1000) * m)].to_vec(),
        seed: pool.seed,
    };
    let root = RngStream::new(budget.seed, 0x33 + l as u64 + if fixed_axes { 0x100 } else { 0 });
    let starts = (budget.n_starts / 8).max(16);
    let cands: Vec<TestFunction> = (0..starts)
        .map(|k| {
            let mut rng = root.derive(k as u64).rng();
            let dirs: Vec<Vec<f64>> = if fixed_axes {
                axis_directions(m)
                    .into_iter()
                    .flat_map(|e| [e.clone(), e.iter().map(|v| -v).collect()])
                    .collect()
            } else {
                (0..l).map(|_| random_direction(m, &mut rng)).collect()
            };
            let anchor = screen.row((rng.next_u64() % screen.n as u64) as usize).to_vec();
            let offsets: Vec<f64> = dirs
                .iter()
                .map(|u| {
                    let sd = target.directional_variance(u).sqrt();
                    let mut z = [0.0];
                    standard_normals(&mut rng, &mut z);
                    dot(u, &anchor) + sd * z[0].abs()
                })
                .collect();
            TestFunction::Halfspaces { dirs, offsets }
        })
        .collect();
    let scores: Vec<f64> = cands.par_iter().map(|h| mc_gap(&screen, &screen_pool, h)).collect();
    let mut best_gap = -1.0;
    let mut best_w = TestFunction::Whole { dim: m };
    for &i in top_k(&scores, (budget.n_refine / 2).max(2)).iter() {
        if let TestFunction::Halfspaces { dirs, offsets } = &cands[i] {
            let mut z = offsets.clone();
            let g = refine_offsets_mc(samples, pool, dirs, &mut z, 3);
            if g > best_gap {
                best_gap = g;
                best_w = TestFunction::Halfspaces { dirs: dirs.clone(), offsets: z };
            }
        }
    }
    if fixed_axes {
        if let TestFunction::Halfspaces { offsets, .. } = &best_w {
            let hi: Vec<f64> = (0..m).map(|i| offsets[2 * i]).collect();
            let lo: Vec<f64> = (0..m).map(|i| -offsets[2 * i + 1]).collect();
            if lo.iter().zip(&hi).all(|(a, b)| a <= b) {
                best_w = TestFunction::AxisBox { lo, hi };
            }
        }
    }
    (best_gap, best_w)
}

/// Balls centred at sample and pool points, radius swept exactly.
fn search_balls(samples: &Samples, pool: &GaussPool, budget: &SearchBudget) -> (f64, TestFunction) {
    let m = samples.m;
    let root = RngStream::new(budget.seed, 0x44);
    let screen = subsample(samples, budget.n_screen, budget.seed);
    let n_centres = (budget.n_starts / 10).max(16);
    let centres: Vec<Vec<f64>> = (0..n_centres)
        .map(|k| {
            let mut rng = root.derive(k as u64).rng();
            match k {
                0 => vec![0.0; m],
                _ if k % 2 == 0 => screen.row((rng.next_u64() % screen.n as u64) as usize).to_vec(),
                _ => pool.data.chunks_exact(m).nth((rng.next_u64() % pool.len() as u64) as usize).unwrap().to_vec(),
            }
        })
        .collect();
    let dist2 = |rows: &[f64], c: &[f64]| -> Vec<f64> {
        rows.chunks_exact(m).map(|r| r.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()).collect()
    };
    let sweep = |s: &Samples, pool_rows: &[f64], c: &[f64]| -> (f64, f64) {
        let mut ds = dist2(&s.data, c);
        let mut dg = dist2(pool_rows, c);
        ds.sort_unstable_by(f64::total_cmp);
        dg.sort_unstable_by(f64::total_cmp);
        let (n, ng) = (ds.len() as f64, dg.len() as f64);
        let mut best = (-1.0, 0.0);
        let mut i = 0;
        while i < ds.len() {
            let v = ds[i];
            let mut j = i;
            while j < ds.len() && ds[j] == v {
                j += 1;
            }
            let gc = dg.partition_point(|x| *x <= v);
            let d = (j as f64 / n - gc as f64 / ng).abs();
            if d > best.0 {
                best = (d, v);
            }
            i = j;
        }
        best
    };
    let screen_rows = &pool.data[..pool.data.len().min(budget.n_screen.max(1000) * m)];
    let scores: Vec<f64> = centres.par_iter().map(|c| sweep(&screen, screen_rows, c).0).collect();
    let mut best = (-1.0, TestFunction::Whole { dim: m });
    for &i in top_k(&scores, (budget.n_refine / 2).max(2)).iter() {
        let (g, r2) = sweep(samples, &pool.data, &centres[i]);
        if g > best.0 {
            best = (g, TestFunction::Ball { center: centres[i].clone(), radius: r2.sqrt() });
        }
    }
    best
}

fn check_inputs(samples: &Samples, target: &GaussianTarget) -> Result<()> {
    if samples.m != target.dim() {
        return Err(Error::Dimension { expected: target.dim(), got: samples.m });
    }
    Ok(())
}

fn null_samples(target: &GaussianTarget, n: usize, seed: u64) -> Samples {
    let data = gaussian_table(target, n, &RngStream::new(seed, 0x4E55));
    Samples { n, m: target.dim(), data }
}

/// Lower estimate of d_Hl by multistart search with coordinate refinement.
pub fn estimate_dhl(samples: &Samples, target: &GaussianTarget, l: usize, budget: &SearchBudget) -> Result<DistanceEstimate> {
    check_inputs(samples, target)?;
    if l == 0 {
        return Err(Error::Precondition("l >= 1".into()));
    }
    let needs_pool = l >= 3;
    let pool = GaussPool::new(target, if needs_pool { budget.n_gauss } else { 1 }, budget.seed ^ 0x9001);
    let mut best = search_l1(samples, target, budget);
    if l >= 2 {
        let c = search_l2(samples, target, budget);
        if c.0 > best.0 {
            best = c;
        }
    }
    for k in 3..=l {
        let c = search_general(samples, target, &pool, k, budget, false);
        if c.0 > best.0 {
            best = c;
        }
    }
    let mut est = finish(DistanceKind::Halfspaces(l), samples, target, best.1, &pool);
    if budget.calibrate_null {
        let null = null_samples(target, samples.n, budget.seed ^ 0xCA1);
        let nb = SearchBudget { calibrate_null: false, ..*budget };
        est.null_calibration = Some(estimate_dhl(&null, target, l, &nb)?.value);
    }
    Ok(est)
}

/// Which parametric convex families the d_convex search covers.
#[derive(Debug, Clone, Copy)]
pub struct ConvexCatalog {
    pub balls: bool,
    pub boxes: bool,
    /// Largest number of intersected half-spaces (at most 2m is sensible).
    pub max_halfspaces: usize,
}

impl ConvexCatalog {
    pub fn standard(m: usize) -> Self {
        ConvexCatalog { balls: true, boxes: true, max_halfspaces: 2 * m }
    }
}

/// Lower estimate of d_convex; includes the d_Hl search with the same budget.
pub fn estimate_dconvex(
    samples: &Samples,
    target: &GaussianTarget,
    catalog: &ConvexCatalog,
    budget: &SearchBudget,
) -> Result<DistanceEstimate> {
    check_inputs(samples, target)?;
    let m = samples.m;
    let pool = GaussPool::new(target, budget.n_gauss, budget.seed ^ 0x9001);
    let l_hs = catalog.max_halfspaces.max(1);
    let nb = SearchBudget { calibrate_null: false, ..*budget };
    let hl = estimate_dhl(samples, target, l_hs.min(2), &nb)?;
    let mut cands: Vec<TestFunction> = vec![hl.witness.clone()];
    for k in 3..=l_hs {
        cands.push(search_general(samples, target, &pool, k, budget, false).1);
    }
    if catalog.boxes {
        cands.push(search_general(samples, target, &pool, 2 * m, budget, true).1);
    }
    if catalog.balls {
        cands.push(search_balls(samples, &pool, budget).1);
    }
    let mut best: Option<DistanceEstimate> = None;
    for w in cands {
        let e = finish(DistanceKind::Convex, samples, target, w, &pool);
        if best.as_ref().is_none_or(|b| e.value > b.value) {
            best = Some(e);
        }
    }
    let mut est = best.expect("at least one candidate");
    if budget.calibrate_null {
        let null = null_samples(target, samples.n, budget.seed ^ 0xCA1);
        est.null_calibration = Some(estimate_dconvex(&null, target, catalog, &nb)?.value);
    }
    Ok(est)
}

/// Recomputes an estimate's gap from its witness, reproducing the pool.
pub fn replay_estimate(samples: &Samples, target: &GaussianTarget, est: &DistanceEstimate) -> f64 {
    replay_witness(samples, target, &est.witness, est.n_gauss, est.gauss_seed)
}

pub fn replay_witness(samples: &Samples, target: &GaussianTarget, h: &TestFunction, n_gauss: usize, gauss_seed: u64) -> f64 {
    let pool = if exact_region_prob(target, h).is_some() {
        GaussPool { m: target.dim(), data: vec![0.0; target.dim()], seed: gauss_seed }
    } else {
        GaussPool::new(target, n_gauss, gauss_seed)
    };
    replay_gap(samples, target, h, &pool).0
}
