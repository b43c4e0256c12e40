//! Pathwise add-one-cost operators D_x F and D^2_{x,y} F.

use crate::error::Result;
use crate::model::{EstimateWithError, FunctionalModel, Point, PointConfiguration, PoissonSpace};
use crate::sampler::{sample_probe, sample_space, RngStream};
use crate::stats;
use rayon::prelude::*;
use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceSample {
    pub base_value: Vec<f64>,
    /// D_x F for each probe, in probe order.
    pub d1: Vec<Vec<f64>>,
    /// D^2 F for each requested index pair, in pair order.
    pub d2: Vec<Vec<f64>>,
}

/// Total order on points, used to add two atoms in a canonical order so that
/// D^2 is symmetric bit for bit.
fn point_cmp(a: &Point, b: &Point) -> Ordering {
    for (x, y) in a.loc.iter().zip(&b.loc) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    let (ma, mb) = (a.mark_or_empty(), b.mark_or_empty());
    for (x, y) in ma.iter().zip(mb) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    ma.len().cmp(&mb.len())
}

fn add_pair(eta: &PointConfiguration, x1: &Point, x2: &Point) -> PointConfiguration {
    if point_cmp(x1, x2) == Ordering::Greater {
        eta.with_points(&[x2, x1])
    } else {
        eta.with_points(&[x1, x2])
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn second(f12: &[f64], f1: &[f64], f2: &[f64], f0: &[f64]) -> Vec<f64> {
    (0..f0.len()).map(|i| (f12[i] + f0[i]) - (f1[i] + f2[i])).collect()
}

/// F(eta + delta_x) - F(eta).
pub fn diff1<F: FunctionalModel + ?Sized>(f: &F, eta: &PointConfiguration, x: &Point) -> Vec<f64> {
    sub(&f.evaluate(&eta.with_point(x)), &f.evaluate(eta))
}

/// F(eta + x1 + x2) - F(eta + x1) - F(eta + x2) + F(eta).
pub fn diff2<F: FunctionalModel + ?Sized>(f: &F, eta: &PointConfiguration, x1: &Point, x2: &Point) -> Vec<f64> {
    let f0 = f.evaluate(eta);
    let f1 = f.evaluate(&eta.with_point(x1));
    let f2 = f.evaluate(&eta.with_point(x2));
    let f12 = f.evaluate(&add_pair(eta, x1, x2));
    second(&f12, &f1, &f2, &f0)
}

/// All first differences at `probes` and second differences at index pairs
/// into `probes`, by literal re-evaluation with shared evaluations.
pub fn diff_batch<F: FunctionalModel + ?Sized>(
    f: &F,
    eta: &PointConfiguration,
    probes: &[Point],
    pairs: &[(usize, usize)],
) -> DifferenceSample {
    let f0 = f.evaluate(eta);
    let singles: Vec<Vec<f64>> = probes.iter().map(|x| f.evaluate(&eta.with_point(x))).collect();
    let d1 = singles.iter().map(|v| sub(v, &f0)).collect();
    let d2 = pairs
        .iter()
        .map(|&(i, j)| {
            let f12 = f.evaluate(&add_pair(eta, &probes[i], &probes[j]));
            second(&f12, &singles[i], &singles[j], &f0)
        })
        .collect();
    DifferenceSample { base_value: f0, d1, d2 }
}

/// Uses the functional's incremental path when it has one.
pub fn diff_batch_auto<F: FunctionalModel + ?Sized>(
    f: &F,
    eta: &PointConfiguration,
    probes: &[Point],
    pairs: &[(usize, usize)],
) -> DifferenceSample {
    f.fast_differences(eta, probes, pairs).unwrap_or_else(|| diff_batch(f, eta, probes, pairs))
}

/// Both sides of Var F_i <= int E (D_x F_i)^2 lambda(dx), per component.
#[derive(Debug, Clone)]
pub struct PoincareReport {
    pub variance: Vec<EstimateWithError>,
    pub integral: Vec<EstimateWithError>,
    pub pass: Vec<bool>,
    /// Integral estimates on the first quarter, half and all probes.
    pub prefix_integrals: Vec<Vec<f64>>,
    /// Heuristic flag: the integral keeps growing by more than 2 s.e. with
    /// the replicate count (a hint that F may not be in dom D).
    pub divergence_suspect: Vec<bool>,
}

pub fn poincare_check<F: FunctionalModel + ?Sized>(
    f: &F,
    space: &PoissonSpace,
    n: usize,
    seed: u64,
) -> Result<PoincareReport> {
    let root = RngStream::new(seed, 0);
    let m = f.output_dim();
    let weight = space.total_mass();
    let values: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.for_replicate(1, r as u64).rng();
            let eta = sample_space(space, &mut rng)?;
            Ok(f.evaluate(&eta))
        })
        .collect();
    let values: Vec<Vec<f64>> = values.into_iter().collect::<Result<_>>()?;
    let sq: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.for_replicate(2, r as u64).rng();
            let eta = sample_space(space, &mut rng)?;
            let x = sample_probe(space, &mut rng)?;
            let d = diff_batch_auto(f, &eta, std::slice::from_ref(&x), &[]);
            Ok(d.d1[0].iter().map(|v| weight * v * v).collect())
        })
        .collect();
    let sq: Vec<Vec<f64>> = sq.into_iter().collect::<Result<_>>()?;
    let mut variance = Vec::new();
    let mut integral = Vec::new();
    let mut pass = Vec::new();
    let mut prefix_integrals = Vec::new();
    let mut divergence_suspect = Vec::new();
    for i in 0..m {
        let xi: Vec<f64> = values.iter().map(|v| v[i]).collect();
        let mu = stats::mean(&xi);
        let dev: Vec<f64> = xi.iter().map(|v| (v - mu) * (v - mu) * n as f64 / (n as f64 - 1.0)).collect();
        let var = EstimateWithError::from_samples(&dev, seed);
        let di: Vec<f64> = sq.iter().map(|v| v[i]).collect();
        let integ = EstimateWithError::from_samples(&di, seed);
        let se = (var.std_error.powi(2) + integ.std_error.powi(2)).sqrt();
        pass.push(var.value <= integ.value + 3.0 * se);
        let cuts = [n / 4, n / 2, n];
        let pre: Vec<EstimateWithError> =
            cuts.iter().map(|&c| EstimateWithError::from_samples(&di[..c.max(2)], seed)).collect();
        let grows = pre.windows(2).all(|w| w[1].value - w[0].value > 2.0 * w[1].std_error.max(w[0].std_error));
        prefix_integrals.push(pre.iter().map(|e| e.value).collect());
        divergence_suspect.push(grows);
        variance.push(var);
        integral.push(integ);
    }
    Ok(PoincareReport { variance, integral, pass, prefix_integrals, divergence_suspect })
}
