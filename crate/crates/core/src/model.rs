//! Carrier spaces, marks, point configurations and the functional interface.

use crate::error::{Error, Result};
use crate::malliavin::DifferenceSample;
use crate::stats;
use rand::RngCore;
use smallvec::SmallVec;
use std::fmt;
use std::sync::Arc;

pub type Coords = SmallVec<[f64; 3]>;
pub type Mark = SmallVec<[f64; 4]>;

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub loc: Coords,
    pub mark: Option<Mark>,
}

impl Point {
    pub fn new(loc: &[f64]) -> Self {
        Point { loc: Coords::from_slice(loc), mark: None }
    }

    pub fn marked(loc: &[f64], mark: &[f64]) -> Self {
        Point { loc: Coords::from_slice(loc), mark: Some(Mark::from_slice(mark)) }
    }

    pub fn mark_or_empty(&self) -> &[f64] {
        self.mark.as_deref().unwrap_or(&[])
    }
}

/// Finite multiset of (location, optional mark).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointConfiguration {
    pub points: Vec<Point>,
}

impl PointConfiguration {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// eta + delta_x, leaving `self` untouched.
    pub fn with_point(&self, x: &Point) -> Self {
        let mut points = Vec::with_capacity(self.points.len() + 2);
        points.extend_from_slice(&self.points);
        points.push(x.clone());
        PointConfiguration { points }
    }

    pub fn with_points(&self, xs: &[&Point]) -> Self {
        let mut points = Vec::with_capacity(self.points.len() + xs.len());
        points.extend_from_slice(&self.points);
        points.extend(xs.iter().map(|p| (*p).clone()));
        PointConfiguration { points }
    }

    /// One point per row: `x1,...,xd[,mark...]`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let fields: Vec<String> =
                p.loc.iter().chain(p.mark_or_empty()).map(|v| format!("{v:?}")).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Inverse of `to_csv` given the location dimension.
    pub fn from_csv(text: &str, dim: usize) -> Result<Self> {
        let mut points = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            if vals.len() < dim {
                return Err(Error::Parse(format!("line {}: expected {dim} coordinates", ln + 1)));
            }
            let p = if vals.len() == dim {
                Point::new(&vals)
            } else {
                Point::marked(&vals[..dim], &vals[dim..])
            };
            points.push(p);
        }
        Ok(PointConfiguration { points })
    }
}

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Density {
    Constant(f64),
    /// intercept + <gradient, x>
    Affine { intercept: f64, gradient: Vec<f64> },
    /// Arbitrary density with user supplied integral over the box and, for
    /// sampling, an upper bound.
    Custom { f: DensityFn, sup: Option<f64>, integral: f64 },
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Constant(c) => write!(f, "Constant({c})"),
            Density::Affine { intercept, gradient } => write!(f, "Affine({intercept}, {gradient:?})"),
            Density::Custom { sup, integral, .. } => write!(f, "Custom(sup={sup:?}, integral={integral})"),
        }
    }
}

/// Box in R^d with intensity measure s * density(x) dx.
#[derive(Debug, Clone)]
pub struct CarrierSpace {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub density: Density,
    pub scale: f64,
}

impl CarrierSpace {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, density: Density, scale: f64) -> Result<Self> {
        let c = CarrierSpace { lo, hi, density, scale };
        c.validate()?;
        Ok(c)
    }

    /// [0,1]^d with constant density 1 and total mass s.
    pub fn unit_cube(d: usize, s: f64) -> Self {
        Self::new(vec![0.0; d], vec![1.0; d], Density::Constant(1.0), s).expect("valid unit cube")
    }

    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>, s: f64) -> Result<Self> {
        Self::new(lo, hi, Density::Constant(1.0), s)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(Error::Carrier("box bounds must be nonempty and of equal length".into()));
        }
        if self.lo.iter().zip(&self.hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Carrier("box must have finite lo < hi in every coordinate".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Carrier("scale must be positive and finite".into()));
        }
        match &self.density {
            Density::Constant(c) if !(*c > 0.0 && c.is_finite()) => {
                return Err(Error::Carrier("constant density must be positive".into()))
            }
            Density::Affine { intercept, gradient } => {
                if gradient.len() != self.dim() {
                    return Err(Error::Carrier("affine gradient has wrong length".into()));
                }
                // An affine function is minimal at a corner of the box.
                let min = intercept
                    + gradient
                        .iter()
                        .enumerate()
                        .map(|(i, g)| if *g >= 0.0 { g * self.lo[i] } else { g * self.hi[i] })
                        .sum::<f64>();
                if min < 0.0 {
                    return Err(Error::Carrier("affine density negative on the box".into()));
                }
            }
            Density::Custom { integral, .. } if !(*integral > 0.0 && integral.is_finite()) => {
                return Err(Error::Carrier("custom density integral must be positive".into()))
            }
            _ => {}
        }
        if !(self.total_mass() > 0.0) {
            return Err(Error::Carrier("total mass must be positive".into()));
        }
        Ok(())
    }

    pub fn density_at(&self, x: &[f64]) -> f64 {
        match &self.density {
            Density::Constant(c) => *c,
            Density::Affine { intercept, gradient } => {
                intercept + gradient.iter().zip(x).map(|(g, v)| g * v).sum::<f64>()
            }
            Density::Custom { f, .. } => f(x),
        }
    }

    pub fn density_integral(&self) -> f64 {
        match &self.density {
            Density::Constant(c) => c * self.volume(),
            Density::Affine { intercept, gradient } => {
                let mid: f64 = gradient
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g * 0.5 * (self.lo[i] + self.hi[i]))
                    .sum();
                (intercept + mid) * self.volume()
            }
            Density::Custom { integral, .. } => *integral,
        }
    }

    pub fn density_sup(&self) -> Result<f64> {
        match &self.density {
            Density::Constant(c) => Ok(*c),
            Density::Affine { intercept, gradient } => Ok(intercept
                + gradient
                    .iter()
                    .enumerate()
                    .map(|(i, g)| if *g >= 0.0 { g * self.hi[i] } else { g * self.lo[i] })
                    .sum::<f64>()),
            Density::Custom { sup, .. } => sup.ok_or(Error::MissingDensityBound),
        }
    }

    /// lambda(X) = s * int density.
    pub fn total_mass(&self) -> f64 {
        self.scale * self.density_integral()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, v)| *v >= self.lo[i] && *v <= self.hi[i])
    }
}

pub type MarkSampler = Arc<dyn Fn(&mut dyn RngCore) -> Mark + Send + Sync>;

/// I.i.d. mark distribution.
#[derive(Clone)]
pub struct MarkSpace {
    pub sampler: MarkSampler,
    pub description: String,
}

impl fmt::Debug for MarkSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MarkSpace({})", self.description)
    }
}

impl MarkSpace {
    pub fn new(description: impl Into<String>, sampler: MarkSampler) -> Self {
        MarkSpace { sampler, description: description.into() }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Mark {
        (self.sampler)(rng)
    }

    /// Independent Rademacher signs in each of m coordinates.
    pub fn rademacher(m: usize) -> Self {
        Self::new(
            format!("rademacher^{m}"),
            Arc::new(move |rng: &mut dyn RngCore| {
                (0..m).map(|_| if rng.next_u32() & 1 == 1 { 1.0 } else { -1.0 }).collect()
            }),
        )
    }

    /// Uniform on [lo, hi] (one coordinate).
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::new(
            format!("uniform[{lo},{hi}]"),
            Arc::new(move |rng: &mut dyn RngCore| {
                let u = unit_f64(rng);
                smallvec::smallvec![lo + (hi - lo) * u]
            }),
        )
    }

    /// Uniform on [-a, a]^m.
    pub fn uniform_cube(m: usize, a: f64) -> Self {
        Self::new(
            format!("uniform[-{a},{a}]^{m}"),
            Arc::new(move |rng: &mut dyn RngCore| (0..m).map(|_| a * (2.0 * unit_f64(rng) - 1.0)).collect()),
        )
    }
}

/// Uniform double in [0, 1) from 53 random bits.
pub fn unit_f64(rng: &mut dyn RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The full (possibly marked) Poisson space: carrier plus optional marks.
#[derive(Debug, Clone)]
pub struct PoissonSpace {
    pub carrier: CarrierSpace,
    pub marks: Option<MarkSpace>,
}

impl PoissonSpace {
    pub fn new(carrier: CarrierSpace, marks: Option<MarkSpace>) -> Self {
        PoissonSpace { carrier, marks }
    }

    pub fn unmarked(carrier: CarrierSpace) -> Self {
        PoissonSpace { carrier, marks: None }
    }

    pub fn total_mass(&self) -> f64 {
        self.carrier.total_mass()
    }
}

/// A vector Poisson functional F = f(eta) in R^m.
pub trait FunctionalModel: Send + Sync {
    fn output_dim(&self) -> usize;
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64>;
    fn mean_vector(&self) -> Vec<f64>;
    fn descriptor(&self) -> String;

    fn centered(&self, eta: &PointConfiguration) -> Vec<f64> {
        let mut v = self.evaluate(eta);
        for (a, b) in v.iter_mut().zip(self.mean_vector()) {
            *a -= b;
        }
        v
    }

    /// Optional incremental difference computation; `None` means callers fall
    /// back to literal re-evaluation. Implementations must agree with it.
    fn fast_differences(
        &self,
        _eta: &PointConfiguration,
        _probes: &[Point],
        _pairs: &[(usize, usize)],
    ) -> Option<DifferenceSample> {
        None
    }
}

impl<T: FunctionalModel + ?Sized> FunctionalModel for &T {
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        (**self).evaluate(eta)
    }
    fn mean_vector(&self) -> Vec<f64> {
        (**self).mean_vector()
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
    fn fast_differences(
        &self,
        eta: &PointConfiguration,
        probes: &[Point],
        pairs: &[(usize, usize)],
    ) -> Option<DifferenceSample> {
        (**self).fast_differences(eta, probes, pairs)
    }
}

impl<T: FunctionalModel + ?Sized> FunctionalModel for Arc<T> {
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        (**self).evaluate(eta)
    }
    fn mean_vector(&self) -> Vec<f64> {
        (**self).mean_vector()
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
    fn fast_differences(
        &self,
        eta: &PointConfiguration,
        probes: &[Point],
        pairs: &[(usize, usize)],
    ) -> Option<DifferenceSample> {
        (**self).fast_differences(eta, probes, pairs)
    }
}

/// c * F
pub struct Scaled<F> {
    pub inner: F,
    pub factor: f64,
}

impl<F: FunctionalModel> FunctionalModel for Scaled<F> {
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        self.inner.evaluate(eta).into_iter().map(|v| self.factor * v).collect()
    }
    fn mean_vector(&self) -> Vec<f64> {
        self.inner.mean_vector().into_iter().map(|v| self.factor * v).collect()
    }
    fn descriptor(&self) -> String {
        format!("{} * {}", self.factor, self.inner.descriptor())
    }
}

/// a F + b G for scalar or equal-dimension functionals.
pub struct LinearCombination<F, G> {
    pub f: F,
    pub g: G,
    pub a: f64,
    pub b: f64,
}

impl<F: FunctionalModel, G: FunctionalModel> FunctionalModel for LinearCombination<F, G> {
    fn output_dim(&self) -> usize {
        self.f.output_dim()
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        let fv = self.f.evaluate(eta);
        let gv = self.g.evaluate(eta);
        fv.iter().zip(&gv).map(|(x, y)| self.a * x + self.b * y).collect()
    }
    fn mean_vector(&self) -> Vec<f64> {
        let fv = self.f.mean_vector();
        let gv = self.g.mean_vector();
        fv.iter().zip(&gv).map(|(x, y)| self.a * x + self.b * y).collect()
    }
    fn descriptor(&self) -> String {
        format!("{}*({}) + {}*({})", self.a, self.f.descriptor(), self.b, self.g.descriptor())
    }
}

/// Componentwise product F * G. The mean is not the product of means, so it
/// is left at zero unless calibrated through `WithMean`.
pub struct Product<F, G> {
    pub f: F,
    pub g: G,
}

impl<F: FunctionalModel, G: FunctionalModel> FunctionalModel for Product<F, G> {
    fn output_dim(&self) -> usize {
        self.f.output_dim()
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        let fv = self.f.evaluate(eta);
        let gv = self.g.evaluate(eta);
        fv.iter().zip(&gv).map(|(x, y)| x * y).collect()
    }
    fn mean_vector(&self) -> Vec<f64> {
        vec![0.0; self.output_dim()]
    }
    fn descriptor(&self) -> String {
        format!("({}) * ({})", self.f.descriptor(), self.g.descriptor())
    }
}

/// Stacks scalar-or-vector functionals into one vector functional.
pub struct Stack {
    pub parts: Vec<Box<dyn FunctionalModel>>,
}

impl FunctionalModel for Stack {
    fn output_dim(&self) -> usize {
        self.parts.iter().map(|p| p.output_dim()).sum()
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        self.parts.iter().flat_map(|p| p.evaluate(eta)).collect()
    }
    fn mean_vector(&self) -> Vec<f64> {
        self.parts.iter().flat_map(|p| p.mean_vector()).collect()
    }
    fn descriptor(&self) -> String {
        let d: Vec<String> = self.parts.iter().map(|p| p.descriptor()).collect();
        format!("stack[{}]", d.join(", "))
    }
}

/// A functional ignoring eta entirely.
pub struct Deterministic {
    pub value: Vec<f64>,
}

impl FunctionalModel for Deterministic {
    fn output_dim(&self) -> usize {
        self.value.len()
    }
    fn evaluate(&self, _eta: &PointConfiguration) -> Vec<f64> {
        self.value.clone()
    }
    fn mean_vector(&self) -> Vec<f64> {
        self.value.clone()
    }
    fn descriptor(&self) -> String {
        format!("deterministic{:?}", self.value)
    }
}

/// Overrides the stored mean of a functional (e.g. with a calibration estimate).
pub struct WithMean<F> {
    pub inner: F,
    pub mean: Vec<f64>,
}

impl<F: FunctionalModel> FunctionalModel for WithMean<F> {
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }
    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        self.inner.evaluate(eta)
    }
    fn mean_vector(&self) -> Vec<f64> {
        self.mean.clone()
    }
    fn descriptor(&self) -> String {
        self.inner.descriptor()
    }
    fn fast_differences(
        &self,
        eta: &PointConfiguration,
        probes: &[Point],
        pairs: &[(usize, usize)],
    ) -> Option<DifferenceSample> {
        self.inner.fast_differences(eta, probes, pairs)
    }
}

/// Monte Carlo estimate with its standard error and provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub n_replicates: usize,
    pub seed: u64,
}

impl EstimateWithError {
    pub fn from_samples(x: &[f64], seed: u64) -> Self {
        EstimateWithError { value: stats::mean(x), std_error: stats::std_error(x), n_replicates: x.len(), seed }
    }

    /// A closed-form or deterministic value.
    pub fn exact(value: f64) -> Self {
        EstimateWithError { value, std_error: 0.0, n_replicates: 1, seed: 0 }
    }

    pub fn scaled(&self, c: f64) -> Self {
        EstimateWithError { value: c * self.value, std_error: c.abs() * self.std_error, ..*self }
    }

    /// |self - x| <= k standard errors (exact equality when se is 0).
    pub fn agrees_with(&self, x: f64, k: f64) -> bool {
        (self.value - x).abs() <= k * self.std_error
    }
}

impl fmt::Display for EstimateWithError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6e} ± {:.2e} (n={}, seed={})", self.value, self.std_error, self.n_replicates, self.seed)
    }
}
