//! Reproducible sampling of marked Poisson processes and Gaussian vectors.

use crate::error::{Error, Result};
use crate::linalg::GaussianTarget;
use crate::model::{unit_f64, CarrierSpace, Density, FunctionalModel, Mark, MarkSpace, Point, PointConfiguration, PoissonSpace};
use rayon::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use smallvec::SmallVec;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named, splittable random stream: (root_seed, stream_id) determines all draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub root_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(root_seed: u64, stream_id: u64) -> Self {
        RngStream { root_seed, stream_id }
    }

    /// Child stream; `derive(a).derive(b)` differs from `derive(b).derive(a)`.
    pub fn derive(&self, tag: u64) -> Self {
        let id = splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D)));
        RngStream { root_seed: self.root_seed, stream_id: id }
    }

    /// Stream for replicate `r` of estimator `e`.
    pub fn for_replicate(&self, e: u64, r: u64) -> Self {
        self.derive(e).derive(r)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut s = self.root_seed;
        for chunk in seed.chunks_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Standard normal pair by Box-Muller.
pub fn box_muller(rng: &mut dyn RngCore) -> (f64, f64) {
    let u1 = 1.0 - unit_f64(rng); // (0, 1]
    let u2 = unit_f64(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let a = std::f64::consts::TAU * u2;
    (r * a.cos(), r * a.sin())
}

pub fn standard_normals(rng: &mut dyn RngCore, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        let (a, b) = box_muller(rng);
        out[i] = a;
        if i + 1 < out.len() {
            out[i + 1] = b;
        }
        i += 2;
    }
}

/// Sigma^{1/2} z with z standard normal.
pub fn sample_gaussian_with(target: &GaussianTarget, rng: &mut dyn RngCore) -> Vec<f64> {
    let mut z = vec![0.0; target.dim()];
    standard_normals(rng, &mut z);
    target.sqrt.matvec(&z)
}

pub fn sample_gaussian(target: &GaussianTarget, stream: &RngStream) -> Vec<f64> {
    sample_gaussian_with(target, &mut stream.rng())
}

/// `n` draws from N(0, sigma), row-major n x m.
pub fn gaussian_table(target: &GaussianTarget, n: usize, stream: &RngStream) -> Vec<f64> {
    let m = target.dim();
    let mut rng = stream.rng();
    let mut z = vec![0.0; n * m];
    standard_normals(&mut rng, &mut z);
    let mut out = vec![0.0; n * m];
    for r in 0..n {
        let zr = &z[r * m..(r + 1) * m];
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += target.sqrt[(i, j)] * zr[j];
            }
            out[r * m + i] = acc;
        }
    }
    out
}

/// One location drawn from the normalized intensity.
pub fn sample_location(carrier: &CarrierSpace, rng: &mut dyn RngCore) -> Result<SmallVec<[f64; 3]>> {
    let d = carrier.dim();
    let draw = |rng: &mut dyn RngCore| -> SmallVec<[f64; 3]> {
        (0..d).map(|i| carrier.lo[i] + (carrier.hi[i] - carrier.lo[i]) * unit_f64(rng)).collect()
    };
    match carrier.density {
        Density::Constant(_) => Ok(draw(rng)),
        _ => {
            let sup = carrier.density_sup()?;
            if !(sup > 0.0 && sup.is_finite()) {
                return Err(Error::MissingDensityBound);
            }
            loop {
                let x = draw(rng);
                if unit_f64(rng) * sup <= carrier.density_at(&x) {
                    return Ok(x);
                }
            }
        }
    }
}

/// One probe point: location from the normalized intensity plus a fresh mark.
pub fn sample_probe(space: &PoissonSpace, rng: &mut dyn RngCore) -> Result<Point> {
    let loc = sample_location(&space.carrier, rng)?;
    let mark = space.marks.as_ref().map(|m| m.sample(rng));
    Ok(Point { loc, mark })
}

pub fn sample_poisson_count(mean: f64, rng: &mut dyn RngCore) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite mean");
    let mut adapter = DynRng(rng);
    p.sample(&mut adapter) as usize
}

struct DynRng<'a>(&'a mut dyn RngCore);

impl RngCore for DynRng<'_> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

pub fn sample_poisson_process_with(
    carrier: &CarrierSpace,
    marks: Option<&MarkSpace>,
    rng: &mut dyn RngCore,
) -> Result<PointConfiguration> {
    carrier.validate()?;
    if !matches!(carrier.density, Density::Constant(_)) {
        carrier.density_sup()?;
    }
    let n = sample_poisson_count(carrier.total_mass(), rng);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let loc = sample_location(carrier, rng)?;
        let mark: Option<Mark> = marks.map(|m| m.sample(rng));
        points.push(Point { loc, mark });
    }
    Ok(PointConfiguration { points })
}

pub fn sample_poisson_process(
    carrier: &CarrierSpace,
    marks: Option<&MarkSpace>,
    stream: &RngStream,
) -> Result<PointConfiguration> {
    sample_poisson_process_with(carrier, marks, &mut stream.rng())
}

pub fn sample_space(space: &PoissonSpace, rng: &mut dyn RngCore) -> Result<PointConfiguration> {
    sample_poisson_process_with(&space.carrier, space.marks.as_ref(), rng)
}

/// F evaluated on n independent realisations; replicate r uses stream
/// derive(r), so the output does not depend on the thread count.
pub fn simulate_functional<F: FunctionalModel + ?Sized>(
    f: &F,
    space: &PoissonSpace,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let root = RngStream::new(seed, 0x51);
    (0..n)
        .into_par_iter()
        .map(|r| Ok(f.evaluate(&sample_space(space, &mut root.derive(r as u64).rng())?)))
        .collect()
}

/// eta + delta_x with a carrier check.
pub fn add_point(
    config: &PointConfiguration,
    carrier: &CarrierSpace,
    loc: &[f64],
    mark: Option<&[f64]>,
) -> Result<PointConfiguration> {
    if !carrier.contains(loc) {
        return Err(Error::OutOfBox(loc.to_vec()));
    }
    let p = match mark {
        Some(m) => Point::marked(loc, m),
        None => Point::new(loc),
    };
    Ok(config.with_point(&p))
}

/// Independent p-thinning.
pub fn thin(config: &PointConfiguration, p: f64, rng: &mut impl Rng) -> PointConfiguration {
    PointConfiguration { points: config.points.iter().filter(|_| rng.random::<f64>() < p).cloned().collect() }
}
