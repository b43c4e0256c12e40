//! Planar Boolean model of disks observed in [0, L]^2, with intrinsic volumes
//! measured on a pixel grid.
//!
//! A pixel is foreground when its centre lies in some disk. Foreground pixels
//! are closed squares, so the Euler characteristic is the 8-connected one.
//! All geometric quantities are derived from integer counts of 2x2 window
//! configurations; this keeps incremental differences bit-identical to
//! re-rendering.

use crate::error::{Error, Result};
use crate::malliavin::DifferenceSample;
use crate::model::{CarrierSpace, FunctionalModel, MarkSpace, Point, PointConfiguration, PoissonSpace};
use crate::sampler::{sample_space, RngStream};
use crate::stats;
use rayon::prelude::*;
use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

/// Makes the midpoint perimeter unbiased for isotropically oriented edges.
pub const ISOTROPIC_PERIMETER: f64 = PI / (8.0 * (SQRT_2 - 1.0));

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// Binary n x n image stored as row bitsets. Bit c + 1 of a row holds column
/// c, so that columns -1 and n act as background padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub n: usize,
    pub h: f64,
    words: usize,
    bits: Vec<u64>,
}

/// Disk in pixel units: centre offset so that pixel k has centre k.
#[derive(Debug, Clone, Copy)]
struct PxDisk {
    cx: f64,
    cy: f64,
    r: f64,
}

impl PxDisk {
    fn new(d: &Disk, h: f64) -> Self {
        PxDisk { cx: d.cx / h - 0.5, cy: d.cy / h - 0.5, r: d.r / h }
    }
}

// Integer ceil/floor through truncation; f64::ceil is a libm call on
// baseline x86-64.
fn ceil_i(x: f64) -> i64 {
    let t = x as i64;
    if (t as f64) < x {
        t + 1
    } else {
        t
    }
}

fn floor_i(x: f64) -> i64 {
    let t = x as i64;
    if (t as f64) > x {
        t - 1
    } else {
        t
    }
}

fn row_range(d: &PxDisk, n: usize) -> Option<(usize, usize)> {
    let lo = ceil_i(d.cy - d.r).max(0);
    let hi = floor_i(d.cy + d.r).min(n as i64 - 1);
    if lo > hi {
        None
    } else {
        Some((lo as usize, hi as usize))
    }
}

/// Columns [a, b) of row j covered by the disk.
fn disk_row_interval(d: &PxDisk, j: usize, n: usize) -> Option<(usize, usize)> {
    let dy = j as f64 - d.cy;
    let w2 = d.r * d.r - dy * dy;
    if w2 < 0.0 {
        return None;
    }
    let w = w2.sqrt();
    let a = ceil_i(d.cx - w).max(0);
    let b = (floor_i(d.cx + w) + 1).min(n as i64);
    if a >= b {
        None
    } else {
        Some((a as usize, b as usize))
    }
}

/// Sets bits [lo, hi).
fn set_bits(row: &mut [u64], lo: usize, hi: usize) {
    let (wl, wh) = (lo / 64, (hi - 1) / 64);
    let first = !0u64 << (lo % 64);
    let last = !0u64 >> (63 - (hi - 1) % 64);
    if wl == wh {
        row[wl] |= first & last;
    } else {
        row[wl] |= first;
        for w in &mut row[wl + 1..wh] {
            *w = !0;
        }
        row[wh] |= last;
    }
}

fn paint(row: &mut [u64], d: &PxDisk, j: usize, n: usize) {
    if let Some((a, b)) = disk_row_interval(d, j, n) {
        set_bits(row, a + 1, b + 1);
    }
}

impl Raster {
    pub fn empty(n: usize, h: f64) -> Raster {
        let words = (n + 2).div_ceil(64);
        Raster { n, h, words, bits: vec![0; words * n] }
    }

    pub fn render(disks: &[Disk], n: usize, h: f64) -> Raster {
        let mut r = Raster::empty(n, h);
        for d in disks {
            r.add_disk(d);
        }
        r
    }

    pub fn add_disk(&mut self, d: &Disk) {
        let d = PxDisk::new(d, self.h);
        if let Some((j0, j1)) = row_range(&d, self.n) {
            for j in j0..=j1 {
                let w = self.words;
                paint(&mut self.bits[j * w..(j + 1) * w], &d, j, self.n);
            }
        }
    }

    pub fn row(&self, j: usize) -> &[u64] {
        &self.bits[j * self.words..(j + 1) * self.words]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        let k = i + 1;
        self.row(j)[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn foreground(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn counts(&self) -> WindowCounts {
        let zero = vec![0u64; self.words];
        let mut c = WindowCounts { foreground: self.foreground() as i64, ..Default::default() };
        for j in 0..=self.n {
            let up = if j == 0 { &zero[..] } else { self.row(j - 1) };
            let low = if j == self.n { &zero[..] } else { self.row(j) };
            c.add(&pair_counts(up, low, self.n, j == 0 || j == self.n));
        }
        c
    }

    /// Binary PGM (P5) dump, foreground black, top row = largest y.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.n, self.n)?;
        let mut line = vec![255u8; self.n];
        for j in (0..self.n).rev() {
            for (i, px) in line.iter_mut().enumerate() {
                *px = if self.get(i, j) { 0 } else { 255 };
            }
            w.write_all(&line)?;
        }
        Ok(())
    }
}

/// Counts of 2x2 window configurations over the padded grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WindowCounts {
    pub foreground: i64,
    pub q1: i64,
    pub q2: i64,
    pub qd: i64,
    pub q3: i64,
    /// Same counts restricted to windows touching the padding (edges along
    /// the observation window are axis-parallel and get no isotropic factor).
    pub b1: i64,
    pub b2: i64,
    pub bd: i64,
    pub b3: i64,
}

impl WindowCounts {
    fn add(&mut self, o: &WindowCounts) {
        self.foreground += o.foreground;
        self.q1 += o.q1;
        self.q2 += o.q2;
        self.qd += o.qd;
        self.q3 += o.q3;
        self.b1 += o.b1;
        self.b2 += o.b2;
        self.bd += o.bd;
        self.b3 += o.b3;
    }

    fn sub(&mut self, o: &WindowCounts) {
        self.foreground -= o.foreground;
        self.q1 -= o.q1;
        self.q2 -= o.q2;
        self.qd -= o.qd;
        self.q3 -= o.q3;
        self.b1 -= o.b1;
        self.b2 -= o.b2;
        self.bd -= o.bd;
        self.b3 -= o.b3;
    }

    #[cfg(test)]
    fn classify(&mut self, a0: bool, b0: bool, a1: bool, b1: bool, times: i64, border: bool) {
        let k = a0 as u8 + b0 as u8 + a1 as u8 + b1 as u8;
        let (q, b) = match k {
            1 => (&mut self.q1, &mut self.b1),
            3 => (&mut self.q3, &mut self.b3),
            2 if a0 == b1 && b0 == a1 => (&mut self.qd, &mut self.bd),
            2 => (&mut self.q2, &mut self.b2),
            _ => return,
        };
        if border {
            *b += times;
        } else {
            *q += times;
        }
    }

    pub fn euler(&self) -> i64 {
        let (t1, t3, td) = (self.q1 + self.b1, self.q3 + self.b3, self.qd + self.bd);
        (t1 - t3 - 2 * td) / 4
    }

    /// Perimeter in units of the pixel side.
    pub fn perimeter_units(&self) -> f64 {
        let inner = (self.q1 + self.q3) as f64 / SQRT_2 + self.q2 as f64 + SQRT_2 * self.qd as f64;
        let border = (self.b1 + self.b3) as f64 / SQRT_2 + self.b2 as f64 + SQRT_2 * self.bd as f64;
        ISOTROPIC_PERIMETER * inner + border
    }

    /// (V0, V1, V2) for pixel side h.
    pub fn volumes(&self, h: f64) -> [f64; 3] {
        [self.euler() as f64, 0.5 * h * self.perimeter_units(), self.foreground as f64 * h * h]
    }
}

/// Window counts between an upper and a lower row: windows over bit pairs
/// (k, k + 1) for k = 0..=n, i.e. columns (k - 1, k).
fn pair_counts(up: &[u64], low: &[u64], n: usize, border_pair: bool) -> WindowCounts {
    let mut c = WindowCounts::default();
    let words = up.len();
    let (mut t1, mut t2, mut td, mut t3) = (0i64, 0i64, 0i64, 0i64);
    let classes = |w: usize| -> [u64; 4] {
        let next = |r: &[u64]| if w + 1 < words { r[w + 1] << 63 } else { 0 };
        let (a0, b0) = (up[w], low[w]);
        let (a1, b1) = ((up[w] >> 1) | next(up), (low[w] >> 1) | next(low));
        let (x1, c1, x2, c2) = (a0 ^ a1, a0 & a1, b0 ^ b1, b0 & b1);
        let bit0 = x1 ^ x2;
        let carry = x1 & x2;
        let bit1 = c1 ^ c2 ^ carry;
        let bit2 = (c1 & c2) | (carry & (c1 ^ c2));
        let two = !bit0 & bit1 & !bit2;
        let diag = (a0 & b1 & !a1 & !b0) | (a1 & b0 & !a0 & !b1);
        let valid = if 64 * w + 63 <= n { !0u64 } else { (!0u64) >> (63 - (n - 64 * w)) };
        [bit0 & !bit1 & !bit2 & valid, two & !diag & valid, two & diag & valid, bit0 & bit1 & valid]
    };
    for w in 0..words {
        if up[w] == 0 && low[w] == 0 && (w + 1 >= words || (up[w + 1] & 1) == 0 && (low[w + 1] & 1) == 0) {
            continue;
        }
        if 64 * w > n {
            break;
        }
        let k = classes(w);
        t1 += k[0].count_ones() as i64;
        t2 += k[1].count_ones() as i64;
        td += k[2].count_ones() as i64;
        t3 += k[3].count_ones() as i64;
    }
    if border_pair {
        c.b1 = t1;
        c.b2 = t2;
        c.bd = td;
        c.b3 = t3;
        return c;
    }
    c.q1 = t1;
    c.q2 = t2;
    c.qd = td;
    c.q3 = t3;
    // windows at k = 0 and k = n touch the padding columns
    for k in [0, n] {
        let cl = classes(k / 64);
        let bit = |m: u64| (m >> (k % 64)) & 1 == 1;
        if bit(cl[0]) {
            c.q1 -= 1;
            c.b1 += 1;
        } else if bit(cl[1]) {
            c.q2 -= 1;
            c.b2 += 1;
        } else if bit(cl[2]) {
            c.qd -= 1;
            c.bd += 1;
        } else if bit(cl[3]) {
            c.q3 -= 1;
            c.b3 += 1;
        }
    }
    c
}

/// (V0, V1, V2) of the rendered set.
pub fn intrinsic_volumes_2d(raster: &Raster) -> [f64; 3] {
    raster.counts().volumes(raster.h)
}

/// Wills functional of a disk of radius r: pi V0 + 2 V1 + V2.
pub fn wills_functional_2d(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Precondition("radius must be nonnegative".into()));
    }
    Ok(PI + 2.0 * PI * r + PI * r * r)
}

/// Wills functional from intrinsic volumes (V0, V1, V2).
pub fn wills_from_volumes(v: &[f64; 3]) -> f64 {
    PI * v[0] + 2.0 * v[1] + v[2]
}

/// (V0, V1, V2)(Z ∩ W), centred by `mean` and divided by L = sqrt(V2(W)).
#[derive(Debug, Clone)]
pub struct BooleanModel2D {
    pub side: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub intensity: f64,
    pub n_px: usize,
    pub h: f64,
    pub mean: [f64; 3],
}

impl BooleanModel2D {
    /// Default pixel size min(0.005 L, r_min / 10), adjusted so that the
    /// grid divides the window exactly.
    pub fn new(side: f64, r_min: f64, r_max: f64, intensity: f64) -> Result<Self> {
        let h = (0.005 * side).min(r_min / 10.0);
        Self::with_pixel(side, r_min, r_max, intensity, h)
    }

    pub fn with_pixel(side: f64, r_min: f64, r_max: f64, intensity: f64, h: f64) -> Result<Self> {
        if !(side > 0.0 && r_min > 0.0 && r_max >= r_min && intensity > 0.0 && h > 0.0) {
            return Err(Error::Precondition("need L, r_min, intensity, h > 0 and r_max >= r_min".into()));
        }
        let n_px = (side / h).round().max(1.0) as usize;
        Ok(BooleanModel2D { side, r_min, r_max, intensity, n_px, h: side / n_px as f64, mean: [0.0; 3] })
    }

    /// Grains whose centres lie in the window dilated by r_max.
    pub fn space(&self) -> PoissonSpace {
        let lo = vec![-self.r_max; 2];
        let hi = vec![self.side + self.r_max; 2];
        let carrier = CarrierSpace::uniform_box(lo, hi, self.intensity).expect("valid dilated window");
        PoissonSpace::new(carrier, Some(MarkSpace::uniform(self.r_min, self.r_max)))
    }

    fn disk(p: &Point) -> Disk {
        Disk { cx: p.loc[0], cy: p.loc[1], r: p.mark_or_empty().first().copied().unwrap_or(0.0) }
    }

    pub fn raster(&self, eta: &PointConfiguration) -> Raster {
        let disks: Vec<Disk> = eta.points.iter().map(Self::disk).collect();
        Raster::render(&disks, self.n_px, self.h)
    }

    pub fn volumes(&self, eta: &PointConfiguration) -> [f64; 3] {
        intrinsic_volumes_2d(&self.raster(eta))
    }

    fn functional(&self, counts: &WindowCounts) -> Vec<f64> {
        let v = counts.volumes(self.h);
        (0..3).map(|i| (v[i] - self.mean[i]) / self.side).collect()
    }

    /// Sets the centring to the sample mean of n realisations.
    pub fn calibrate_mean(&mut self, n: usize, seed: u64) -> Result<[f64; 3]> {
        let space = self.space();
        let root = RngStream::new(seed, 0xB00);
        let vols: Vec<Result<[f64; 3]>> = (0..n)
            .into_par_iter()
            .map(|r| Ok(self.volumes(&sample_space(&space, &mut root.derive(r as u64).rng())?)))
            .collect();
        let vols: Vec<[f64; 3]> = vols.into_iter().collect::<Result<_>>()?;
        for i in 0..3 {
            let xi: Vec<f64> = vols.iter().map(|v| v[i]).collect();
            self.mean[i] = stats::mean(&xi);
        }
        Ok(self.mean)
    }

    /// Counts after adding `extra` grains, recomputing only affected rows.
    fn counts_with(&self, base: &Raster, base_counts: &WindowCounts, extra: &[Disk]) -> WindowCounts {
        let n = self.n_px;
        let extra: Vec<PxDisk> = extra.iter().map(|d| PxDisk::new(d, self.h)).collect();
        let mut j0 = usize::MAX;
        let mut j1 = 0;
        for d in &extra {
            if let Some((a, b)) = row_range(d, n) {
                j0 = j0.min(a);
                j1 = j1.max(b);
            }
        }
        if j0 == usize::MAX {
            return *base_counts;
        }
        let words = base.words;
        let mut new_rows = base.bits[j0 * words..(j1 + 1) * words].to_vec();
        for (k, row) in new_rows.chunks_exact_mut(words).enumerate() {
            for d in &extra {
                paint(row, d, j0 + k, n);
            }
        }
        let zero = vec![0u64; words];
        let old_row = |j: usize| if j < n { base.row(j) } else { &zero[..] };
        let new_row = |j: usize| -> &[u64] {
            if j >= j0 && j <= j1 {
                &new_rows[(j - j0) * words..(j - j0 + 1) * words]
            } else {
                old_row(j)
            }
        };
        let mut c = *base_counts;
        // row pairs (j-1, j) for j in j0..=j1+1
        for j in j0..=j1 + 1 {
            let border = j == 0 || j == n;
            let (ou, nu) = if j == 0 { (&zero[..], &zero[..]) } else { (old_row(j - 1), new_row(j - 1)) };
            c.sub(&pair_counts(ou, old_row(j), n, border));
            c.add(&pair_counts(nu, new_row(j), n, border));
        }
        let pop = |r: &[u64]| r.iter().map(|w| w.count_ones() as i64).sum::<i64>();
        c.foreground += pop(&new_rows) - pop(&base.bits[j0 * words..(j1 + 1) * words]);
        c
    }
}

impl FunctionalModel for BooleanModel2D {
    fn output_dim(&self) -> usize {
        3
    }

    fn evaluate(&self, eta: &PointConfiguration) -> Vec<f64> {
        self.functional(&self.raster(eta).counts())
    }

    fn mean_vector(&self) -> Vec<f64> {
        vec![0.0; 3]
    }

    fn descriptor(&self) -> String {
        format!(
            "boolean2d(L={}, r=[{},{}], intensity={}, h={})",
            self.side, self.r_min, self.r_max, self.intensity, self.h
        )
    }

    fn fast_differences(
        &self,
        eta: &PointConfiguration,
        probes: &[Point],
        pairs: &[(usize, usize)],
    ) -> Option<DifferenceSample> {
        let base = self.raster(eta);
        let bc = base.counts();
        let f0 = self.functional(&bc);
        let disks: Vec<Disk> = probes.iter().map(Self::disk).collect();
        let singles: Vec<Vec<f64>> =
            disks.iter().map(|d| self.functional(&self.counts_with(&base, &bc, std::slice::from_ref(d)))).collect();
        let d1 = singles.iter().map(|v| v.iter().zip(&f0).map(|(a, b)| a - b).collect()).collect();
        let d2 = pairs
            .iter()
            .map(|&(i, j)| {
                let f12 = self.functional(&self.counts_with(&base, &bc, &[disks[i], disks[j]]));
                (0..3).map(|k| (f12[k] + f0[k]) - (singles[i][k] + singles[j][k])).collect()
            })
            .collect();
        Some(DifferenceSample { base_value: f0, d1, d2 })
    }
}
