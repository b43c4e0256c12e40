//! Indicator test functions: intersections of closed half-spaces and a few
//! parametric convex sets, with a replayable text form.

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// { x : <u_i, x> <= z_i for all i }, unit directions.
    Halfspaces { dirs: Vec<Vec<f64>>, offsets: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    AxisBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Convex hull of m + 1 affinely independent vertices.
    Simplex { vertices: Vec<Vec<f64>>, bary: Mat },
    /// Indicator of all of R^m.
    Whole { dim: usize },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl TestFunction {
    /// Normalizes the directions, rescaling offsets accordingly.
    pub fn halfspaces(dirs: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if dirs.is_empty() || dirs.len() != offsets.len() {
            return Err(Error::Precondition("need l >= 1 directions with matching offsets".into()));
        }
        let m = dirs[0].len();
        let mut ud = Vec::with_capacity(dirs.len());
        let mut uz = Vec::with_capacity(dirs.len());
        for (u, z) in dirs.into_iter().zip(offsets) {
            if u.len() != m {
                return Err(Error::Dimension { expected: m, got: u.len() });
            }
            let n = norm(&u);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Precondition("half-space direction must be nonzero".into()));
            }
            if (n - 1.0).abs() <= 1e-12 {
                ud.push(u);
                uz.push(z);
            } else {
                ud.push(u.iter().map(|v| v / n).collect());
                uz.push(z / n);
            }
        }
        Ok(TestFunction::Halfspaces { dirs: ud, offsets: uz })
    }

    pub fn halfspace(u: Vec<f64>, z: f64) -> Result<Self> {
        Self::halfspaces(vec![u], vec![z])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::Precondition("ball radius must be nonnegative".into()));
        }
        Ok(TestFunction::Ball { center, radius })
    }

    pub fn axis_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::Precondition("axis box needs lo <= hi".into()));
        }
        Ok(TestFunction::AxisBox { lo, hi })
    }

    pub fn simplex(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let m = vertices.first().map_or(0, |v| v.len());
        if m == 0 || vertices.len() != m + 1 {
            return Err(Error::Precondition("simplex needs m + 1 vertices in R^m".into()));
        }
        let mut t = Mat::zeros(m);
        for j in 0..m {
            for i in 0..m {
                t[(i, j)] = vertices[j + 1][i] - vertices[0][i];
            }
        }
        let bary = t.inverse().ok_or_else(|| Error::Precondition("degenerate simplex".into()))?;
        Ok(TestFunction::Simplex { vertices, bary })
    }

    pub fn dim(&self) -> usize {
        match self {
            TestFunction::Halfspaces { dirs, .. } => dirs[0].len(),
            TestFunction::Ball { center, .. } => center.len(),
            TestFunction::AxisBox { lo, .. } => lo.len(),
            TestFunction::Simplex { vertices, .. } => vertices[0].len(),
            TestFunction::Whole { dim } => *dim,
        }
    }

    /// Number of half-spaces for the half-space kind, 0 otherwise.
    pub fn ell(&self) -> usize {
        match self {
            TestFunction::Halfspaces { dirs, .. } => dirs.len(),
            _ => 0,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> bool {
        match self {
            TestFunction::Halfspaces { dirs, offsets } => {
                dirs.iter().zip(offsets).all(|(u, z)| dot(u, x) <= *z)
            }
            TestFunction::Ball { center, radius } => {
                let d2: f64 = center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum();
                d2 <= radius * radius
            }
            TestFunction::AxisBox { lo, hi } => {
                x.iter().enumerate().all(|(i, v)| *v >= lo[i] && *v <= hi[i])
            }
            TestFunction::Simplex { vertices, bary } => {
                let m = x.len();
                let d: Vec<f64> = (0..m).map(|i| x[i] - vertices[0][i]).collect();
                let lam = bary.matvec(&d);
                lam.iter().all(|l| *l >= 0.0) && lam.iter().sum::<f64>() <= 1.0
            }
            TestFunction::Whole { .. } => true,
        }
    }

    pub fn indicator(&self, x: &[f64]) -> f64 {
        if self.evaluate(x) {
            1.0
        } else {
            0.0
        }
    }

    /// Euclidean distance from x to the boundary of the set, where a closed
    /// formula is available.
    pub fn distance_to_boundary(&self, x: &[f64]) -> Option<f64> {
        match self {
            TestFunction::Halfspaces { dirs, offsets } if dirs.len() == 1 => {
                Some((dot(&dirs[0], x) - offsets[0]).abs())
            }
            TestFunction::Ball { center, radius } => {
                let d: f64 = center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum::<f64>().sqrt();
                Some((d - radius).abs())
            }
            TestFunction::AxisBox { lo, hi } => {
                if self.evaluate(x) {
                    Some(
                        x.iter()
                            .enumerate()
                            .map(|(i, v)| (v - lo[i]).min(hi[i] - v))
                            .fold(f64::INFINITY, f64::min),
                    )
                } else {
                    let d2: f64 = x
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            let e = (lo[i] - v).max(0.0).max(v - hi[i]);
                            e * e
                        })
                        .sum();
                    Some(d2.sqrt())
                }
            }
            _ => None,
        }
    }

    /// h o Theta, i.e. the set { x : Theta x in A }, for the kinds where it
    /// stays in the family.
    pub fn preimage(&self, theta: &Mat) -> Option<TestFunction> {
        match self {
            TestFunction::Halfspaces { dirs, offsets } => {
                let tt = theta.transpose();
                let d: Vec<Vec<f64>> = dirs.iter().map(|u| tt.matvec(u)).collect();
                TestFunction::halfspaces(d, offsets.clone()).ok()
            }
            TestFunction::Whole { dim } => Some(TestFunction::Whole { dim: *dim }),
            _ => None,
        }
    }

    /// Replayable text form `kind;field;field;...`, full precision.
    pub fn to_witness(&self) -> String {
        fn vec_str(v: &[f64]) -> String {
            v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
        }
        match self {
            TestFunction::Halfspaces { dirs, offsets } => {
                let mut s = String::from("H");
                for (u, z) in dirs.iter().zip(offsets) {
                    s.push_str(&format!(";{};{z:?}", vec_str(u)));
                }
                s
            }
            TestFunction::Ball { center, radius } => format!("B;{};{radius:?}", vec_str(center)),
            TestFunction::AxisBox { lo, hi } => format!("X;{};{}", vec_str(lo), vec_str(hi)),
            TestFunction::Simplex { vertices, .. } => {
                let mut s = String::from("S");
                for v in vertices {
                    s.push(';');
                    s.push_str(&vec_str(v));
                }
                s
            }
            TestFunction::Whole { dim } => format!("R;{dim}"),
        }
    }

    pub fn from_witness(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(';').collect();
        let bad = || Error::Parse(format!("malformed witness `{}`", text.trim()));
        let vec_of = |s: &str| -> Result<Vec<f64>> {
            s.split(',').map(|f| f.trim().parse::<f64>().map_err(|_| bad())).collect()
        };
        let num = |s: &str| -> Result<f64> { s.trim().parse::<f64>().map_err(|_| bad()) };
        match parts.first().copied() {
            Some("H") => {
                if parts.len() < 3 || parts.len() % 2 == 0 {
                    return Err(bad());
                }
                let mut dirs = Vec::new();
                let mut offsets = Vec::new();
                for pair in parts[1..].chunks(2) {
                    let u = vec_of(pair[0])?;
                    if (norm(&u) - 1.0).abs() > 1e-12 {
                        return Err(Error::Parse("witness direction is not unit norm".into()));
                    }
                    dirs.push(u);
                    offsets.push(num(pair[1])?);
                }
                let m = dirs[0].len();
                if dirs.iter().any(|u| u.len() != m) {
                    return Err(bad());
                }
                Ok(TestFunction::Halfspaces { dirs, offsets })
            }
            Some("B") if parts.len() == 3 => TestFunction::ball(vec_of(parts[1])?, num(parts[2])?),
            Some("X") if parts.len() == 3 => TestFunction::axis_box(vec_of(parts[1])?, vec_of(parts[2])?),
            Some("S") if parts.len() >= 3 => {
                TestFunction::simplex(parts[1..].iter().map(|p| vec_of(p)).collect::<Result<_>>()?)
            }
            Some("R") if parts.len() == 2 => {
                Ok(TestFunction::Whole { dim: parts[1].trim().parse().map_err(|_| bad())? })
            }
            _ => Err(bad()),
        }
    }
}
