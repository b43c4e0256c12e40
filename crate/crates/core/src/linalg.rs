//! Dense square matrices, cyclic Jacobi eigen decomposition and the
//! Gaussian target N(0, sigma).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Dimension { expected: n, got: r.len() });
            }
            for (j, &v) in r.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// x^T A y
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    /// Largest singular value, via the eigenvalues of A^T A.
    pub fn op_norm(&self) -> f64 {
        let ata = self.transpose().mul(self);
        let e = symmetric_eigen(&ata).expect("A^T A is symmetric");
        e.values.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    /// Gauss-Jordan inverse with partial pivoting; `None` if singular.
    pub fn inverse(&self) -> Option<Mat> {
        let n = self.n;
        let mut a = self.clone();
        let mut inv = Mat::identity(n);
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))?;
            if a[(piv, col)].abs() < 1e-300 {
                return None;
            }
            for j in 0..n {
                a.data.swap(col * n + j, piv * n + j);
                inv.data.swap(col * n + j, piv * n + j);
            }
            let d = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= d;
                inv[(col, j)] /= d;
            }
            for i in 0..n {
                if i != col {
                    let f = a[(i, col)];
                    if f != 0.0 {
                        for j in 0..n {
                            a[(i, j)] -= f * a[(col, j)];
                            inv[(i, j)] -= f * inv[(col, j)];
                        }
                    }
                }
            }
        }
        Some(inv)
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone)]
pub struct Eigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column k is the eigenvector of `values[k]`.
    pub vectors: Mat,
}

impl Eigen {
    /// V diag(g(lambda)) V^T
    pub fn apply(&self, g: impl Fn(f64) -> f64) -> Mat {
        let n = self.values.len();
        let mut out = Mat::zeros(n);
        for k in 0..n {
            let gk = g(self.values[k]);
            for i in 0..n {
                let vik = self.vectors[(i, k)] * gk;
                for j in 0..n {
                    out[(i, j)] += vik * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

/// Cyclic Jacobi rotations; stops when the off-diagonal Frobenius norm drops
/// below 1e-14 times the matrix norm.
pub fn symmetric_eigen(a: &Mat) -> Result<Eigen> {
    let n = a.dim();
    let tol_sym = 1e-12 * a.max_abs().max(1.0);
    let asym = a.max_asymmetry();
    if asym > tol_sym {
        return Err(Error::NotSymmetric { max_asymmetry: asym });
    }
    let mut m = a.clone();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let mut v = Mat::identity(n);
    let total: f64 = m.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Mat::zeros(n);
    for (k, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, k)] = v[(r, i)];
        }
    }
    Ok(Eigen { values, vectors })
}

/// Centered Gaussian target with covariance `sigma`.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    pub sigma: Mat,
    pub eigen: Eigen,
    pub op_norm: f64,
    /// 1 / min eigenvalue, when positive definite.
    pub inv_op_norm: Option<f64>,
    /// Symmetric PSD square root (negative rounding eigenvalues clamped to 0).
    pub sqrt: Mat,
    pub inv_sqrt: Option<Mat>,
    pub inverse: Option<Mat>,
}

impl GaussianTarget {
    pub fn new(sigma: Mat) -> Result<Self> {
        let eigen = symmetric_eigen(&sigma)?;
        let min = eigen.values.first().copied().unwrap_or(0.0);
        if min < -1e-12 {
            return Err(Error::Indefinite { eigenvalue: min });
        }
        let op_norm = eigen.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pd = min > 1e-10;
        let sqrt = eigen.apply(|l| l.max(0.0).sqrt());
        let (inv_op_norm, inv_sqrt, inverse) = if pd {
            (Some(1.0 / min), Some(eigen.apply(|l| 1.0 / l.sqrt())), Some(eigen.apply(|l| 1.0 / l)))
        } else {
            (None, None, None)
        };
        Ok(GaussianTarget { sigma, eigen, op_norm, inv_op_norm, sqrt, inv_sqrt, inverse })
    }

    pub fn identity(m: usize) -> Self {
        Self::new(Mat::identity(m)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.inv_op_norm.is_some()
    }

    pub fn require_pd(&self) -> Result<f64> {
        self.inv_op_norm.ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: self.eigen.values.first().copied().unwrap_or(0.0),
        })
    }

    /// Variance of <u, N>.
    pub fn directional_variance(&self, u: &[f64]) -> f64 {
        self.sigma.quad_form(u, u).max(0.0)
    }

    /// Target of Theta N: covariance Theta sigma Theta^T.
    pub fn transformed(&self, theta: &Mat) -> Result<Self> {
        let s = theta.mul(&self.sigma).mul(&theta.transpose());
        let n = s.dim();
        let mut sym = s.clone();
        for i in 0..n {
            for j in 0..n {
                sym[(i, j)] = 0.5 * (s[(i, j)] + s[(j, i)]);
            }
        }
        Self::new(sym)
    }
}
