//! Small dense complex linear algebra: 2×2 matrices, determinants,
//! Gram–Schmidt and least squares.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// 2×2 complex matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matrix2C {
    pub m: [[C64; 2]; 2],
}

impl Matrix2C {
    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub fn identity() -> Self {
        let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        Self::new(o, z, z, o)
    }

    pub fn diag(a: C64, d: C64) -> Self {
        let z = C64::new(0.0, 0.0);
        Self::new(a, z, z, d)
    }

    pub fn det(&self) -> C64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> C64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Self::new(m[0][0], m[1][0], m[0][1], m[1][1])
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.norm() == 0.0 {
            return None;
        }
        let m = &self.m;
        Some(Self::new(m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det))
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }
}

impl Mul for Matrix2C {
    type Output = Matrix2C;
    fn mul(self, rhs: Matrix2C) -> Matrix2C {
        let (a, b) = (&self.m, &rhs.m);
        let mut out = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Matrix2C { m: out }
    }
}

impl Add for Matrix2C {
    type Output = Matrix2C;
    fn add(self, rhs: Matrix2C) -> Matrix2C {
        let mut out = self.m;
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += rhs.m[i][j];
            }
        }
        Matrix2C { m: out }
    }
}

impl Sub for Matrix2C {
    type Output = Matrix2C;
    fn sub(self, rhs: Matrix2C) -> Matrix2C {
        let mut out = self.m;
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] -= rhs.m[i][j];
            }
        }
        Matrix2C { m: out }
    }
}

/// Determinant of a square matrix given by rows, via LU with partial pivoting.
pub fn det(rows: &[Vec<C64>]) -> C64 {
    let n = rows.len();
    let mut a: Vec<Vec<C64>> = rows.to_vec();
    let mut det = C64::new(1.0, 0.0);
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].norm().total_cmp(&a[j][k].norm())).unwrap();
        if a[p][k].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                let v = a[k][j];
                a[i][j] -= f * v;
            }
        }
    }
    det
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Orthonormalizes the columns in place (modified Gram–Schmidt, applied
/// twice) and returns the diagonal of the triangular factor.
pub fn orthonormalize(cols: &mut [Vec<C64>]) -> Vec<f64> {
    let mut diag = Vec::with_capacity(cols.len());
    for j in 0..cols.len() {
        let (done, rest) = cols.split_at_mut(j);
        let col = &mut rest[0];
        for _ in 0..2 {
            for q in done.iter() {
                let r = dot(q, col);
                for (c, qv) in col.iter_mut().zip(q) {
                    *c -= r * qv;
                }
            }
        }
        let nrm = norm(col);
        diag.push(nrm);
        if nrm > 0.0 {
            for c in col.iter_mut() {
                *c /= nrm;
            }
        }
    }
    diag
}

/// Singular values of a matrix given by columns (one-sided Jacobi),
/// sorted in decreasing order.
pub fn singular_values(cols: &[Vec<C64>]) -> Vec<f64> {
    let mut a: Vec<Vec<C64>> = cols.to_vec();
    let n = a.len();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&a[p], &a[p]).re;
                let beta = dot(&a[q], &a[q]).re;
                let gamma = dot(&a[p], &a[q]);
                let g = gamma.norm();
                if g <= 1e-15 * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                // Rotate in the plane of columns p, q to zero their inner product.
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..a[p].len() {
                    let (ap, aq) = (a[p][i], a[q][i]);
                    a[p][i] = ap * c - aq * phase.conj() * s;
                    a[q][i] = ap * phase * s + aq * c;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = a.iter().map(|c| norm(c)).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Least-squares solution of `A x ≈ b` with `A` given by columns. Returns the
/// solution and the 2-norm condition number of `A`.
pub fn least_squares(cols: &[Vec<C64>], b: &[C64]) -> (Vec<C64>, f64) {
    let n = cols.len();
    let sv = singular_values(cols);
    let cond = if sv[n - 1] > 0.0 { sv[0] / sv[n - 1] } else { f64::INFINITY };
    // Householder-free QR via reorthogonalized Gram–Schmidt, keeping R.
    let mut q: Vec<Vec<C64>> = cols.to_vec();
    let mut r = vec![vec![C64::new(0.0, 0.0); n]; n];
    for j in 0..n {
        for _ in 0..2 {
            for i in 0..j {
                let c = dot(&q[i], &q[j]);
                r[i][j] += c;
                let qi = q[i].clone();
                for (v, qv) in q[j].iter_mut().zip(&qi) {
                    *v -= c * qv;
                }
            }
        }
        let nrm = norm(&q[j]);
        r[j][j] = C64::new(nrm, 0.0);
        if nrm > 0.0 {
            for v in q[j].iter_mut() {
                *v /= nrm;
            }
        }
    }
    let qtb: Vec<C64> = q.iter().map(|qi| dot(qi, b)).collect();
    let mut x = vec![C64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for j in i + 1..n {
            s -= r[i][j] * x[j];
        }
        x[i] = if r[i][i].norm() > 0.0 { s / r[i][i] } else { C64::new(0.0, 0.0) };
    }
    (x, cond)
}
