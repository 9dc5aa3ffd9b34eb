//! Reference numerics for the gap spectrum: a central-difference BdG operator
//! solved by Sturm bisection and inverse iteration, the shooting matcher, the
//! conserved current and the discrete symmetry checks.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{PotentialProfile, SimulationConfig};
use crate::ode::{self, OdeOptions};
use crate::scattering::bank_basis_at;

/// Relative margin below `Δ₀` that bounds the gap window.
pub const GAP_MARGIN: f64 = 1e-6;

/// Upper 2×2 block pattern of a node: `[[p, q], [q̄, r]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeBlock {
    pub p: f64,
    pub q: C64,
    pub r: f64,
}

/// Block-tridiagonal Hermitian BdG operator on the interior grid nodes, in the
/// interleaved `(u₁⁰, u₂⁰, u₁¹, u₂¹, …)` layout. Only the diagonal blocks and
/// the (diagonal) coupling blocks above them are stored; the lower half is
/// their conjugate transpose by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOperator {
    /// Matrix dimension, twice the number of interior nodes.
    pub size: usize,
    pub h: f64,
    pub dx: f64,
    pub x_max: f64,
    /// Interior abscissae.
    pub x: Vec<f64>,
    pub blocks: Vec<NodeBlock>,
    /// Coupling of node `j` to node `j+1`: `diag(c₁, c₂)`.
    pub hops: Vec<[C64; 2]>,
    pub delta0: f64,
    pub profile: PotentialProfile,
}

/// Largest admissible grid step: eight points per shortest local wavelength.
pub fn max_grid_step(profile: &PotentialProfile) -> f64 {
    let mu_max = match profile.chemical {
        crate::model::ChemicalPotential::Constant => profile.mu0,
        crate::model::ChemicalPotential::Graded { mu_bank } => profile.mu0.max(mu_bank),
    };
    profile.h / 8.0 * (2.0 * std::f64::consts::PI / (mu_max + profile.delta0).sqrt())
}

pub fn discretize(profile: &PotentialProfile, config: &SimulationConfig) -> Result<GridOperator> {
    if config.grid_points < 5 {
        return Err(Error::Constraint {
            key: "grid_points".into(),
            message: "need at least 5 grid points".into(),
        });
    }
    let dx = config.dx();
    let max_dx = max_grid_step(profile);
    if dx > max_dx {
        return Err(Error::Resolution {
            dx,
            max_dx,
            required_points: SimulationConfig::points_for_step(config.x_max, max_dx),
        });
    }
    assemble(profile, config)
}

/// Assembly without the resolution guard, for coarse diagnostic grids.
pub fn assemble(profile: &PotentialProfile, config: &SimulationConfig) -> Result<GridOperator> {
    if config.grid_points < 5 {
        return Err(Error::Constraint {
            key: "grid_points".into(),
            message: "need at least 5 grid points".into(),
        });
    }
    let dx = config.dx();
    let n = config.grid_points;
    let mid = (n - 1) as f64 / 2.0;
    // Symmetric abscissae, exact under x ↦ −x.
    let x: Vec<f64> = (1..n - 1).map(|i| (i as f64 - mid) * dx).collect();
    let c = profile.h * profile.h / (dx * dx);
    let blocks = x
        .iter()
        .map(|&xj| {
            let mu = profile.mu(xj);
            NodeBlock {
                p: 2.0 * c - mu,
                q: C64::from_polar(profile.delta(xj), 0.5 * profile.phase(xj)),
                r: -2.0 * c + mu,
            }
        })
        .collect();
    let hops = vec![[C64::new(-c, 0.0), C64::new(c, 0.0)]; x.len() - 1];
    Ok(GridOperator {
        size: 2 * x.len(),
        h: profile.h,
        dx,
        x_max: config.x_max,
        x,
        blocks,
        hops,
        delta0: profile.delta0,
        profile: *profile,
    })
}

impl GridOperator {
    pub fn nodes(&self) -> usize {
        self.x.len()
    }

    /// Entry `(i, j)` of the full matrix; the lower half is read through
    /// conjugation of the stored upper half.
    pub fn entry(&self, i: usize, j: usize) -> C64 {
        let zero = C64::new(0.0, 0.0);
        if i > j {
            return self.entry(j, i).conj();
        }
        let (ni, ci) = (i / 2, i % 2);
        let (nj, cj) = (j / 2, j % 2);
        if ni == nj {
            let b = &self.blocks[ni];
            return match (ci, cj) {
                (0, 0) => C64::new(b.p, 0.0),
                (1, 1) => C64::new(b.r, 0.0),
                _ => b.q,
            };
        }
        if nj == ni + 1 && ci == cj {
            return self.hops[ni][ci];
        }
        zero
    }

    /// `max |H_ij − conj(H_ji)|` over the band, plus any imaginary diagonal.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.size {
            for j in i..(i + 4).min(self.size) {
                worst = worst.max((self.entry(i, j) - self.entry(j, i).conj()).norm());
            }
            worst = worst.max(self.entry(i, i).im.abs());
        }
        worst
    }

    /// Row-sum bound on the spectral norm.
    pub fn norm_scale(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, b) in self.blocks.iter().enumerate() {
            let left = if j > 0 { self.hops[j - 1] } else { [C64::new(0.0, 0.0); 2] };
            let right = if j + 1 < self.blocks.len() { self.hops[j] } else { [C64::new(0.0, 0.0); 2] };
            worst = worst.max(b.p.abs() + b.q.norm() + left[0].norm() + right[0].norm());
            worst = worst.max(b.r.abs() + b.q.norm() + left[1].norm() + right[1].norm());
        }
        worst
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let m = self.nodes();
        let mut out = vec![C64::new(0.0, 0.0); self.size];
        for j in 0..m {
            let b = &self.blocks[j];
            let (a1, a2) = (v[2 * j], v[2 * j + 1]);
            out[2 * j] += a1 * b.p + b.q * a2;
            out[2 * j + 1] += b.q.conj() * a1 + a2 * b.r;
            if j + 1 < m {
                let t = self.hops[j];
                out[2 * j] += t[0] * v[2 * j + 2];
                out[2 * j + 1] += t[1] * v[2 * j + 3];
                out[2 * j + 2] += t[0].conj() * a1;
                out[2 * j + 3] += t[1].conj() * a2;
            }
        }
        out
    }

    /// Dense copy, for small operators and tests.
    pub fn to_dense(&self) -> Vec<Vec<C64>> {
        (0..self.size).map(|i| (0..self.size).map(|j| self.entry(i, j)).collect()).collect()
    }

    /// Number of eigenvalues strictly below `sigma` (block LDLᴴ inertia).
    pub fn count_below(&self, sigma: f64) -> usize {
        let tiny = f64::EPSILON * f64::EPSILON * self.norm_scale_cached();
        let mut count = 0;
        let (mut pp, mut qp, mut rp, mut detp) = (0.0, C64::new(0.0, 0.0), 0.0, 1.0);
        for (j, b) in self.blocks.iter().enumerate() {
            let (mut p, mut q, mut r) = (b.p - sigma, b.q, b.r - sigma);
            if j > 0 {
                let t = self.hops[j - 1];
                // Subtract Tᴴ D⁻¹ T with D⁻¹ = [[r, −q], [−q̄, p]] / det.
                p -= t[0].norm_sqr() * rp / detp;
                r -= t[1].norm_sqr() * pp / detp;
                q += t[0].conj() * qp * t[1] / detp;
            }
            let mut det = p * r - q.norm_sqr();
            if det.abs() < tiny {
                det = tiny;
            }
            if det < 0.0 {
                count += 1;
            } else if p < 0.0 {
                count += 2;
            }
            (pp, qp, rp, detp) = (p, q, r, det);
        }
        count
    }

    fn norm_scale_cached(&self) -> f64 {
        let b = &self.blocks[self.blocks.len() / 2];
        let t = self.hops.first().map(|t| t[0].norm()).unwrap_or(0.0);
        (b.p.abs() + b.q.norm() + 2.0 * t).max(1.0)
    }

    /// `−σ_y H σ_y` applied node-wise; equals the operator at `−φ`.
    pub fn charge_conjugated(&self) -> GridOperator {
        let mut out = self.clone();
        for b in out.blocks.iter_mut() {
            *b = NodeBlock { p: -b.r, q: b.q.conj(), r: -b.p };
        }
        for t in out.hops.iter_mut() {
            *t = [-t[1], -t[0]];
        }
        out.profile.phi = -self.profile.phi;
        out
    }

    /// `J H̄ J` with `J` the reflection of the node order.
    pub fn parity_conjugated(&self) -> GridOperator {
        let mut out = self.clone();
        let m = self.nodes();
        for j in 0..m {
            let b = self.blocks[m - 1 - j];
            out.blocks[j] = NodeBlock { p: b.p, q: b.q.conj(), r: b.r };
        }
        for j in 0..m - 1 {
            let t = self.hops[m - 2 - j];
            out.hops[j] = [t[0].conj(), t[1].conj()];
        }
        out
    }

    /// Largest entry-wise difference between two operators on the same grid.
    pub fn max_difference(&self, other: &GridOperator) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            worst = worst.max((a.p - b.p).abs()).max((a.r - b.r).abs()).max((a.q - b.q).norm());
        }
        for (a, b) in self.hops.iter().zip(&other.hops) {
            worst = worst.max((a[0] - b[0]).norm()).max((a[1] - b[1]).norm());
        }
        worst
    }

    /// Full-grid abscissae including the Dirichlet end points.
    pub fn full_grid(&self) -> Vec<f64> {
        let mut xs = Vec::with_capacity(self.nodes() + 2);
        xs.push(self.x[0] - self.dx);
        xs.extend_from_slice(&self.x);
        xs.push(self.x[self.nodes() - 1] + self.dx);
        xs
    }
}

/// Eigenvalues of `op` in `(lo, hi)`, ascending, by spectrum slicing.
pub fn eigenvalues_in(op: &GridOperator, lo: f64, hi: f64) -> Vec<f64> {
    let tol = 4.0 * f64::EPSILON * op.norm_scale();
    let (c_lo, c_hi) = (op.count_below(lo), op.count_below(hi));
    if c_hi <= c_lo {
        return Vec::new();
    }
    // Isolate single eigenvalues first, then refine each slice in parallel.
    let mut pending = vec![(lo, hi, c_lo, c_hi)];
    let mut slices = Vec::new();
    while let Some((a, b, ca, cb)) = pending.pop() {
        if cb - ca == 1 || b - a <= tol {
            slices.push((a, b, ca, cb));
            continue;
        }
        let m = 0.5 * (a + b);
        let cm = op.count_below(m);
        if cm > ca {
            pending.push((a, m, ca, cm));
        }
        if cb > cm {
            pending.push((m, b, cm, cb));
        }
    }
    slices.sort_by(|x, y| x.0.total_cmp(&y.0));
    let refined: Vec<Vec<f64>> = slices
        .par_iter()
        .map(|&(mut a, mut b, ca, cb)| {
            if cb - ca == 1 {
                while b - a > tol {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    if op.count_below(m) > ca {
                        b = m;
                    } else {
                        a = m;
                    }
                }
            }
            vec![0.5 * (a + b); cb - ca]
        })
        .collect();
    refined.into_iter().flatten().collect()
}

/// Eigenpair on the full grid, normalized so that `Σ |u₁|² + |u₂|² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWavefunction {
    pub x_grid: Vec<f64>,
    pub u1: Vec<C64>,
    pub u2: Vec<C64>,
    pub energy: f64,
    /// `⟨−ih∂ₓ⟩` over both components; its sign labels the momentum valley.
    pub momentum: f64,
    /// `‖(H − E)u‖`.
    pub residual: f64,
}

impl GridWavefunction {
    fn from_interior(op: &GridOperator, v: &[C64], energy: f64, residual: f64) -> Self {
        let m = op.nodes();
        let zero = C64::new(0.0, 0.0);
        let mut u1 = vec![zero; m + 2];
        let mut u2 = vec![zero; m + 2];
        for j in 0..m {
            u1[j + 1] = v[2 * j];
            u2[j + 1] = v[2 * j + 1];
        }
        let momentum = momentum_expectation(&u1, &u2, op.h, op.dx);
        Self {
            x_grid: op.full_grid(),
            u1,
            u2,
            energy,
            momentum,
            residual,
        }
    }

    pub fn dx(&self) -> f64 {
        self.x_grid[1] - self.x_grid[0]
    }

    /// `+1` for the positive-momentum valley, `−1` otherwise.
    pub fn valley(&self) -> i8 {
        if self.momentum >= 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn norm(&self) -> f64 {
        self.u1.iter().chain(&self.u2).map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Writes `x, Re u1, Im u1, Re u2, Im u2` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,re_u1,im_u1,re_u2,im_u2")?;
        for ((x, a), b) in self.x_grid.iter().zip(&self.u1).zip(&self.u2) {
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", x, a.re, a.im, b.re, b.im)?;
        }
        Ok(())
    }
}

fn momentum_expectation(u1: &[C64], u2: &[C64], h: f64, dx: f64) -> f64 {
    let mut p = 0.0;
    for u in [u1, u2] {
        for i in 1..u.len() - 1 {
            p += (u[i].conj() * (u[i + 1] - u[i - 1])).im;
        }
    }
    p * h / (2.0 * dx)
}

/// Complex band LU with partial pivoting, two sub- and two super-diagonals.
struct BandLu {
    n: usize,
    /// Row `i` holds columns `i−2 ..= i+4`.
    rows: Vec<[C64; 7]>,
    lower: Vec<[C64; 2]>,
    piv: Vec<usize>,
}

const KL: usize = 2;

impl BandLu {
    fn factor(op: &GridOperator, shift: f64) -> Self {
        let n = op.size;
        let zero = C64::new(0.0, 0.0);
        let mut rows = vec![[zero; 7]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            for j in i.saturating_sub(2)..(i + 3).min(n) {
                let mut v = op.entry(i, j);
                if i == j {
                    v -= shift;
                }
                row[j + KL - i] = v;
            }
        }
        let tiny = f64::EPSILON * op.norm_scale();
        let mut lower = vec![[zero; 2]; n];
        let mut piv = vec![0; n];
        for k in 0..n {
            let last = (k + KL).min(n - 1);
            let mut p = k;
            for i in k + 1..=last {
                if rows[i][k + KL - i].norm() > rows[p][k + KL - p].norm() {
                    p = i;
                }
            }
            piv[k] = p;
            let cols = k..=(k + 4).min(n - 1);
            if p != k {
                for j in cols.clone() {
                    let (a, b) = (rows[k][j + KL - k], rows[p][j + KL - p]);
                    rows[k][j + KL - k] = b;
                    rows[p][j + KL - p] = a;
                }
            }
            if rows[k][KL].norm() < tiny {
                rows[k][KL] = C64::new(tiny, 0.0);
            }
            let pivot = rows[k][KL];
            for i in k + 1..=last {
                let l = rows[i][k + KL - i] / pivot;
                lower[k][i - k - 1] = l;
                rows[i][k + KL - i] = zero;
                for j in k + 1..=(k + 4).min(n - 1) {
                    let v = rows[k][j + KL - k];
                    rows[i][j + KL - i] -= l * v;
                }
            }
        }
        Self { n, rows, lower, piv }
    }

    fn solve(&self, b: &mut [C64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            for i in k + 1..=(k + KL).min(n - 1) {
                b[i] -= self.lower[k][i - k - 1] * bk;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + 4).min(n - 1) {
                s -= self.rows[i][j + KL - i] * b[j];
            }
            b[i] = s / self.rows[i][KL];
        }
    }
}

fn start_vector(n: usize, seed: u64) -> Vec<C64> {
    // Deterministic splitmix-style sequence.
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    let mut next = move || {
        s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    (0..n).map(|_| C64::new(next(), next())).collect()
}

fn residual_norm(op: &GridOperator, v: &[C64], e: f64) -> f64 {
    let hv = op.apply(v);
    hv.iter().zip(v).map(|(a, b)| (a - b * e).norm_sqr()).sum::<f64>().sqrt()
}

/// Inverse iteration for a cluster of (nearly) equal eigenvalues, keeping the
/// vectors orthonormal within the cluster.
fn cluster_vectors(op: &GridOperator, energies: &[f64], seed: u64) -> Result<Vec<Vec<C64>>> {
    let scale = op.norm_scale();
    let target = 1e-10 * scale;
    let mut found: Vec<Vec<C64>> = Vec::new();
    for (idx, &e) in energies.iter().enumerate() {
        let mut accepted = None;
        let mut best = f64::INFINITY;
        for attempt in 0..4 {
            let shift = e + attempt as f64 * 1e-12 * scale;
            let lu = BandLu::factor(op, shift);
            let mut v = start_vector(op.size, seed.wrapping_add(idx as u64 * 7919 + attempt as u64));
            for _ in 0..4 {
                lu.solve(&mut v);
                for q in &found {
                    let c = linalg::dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
                }
                let nrm = linalg::norm(&v);
                v.iter_mut().for_each(|a| *a /= nrm);
            }
            let res = residual_norm(op, &v, e);
            best = best.min(res);
            if res <= target {
                accepted = Some(v);
                break;
            }
        }
        match accepted {
            Some(v) => found.push(v),
            None => {
                return Err(Error::Numerical(format!(
                    "inverse iteration stagnated at E = {e}: residual {best:.3e} above {target:.3e}"
                )))
            }
        }
    }
    Ok(found)
}

/// Rotates a cluster of degenerate vectors onto eigenvectors of the momentum
/// operator restricted to their span, so each carries a definite valley.
fn split_valleys(op: &GridOperator, vecs: &mut [Vec<C64>]) {
    let k = vecs.len();
    if k < 2 {
        return;
    }
    let pv: Vec<Vec<C64>> = vecs.iter().map(|v| momentum_apply(v, op.h, op.dx)).collect();
    let mut m = vec![vec![C64::new(0.0, 0.0); k]; k];
    for a in 0..k {
        for b in 0..k {
            m[a][b] = linalg::dot(&vecs[a], &pv[b]);
        }
    }
    let rot = hermitian_eigenvectors(&mut m);
    let old = vecs.to_vec();
    for (b, v) in vecs.iter_mut().enumerate() {
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = (0..k).map(|a| old[a][i] * rot[a][b]).sum();
        }
    }
}

fn momentum_apply(v: &[C64], h: f64, dx: f64) -> Vec<C64> {
    let n = v.len();
    let f = C64::new(0.0, -h / (2.0 * dx));
    let mut out = vec![C64::new(0.0, 0.0); n];
    for i in 0..n {
        let up = if i + 2 < n { v[i + 2] } else { C64::new(0.0, 0.0) };
        let down = if i >= 2 { v[i - 2] } else { C64::new(0.0, 0.0) };
        out[i] = f * (up - down);
    }
    out
}

/// Cyclic complex Jacobi on a small Hermitian matrix; returns the eigenvector
/// matrix (columns).
fn hermitian_eigenvectors(a: &mut [Vec<C64>]) -> Vec<Vec<C64>> {
    let k = a.len();
    let mut v = vec![vec![C64::new(0.0, 0.0); k]; k];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = C64::new(1.0, 0.0);
    }
    for _ in 0..100 {
        let off: f64 = (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].norm_sqr()).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[p][q];
                if apq.norm() < 1e-300 {
                    continue;
                }
                let phase = apq / apq.norm();
                let theta = 0.5 * (2.0 * apq.norm()).atan2(a[q][q].re - a[p][p].re);
                let (c, s) = (theta.cos(), theta.sin());
                // G = [[c, s·phase], [−s·conj(phase), c]] acting on columns p, q.
                let g_pp = C64::new(c, 0.0);
                let g_pq = phase * s;
                let g_qp = -phase.conj() * s;
                let g_qq = C64::new(c, 0.0);
                for row in a.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = x * g_pp + y * g_qp;
                    row[q] = x * g_pq + y * g_qq;
                }
                for j in 0..k {
                    let (x, y) = (a[p][j], a[q][j]);
                    a[p][j] = g_pp.conj() * x + g_qp.conj() * y;
                    a[q][j] = g_pq.conj() * x + g_qq.conj() * y;
                }
                for row in v.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = x * g_pp + y * g_qp;
                    row[q] = x * g_pq + y * g_qq;
                }
            }
        }
    }
    v
}

/// Eigenpairs in `(lo, hi)`, ascending. Eigenvalues closer than `1e−9` are
/// treated as one cluster and resolved into momentum-valley states.
pub fn eigenpairs_in(op: &GridOperator, lo: f64, hi: f64) -> Result<Vec<GridWavefunction>> {
    let values = eigenvalues_in(op, lo, hi);
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for &e in &values {
        match clusters.last_mut() {
            Some(c) if e - c[c.len() - 1] < 1e-9 => c.push(e),
            _ => clusters.push(vec![e]),
        }
    }
    let solved: Vec<Vec<GridWavefunction>> = clusters
        .par_iter()
        .enumerate()
        .map(|(ci, energies)| {
            let mut vecs = cluster_vectors(op, energies, ci as u64)?;
            split_valleys(op, &mut vecs);
            Ok(vecs
                .iter()
                .zip(energies)
                .map(|(v, &e)| GridWavefunction::from_interior(op, v, e, residual_norm(op, v, e)))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(solved.into_iter().flatten().collect())
}

/// All eigenpairs with `|E| < Δ₀(1 − 10⁻⁶)`.
pub fn eigen_gap(op: &GridOperator) -> Result<Vec<GridWavefunction>> {
    let edge = op.delta0 * (1.0 - GAP_MARGIN);
    eigenpairs_in(op, -edge, edge)
}

/// Extrapolation of a second-order quantity from steps `dx` and `dx/2`.
pub fn richardson(coarse: f64, fine: f64) -> f64 {
    fine + (fine - coarse) / 3.0
}

/// Observed convergence ratio `(e₁ − e₂)/(e₂ − e₄)` over steps `dx, dx/2, dx/4`.
pub fn convergence_ratio(e1: f64, e2: f64, e4: f64) -> f64 {
    (e1 - e2) / (e2 - e4)
}

/// Positive gap level of one valley followed across three resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolatedLevel {
    pub valley: i8,
    /// Values at `dx`, `dx/2`, `dx/4`.
    pub raw: [f64; 3],
    /// Richardson value from the two finest grids.
    pub energy: f64,
    pub ratio: f64,
}

/// Grid with half the step of `config`.
pub fn refined(config: &SimulationConfig) -> SimulationConfig {
    config.with_grid_points(2 * config.grid_points - 1)
}

/// Positive gap levels in `(lo, hi)` on grids `N`, `2N−1`, `4N−3`, paired by
/// order inside each valley and extrapolated.
pub fn extrapolated_levels(profile: &PotentialProfile, config: &SimulationConfig, lo: f64, hi: f64) -> Result<Vec<ExtrapolatedLevel>> {
    let configs = [*config, refined(config), refined(&refined(config))];
    let spectra: Vec<Vec<GridWavefunction>> = configs
        .par_iter()
        .map(|c| eigenpairs_in(&discretize(profile, c)?, lo, hi))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for valley in [1i8, -1] {
        let pick = |s: &Vec<GridWavefunction>| s.iter().filter(|w| w.valley() == valley).map(|w| w.energy).collect::<Vec<_>>();
        let (a, b, c) = (pick(&spectra[0]), pick(&spectra[1]), pick(&spectra[2]));
        // Levels can cross the window edge between resolutions; pair each fine
        // level with the nearest level on the other grids.
        for &e2 in &b {
            let near = |v: &Vec<f64>| v.iter().copied().min_by(|x, y| (x - e2).abs().total_cmp(&(y - e2).abs()));
            if let (Some(e1), Some(e4)) = (near(&a), near(&c)) {
                out.push(ExtrapolatedLevel {
                    valley,
                    raw: [e1, e2, e4],
                    energy: richardson(e2, e4),
                    ratio: convergence_ratio(e1, e2, e4),
                });
            }
        }
    }
    out.sort_by(|x, y| x.energy.total_cmp(&y.energy));
    Ok(out)
}

/// Conserved BdG current on the links of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxProfile {
    /// Link midpoints.
    pub x: Vec<f64>,
    /// `j = h·Im(ū₁u₁′ − ū₂u₂′)` per link.
    pub current: Vec<f64>,
    pub electron: Vec<f64>,
    pub hole: Vec<f64>,
    pub mean: f64,
    pub max_deviation: f64,
    /// `max(|j_e| + |j_h|)`, the size of the partial currents.
    pub scale: f64,
    pub relative_deviation: f64,
}

/// Link currents `h·Im(ū_i u_{i+1})/dx`; the statistics skip the two links
/// touching the phase jump at `x = 0`.
pub fn quantum_flux(psi: &GridWavefunction, profile: &PotentialProfile) -> FluxProfile {
    let dx = psi.dx();
    let h = profile.h;
    let n = psi.x_grid.len();
    let mut x = Vec::with_capacity(n - 1);
    let (mut je, mut jh, mut j) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n - 1 {
        let e = h * (psi.u1[i].conj() * psi.u1[i + 1]).im / dx;
        let o = h * (psi.u2[i].conj() * psi.u2[i + 1]).im / dx;
        x.push(0.5 * (psi.x_grid[i] + psi.x_grid[i + 1]));
        je.push(e);
        jh.push(o);
        j.push(e - o);
    }
    let keep: Vec<usize> = (0..n - 1).filter(|&i| psi.x_grid[i] != 0.0 && psi.x_grid[i + 1] != 0.0).collect();
    let mean = keep.iter().map(|&i| j[i]).sum::<f64>() / keep.len() as f64;
    let max_deviation = keep.iter().map(|&i| (j[i] - mean).abs()).fold(0.0, f64::max);
    let scale = keep.iter().map(|&i| je[i].abs() + jh[i].abs()).fold(0.0, f64::max);
    FluxProfile {
        x,
        current: j,
        electron: je,
        hole: jh,
        mean,
        max_deviation,
        scale,
        relative_deviation: if scale > 0.0 { max_deviation / scale } else { max_deviation },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// `max |E_i(φ) + E_{n−1−i}(−φ)|` over the gap window, with the `−φ`
    /// operator built as `−σ_y H σ_y`.
    pub charge_conjugation: f64,
    /// Entry-wise distance between `−σ_y H(φ) σ_y` and the operator assembled at `−φ`.
    pub charge_conjugation_matrix: f64,
    /// Entry-wise distance `‖J H̄ J − H‖`.
    pub pt_matrix: f64,
    /// Spectral distance between `H` and `J H̄ J`.
    pub pt_spectral: f64,
    pub levels: usize,
}

impl SymmetryReport {
    pub fn pt_defect(&self) -> f64 {
        self.pt_matrix.max(self.pt_spectral)
    }
}

fn paired_defect(a: &[f64], b: &[f64], negate: bool) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let n = a.len();
    (0..n)
        .map(|i| if negate { (a[i] + b[n - 1 - i]).abs() } else { (a[i] - b[i]).abs() })
        .fold(0.0, f64::max)
}

pub fn symmetry_spectrum(profile: &PotentialProfile, config: &SimulationConfig) -> Result<SymmetryReport> {
    let op = discretize(profile, config)?;
    let edge = profile.delta0 * (1.0 - GAP_MARGIN);
    let cc = op.charge_conjugated();
    let pt = op.parity_conjugated();
    let assembled = discretize(&(*profile).with_phi(-profile.phi), config)?;
    let (base, (e_cc, e_pt)) = rayon::join(
        || eigenvalues_in(&op, -edge, edge),
        || rayon::join(|| eigenvalues_in(&cc, -edge, edge), || eigenvalues_in(&pt, -edge, edge)),
    );
    Ok(SymmetryReport {
        charge_conjugation: paired_defect(&base, &e_cc, true),
        charge_conjugation_matrix: cc.max_difference(&assembled),
        pt_matrix: pt.max_difference(&op),
        pt_spectral: paired_defect(&base, &e_pt, false),
        levels: base.len(),
    })
}

/// Shooting settings.
#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    pub x_max: f64,
    pub ode: OdeOptions,
}

impl ShootingOptions {
    pub fn for_profile(profile: &PotentialProfile) -> Self {
        Self {
            x_max: SimulationConfig::for_profile(profile).x_max,
            ode: OdeOptions::default(),
        }
    }
}

/// Decaying two-column solution basis integrated from the bank at
/// `side·x_max` to the origin, in the variables `(u₁, h u₁′, u₂, h u₂′)`.
fn shoot_side(profile: &PotentialProfile, energy: f64, side: f64, opts: &ShootingOptions) -> Result<Vec<Vec<C64>>> {
    let h = profile.h;
    let x0 = side * opts.x_max;
    let bank = bank_basis_at(profile, energy, x0);
    let mut y0 = Vec::with_capacity(8);
    for mode in bank.decaying(side) {
        // e^{κx} with κ = exponent: h u′ = h κ u.
        let hk = mode.exponent * h;
        y0.extend_from_slice(&[mode.spinor[0], hk * mode.spinor[0], mode.spinor[1], hk * mode.spinor[1]]);
    }
    let half = 0.5 * side * profile.phi;
    let (ep, em) = (C64::from_polar(1.0, half), C64::from_polar(1.0, -half));
    let rhs = |x: f64, y: &[C64], dy: &mut [C64]| {
        let d = profile.delta(x);
        let mu = profile.mu(x);
        for c in 0..2 {
            let s = &y[4 * c..4 * c + 4];
            let (u1, w1, u2, w2) = (s[0], s[1], s[2], s[3]);
            dy[4 * c] = w1 / h;
            dy[4 * c + 1] = -((energy + mu) * u1 - d * ep * u2) / h;
            dy[4 * c + 2] = w2 / h;
            dy[4 * c + 3] = ((energy - mu) * u2 - d * em * u1) / h;
        }
    };
    let orthonormalize = |_x: f64, y: &mut [C64]| {
        let mut cols = vec![y[0..4].to_vec(), y[4..8].to_vec()];
        linalg::orthonormalize(&mut cols);
        y[0..4].copy_from_slice(&cols[0]);
        y[4..8].copy_from_slice(&cols[1]);
        true
    };
    let mut ode_opts = opts.ode;
    if ode_opts.first_step == 0.0 {
        ode_opts.first_step = 0.01 * h;
    }
    let (y, _) = ode::integrate(rhs, x0, &y0, 0.0, &ode_opts, orthonormalize)?;
    let mut cols = vec![y[0..4].to_vec(), y[4..8].to_vec()];
    linalg::orthonormalize(&mut cols);
    Ok(cols)
}

/// `|det [Y_L | Y_R](0)|` for orthonormalized decaying bases from both banks.
pub fn shoot_determinant(profile: &PotentialProfile, energy: f64) -> Result<f64> {
    shoot_determinant_with(profile, energy, &ShootingOptions::for_profile(profile))
}

pub fn shoot_determinant_with(profile: &PotentialProfile, energy: f64, opts: &ShootingOptions) -> Result<f64> {
    if !(energy > 0.0 && energy < profile.delta0) {
        return Err(Error::Domain(format!("shooting energy {energy} outside (0, delta0)")));
    }
    let (left, right) = rayon::join(
        || shoot_side(profile, energy, -1.0, opts),
        || shoot_side(profile, energy, 1.0, opts),
    );
    let (left, right) = (left?, right?);
    let rows: Vec<Vec<C64>> = (0..4).map(|i| vec![left[0][i], left[1][i], right[0][i], right[1][i]]).collect();
    Ok(linalg::det(&rows).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingRoot {
    pub energy: f64,
    pub indicator: f64,
}

/// Golden-section minimization of the shooting indicator on
/// `[guess − half_width, guess + half_width]`.
pub fn refine_shooting(profile: &PotentialProfile, guess: f64, half_width: f64, opts: &ShootingOptions) -> Result<ShootingRoot> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let lo_limit = 1e-9 * profile.delta0;
    let hi_limit = profile.delta0 * (1.0 - 1e-12);
    let (mut a, mut b) = ((guess - half_width).max(lo_limit), (guess + half_width).min(hi_limit));
    let f = |e: f64| shoot_determinant_with(profile, e, opts);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-11 * profile.delta0 {
        if fc < fd {
            b = d;
            (d, fd) = (c, fc);
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            (c, fc) = (d, fd);
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let energy = 0.5 * (a + b);
    Ok(ShootingRoot {
        energy,
        indicator: f(energy)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GapShape;

    fn small_config(profile: &PotentialProfile, points: usize) -> SimulationConfig {
        SimulationConfig::for_profile(profile).with_grid_points(points)
    }

    #[test]
    fn toy_assembly_matches_hand_computation() {
        let p = PotentialProfile::default_junction().with_h(1.0).with_gap_shape(GapShape::Zero);
        let cfg = SimulationConfig::for_profile(&p).with_x_max(6.0).with_grid_points(7);
        let op = assemble(&p, &cfg).unwrap();
        assert_eq!(op.size, 10);
        let c = 1.0 / (2.0 * 2.0);
        assert_eq!(op.entry(0, 0), C64::new(2.0 * c - 2.0, 0.0));
        assert_eq!(op.entry(1, 1), C64::new(-2.0 * c + 2.0, 0.0));
        assert_eq!(op.entry(0, 2), C64::new(-c, 0.0));
        assert_eq!(op.entry(3, 1), C64::new(c, 0.0));
        assert_eq!(op.entry(0, 1), C64::new(0.0, 0.0));
        assert_eq!(op.entry(0, 3), C64::new(0.0, 0.0));
        assert_eq!(op.hermiticity_defect(), 0.0);
    }

    #[test]
    fn resolution_refusal_reports_required_points() {
        let p = PotentialProfile::default_junction();
        match discretize(&p, &small_config(&p, 101)) {
            Err(Error::Resolution { required_points, .. }) => {
                let cfg = small_config(&p, required_points);
                assert!(cfg.dx() <= max_grid_step(&p));
                assert!(discretize(&p, &cfg).is_ok());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sturm_count_matches_dense_spectrum() {
        let p = PotentialProfile::default_junction().with_h(0.5);
        let op = assemble(&p, &small_config(&p, 41)).unwrap();
        let dense = op.to_dense();
        // Trace and count agree with a Gershgorin-free check: the count at
        // ±scale brackets the whole spectrum, and the sum of isolated
        // eigenvalues equals the trace.
        let s = op.norm_scale() * 1.01;
        assert_eq!(op.count_below(-s), 0);
        assert_eq!(op.count_below(s), op.size);
        let all = eigenvalues_in(&op, -s, s);
        assert_eq!(all.len(), op.size);
        let trace: f64 = (0..op.size).map(|i| dense[i][i].re).sum();
        assert!((all.iter().sum::<f64>() - trace).abs() < 1e-9 * s);
        // Determinant of H − E vanishes at each eigenvalue.
        for &e in all.iter().step_by(7) {
            let shifted: Vec<Vec<C64>> = (0..op.size)
                .map(|i| (0..op.size).map(|j| dense[i][j] - if i == j { e } else { 0.0 }).collect())
                .collect();
            let lu = BandLu::factor(&op, e);
            let min_pivot = lu.rows.iter().map(|r| r[KL].norm()).fold(f64::INFINITY, f64::min);
            assert!(min_pivot < 1e-8 * s, "{e}: {min_pivot}");
            assert!(linalg::det(&shifted).norm().is_finite());
        }
    }

    #[test]
    fn band_lu_solves_shifted_system() {
        let p = PotentialProfile::default_junction().with_h(0.5);
        let op = assemble(&p, &small_config(&p, 41)).unwrap();
        let x = start_vector(op.size, 3);
        let shift = 0.123;
        let mut b: Vec<C64> = op.apply(&x).iter().zip(&x).map(|(a, v)| a - v * shift).collect();
        BandLu::factor(&op, shift).solve(&mut b);
        let err = b.iter().zip(&x).map(|(a, v)| (a - v).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn decoupled_box_spectrum() {
        let p = PotentialProfile::default_junction().with_gap_shape(GapShape::Zero).with_phi(0.0).with_h(0.25);
        let cfg = SimulationConfig::for_profile(&p).with_grid_points(801);
        let op = discretize(&p, &cfg).unwrap();
        let values = eigenvalues_in(&op, -1.0, 1.0);
        let n_int = (cfg.grid_points - 1) as f64;
        let c = p.h * p.h / (cfg.dx() * cfg.dx());
        let mut expected = Vec::new();
        for m in 1..cfg.grid_points - 1 {
            let lam = 4.0 * c * (std::f64::consts::PI * m as f64 / (2.0 * n_int)).sin().powi(2) - p.mu0;
            for e in [lam, -lam] {
                if e.abs() < 1.0 {
                    expected.push(e);
                }
            }
        }
        expected.sort_by(f64::total_cmp);
        assert_eq!(values.len(), expected.len());
        for (a, b) in values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        // Continuum box levels after Richardson extrapolation.
        let fine = refined(&cfg);
        let vf = eigenvalues_in(&discretize(&p, &fine).unwrap(), -1.0, 1.0);
        for (a, b) in values.iter().zip(&vf) {
            let r = richardson(*a, *b);
            let target = (0..200)
                .map(|m| (p.h * std::f64::consts::PI * m as f64 / (2.0 * cfg.x_max)).powi(2) - p.mu0)
                .flat_map(|l| [l, -l])
                .min_by(|x, y| (x - r).abs().total_cmp(&(y - r).abs()))
                .unwrap();
            assert!((r - target).abs() < 1e-6 && (r - target).abs() < 0.05 * (b - target).abs(), "{r} {target}");
        }
    }

    #[test]
    fn default_spectrum_is_symmetric_and_resolved() {
        let p = PotentialProfile::default_junction();
        let op = discretize(&p, &SimulationConfig::for_profile(&p)).unwrap();
        assert_eq!(op.hermiticity_defect(), 0.0);
        let states = eigen_gap(&op).unwrap();
        assert!(!states.is_empty());
        let scale = op.norm_scale();
        for s in &states {
            assert!(s.residual <= 1e-10 * scale, "{} {}", s.energy, s.residual);
            assert!((s.norm() - 1.0).abs() < 1e-12);
            assert_eq!(s.u1[0], C64::new(0.0, 0.0));
            assert_eq!(*s.u2.last().unwrap(), C64::new(0.0, 0.0));
        }
        let e: Vec<f64> = states.iter().map(|s| s.energy).collect();
        let n = e.len();
        for i in 0..n {
            assert!((e[i] + e[n - 1 - i]).abs() < 1e-10);
        }
    }

    #[test]
    fn flux_conserved_and_negative_control() {
        let p = PotentialProfile::default_junction();
        let op = discretize(&p, &SimulationConfig::for_profile(&p)).unwrap();
        let states = eigenpairs_in(&op, 0.2, 0.6).unwrap();
        assert!(!states.is_empty());
        for s in &states {
            let f = quantum_flux(s, &p);
            assert!(f.relative_deviation <= 1e-4, "{}", f.relative_deviation);
            let mut broken = s.clone();
            broken.u2.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            assert!(quantum_flux(&broken, &p).relative_deviation >= 0.1);
        }
    }

    #[test]
    fn real_eigenfunction_carries_no_current() {
        let p = PotentialProfile::default_junction().with_phi(0.0);
        let op = discretize(&p, &SimulationConfig::for_profile(&p)).unwrap();
        let s = &eigenpairs_in(&op, 0.3, 0.5).unwrap()[0];
        let real = GridWavefunction {
            u1: s.u1.iter().map(|z| C64::new(z.re, 0.0)).collect(),
            u2: s.u2.iter().map(|z| C64::new(z.re, 0.0)).collect(),
            ..s.clone()
        };
        let f = quantum_flux(&real, &p);
        assert!(f.current.iter().all(|j| j.abs() < 1e-12));
    }

    #[test]
    fn symmetry_report_and_broken_control() {
        let p = PotentialProfile::default_junction();
        let cfg = SimulationConfig::for_profile(&p).with_grid_points(2001);
        let r = symmetry_spectrum(&p, &cfg).unwrap();
        assert!(r.charge_conjugation <= 1e-10, "{r:?}");
        assert_eq!(r.charge_conjugation_matrix, 0.0);
        assert!(r.pt_defect() <= 1e-10, "{r:?}");
        let broken = p.with_asymmetry(0.1);
        let rb = symmetry_spectrum(&broken, &cfg).unwrap();
        assert!(rb.pt_matrix > 0.5, "{rb:?}");
    }

    #[test]
    fn eigenfunction_csv_has_header_and_rows() {
        let p = PotentialProfile::default_junction().with_h(0.5);
        let op = assemble(&p, &small_config(&p, 41)).unwrap();
        let s = &eigen_gap(&op).unwrap()[0];
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), s.x_grid.len() + 1);
        assert!(text.starts_with("x,re_u1,im_u1,re_u2,im_u2\n"));
    }
}
