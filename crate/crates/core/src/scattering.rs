//! Scalar Schrödinger transfer matrices and resonances, bank spinor modes of
//! the BdG operator, and the relative phase read off numerical solutions.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::classical::{make_energy_slice, symbol_eigen};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix2C};
use crate::model::PotentialProfile;
use crate::ode::{self, OdeOptions};
use crate::oracle::{GridWavefunction, ShootingOptions};
use crate::quadrature::integrate;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareBump {
    pub left: f64,
    pub right: f64,
    pub height: f64,
}

/// `height·(1 − r²)²` with `r = (x − center)/half_width`, zero for `|r| ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothBump {
    pub center: f64,
    pub half_width: f64,
    pub height: f64,
}

/// Real potential with compact support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Free,
    Squares { bumps: Vec<SquareBump> },
    Smooth { bumps: Vec<SmoothBump> },
    /// Piecewise-linear samples, zero outside the sampled interval.
    Tabulated { x: Vec<f64>, v: Vec<f64> },
}

impl Potential {
    pub fn double_barrier(height: f64, barrier_width: f64, well_width: f64) -> Self {
        let a = 0.5 * well_width;
        Potential::Squares {
            bumps: vec![
                SquareBump { left: -a - barrier_width, right: -a, height },
                SquareBump { left: a, right: a + barrier_width, height },
            ],
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Squares { bumps } => bumps.iter().filter(|b| x >= b.left && x < b.right).map(|b| b.height).sum(),
            Potential::Smooth { bumps } => bumps
                .iter()
                .map(|b| {
                    let r = (x - b.center) / b.half_width;
                    if r.abs() < 1.0 {
                        b.height * (1.0 - r * r).powi(2)
                    } else {
                        0.0
                    }
                })
                .sum(),
            Potential::Tabulated { x: xs, v } => {
                if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
                    return 0.0;
                }
                let i = xs.partition_point(|&t| t <= x).clamp(1, xs.len() - 1);
                let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                v[i - 1] + t * (v[i] - v[i - 1])
            }
        }
    }

    /// Points where the potential or its derivative may jump, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = match self {
            Potential::Free => Vec::new(),
            Potential::Squares { bumps } => bumps.iter().flat_map(|b| [b.left, b.right]).collect(),
            Potential::Smooth { bumps } => bumps.iter().flat_map(|b| [b.center - b.half_width, b.center + b.half_width]).collect(),
            Potential::Tabulated { x, .. } => x.clone(),
        };
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        let pts = self.breakpoints();
        Some((*pts.first()?, *pts.last()?))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(format!("malformed potential: {m}")));
        match self {
            Potential::Free => Ok(()),
            Potential::Squares { bumps } => {
                if bumps.iter().any(|b| !(b.right > b.left) || !b.height.is_finite()) {
                    return bad("square bump needs left < right and a finite height");
                }
                Ok(())
            }
            Potential::Smooth { bumps } => {
                if bumps.iter().any(|b| !(b.half_width > 0.0) || !b.height.is_finite() || !b.center.is_finite()) {
                    return bad("smooth bump needs a positive half width");
                }
                Ok(())
            }
            Potential::Tabulated { x, v } => {
                if x.len() != v.len() || x.len() < 2 {
                    return bad("table needs at least two (x, V) samples");
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) || v.iter().any(|t| !t.is_finite()) {
                    return bad("table abscissae must increase strictly");
                }
                Ok(())
            }
        }
    }
}

/// Monodromy `M(k)` mapping the coefficients of `(e^{ikx/h}, e^{−ikx/h})`
/// left of the support to those on the right, and the amplitudes of the
/// solution `f₁ + B f₂ ↦ A f₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub m: Matrix2C,
    /// Transmission for incidence from the left.
    pub a: C64,
    /// Reflection for incidence from the left.
    pub b: C64,
    /// Transmission for incidence from the right.
    pub a_right: C64,
    /// Reflection for incidence from the right.
    pub b_right: C64,
}

fn transfer_options(h: f64) -> OdeOptions {
    OdeOptions {
        atol: 1e-13,
        rtol: 1e-13,
        first_step: 0.01 * h,
        ..OdeOptions::default()
    }
}

/// Carries `(u, h u')` of `−h²u'' + V u = k² u` across the support, piece by
/// piece between breakpoints, in either direction.
fn propagate(potential: &Potential, k2: C64, h: f64, y: [C64; 2], backwards: bool) -> Result<[C64; 2]> {
    let mut pts = potential.breakpoints();
    if backwards {
        pts.reverse();
    }
    let opts = transfer_options(h);
    let mut y = y.to_vec();
    for w in pts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let (lo, hi) = (x0.min(x1), x0.max(x1));
        let margin = 1e-9 * (hi - lo);
        // Evaluate inside the piece so that jumps are seen one-sided.
        let rhs = |x: f64, y: &[C64], dy: &mut [C64]| {
            let v = potential.value(x.clamp(lo + margin, hi - margin));
            dy[0] = y[1] / h;
            dy[1] = (v - k2) * y[0] / h;
        };
        y = ode::integrate(rhs, x0, &y, x1, &opts, |_, _| false)?.0;
    }
    Ok([y[0], y[1]])
}

/// Transfer data from the two Jost solutions, each integrated in the
/// direction in which it dominates so that opaque barriers stay accurate:
/// `e^{ikx/h}` continued leftwards from the right edge and `e^{−ikx/h}`
/// continued rightwards from the left edge.
pub fn transfer_schrodinger(potential: &Potential, k: C64, h: f64) -> Result<Transfer> {
    if k.norm() == 0.0 {
        return Err(Error::Domain("transfer matrix needs k ≠ 0".into()));
    }
    let (xa, xb) = match potential.support() {
        Some((xa, xb)) if xb > xa => (xa, xb),
        _ => {
            return Ok(Transfer {
                m: Matrix2C::identity(),
                a: c(1.0, 0.0),
                b: c(0.0, 0.0),
                a_right: c(1.0, 0.0),
                b_right: c(0.0, 0.0),
            })
        }
    };
    let ik = c(0.0, 1.0) * k;
    let f1 = |x: f64| (ik * x / h).exp();
    let f2 = |x: f64| (-ik * x / h).exp();
    let coeffs = |x: f64, y: [C64; 2]| ((y[0] + y[1] / ik) / (2.0 * f1(x)), (y[0] - y[1] / ik) / (2.0 * f2(x)));
    let k2 = k * k;
    let right = propagate(potential, k2, h, [f1(xb), ik * f1(xb)], true)?;
    let left = propagate(potential, k2, h, [f2(xa), -ik * f2(xa)], false)?;
    // f₁ on the right is α f₁ + β f₂ on the left; f₂ on the left is γ f₁ + δ f₂
    // on the right.
    let (alpha, beta) = coeffs(xa, right);
    let (gamma, delta) = coeffs(xb, left);
    let m = Matrix2C::new((1.0 - beta * gamma) / alpha, gamma, -beta * delta / alpha, delta);
    Ok(Transfer {
        m,
        a: 1.0 / alpha,
        b: beta / alpha,
        a_right: 1.0 / delta,
        b_right: gamma / delta,
    })
}

/// `M₂₂(k) = 1/A(k)`; its zeros are the poles of `S`.
pub fn inverse_transmission(potential: &Potential, k: C64, h: f64) -> Result<C64> {
    Ok(transfer_schrodinger(potential, k, h)?.m.m[1][1])
}

/// Defects of the real-`k` identities. Identities on `M` are divided by
/// `max(1, ‖M‖²_max)`, the size of the rounding floor of their left-hand
/// sides; those on `S` are absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Su11Report {
    /// `‖M†ηM − η‖_max`, `η = diag(1, −1)`.
    pub pseudo_unitarity: f64,
    pub det: f64,
    /// `||A|² + |B|² − 1|`.
    pub probability: f64,
    /// `‖S†S − I‖_max`.
    pub unitarity: f64,
    /// `‖S − Sᵀ‖_max`.
    pub symmetry: f64,
    /// `‖M‖_max`.
    pub m_norm: f64,
}

impl Su11Report {
    pub fn max_defect(&self) -> f64 {
        self.pseudo_unitarity.max(self.det).max(self.probability).max(self.unitarity).max(self.symmetry)
    }
}

/// `S = [[B, A′], [A, B′]]` mapping incoming amplitudes (left, right) to
/// outgoing ones (left, right); primes mark incidence from the right.
pub fn s_matrix(t: &Transfer) -> Matrix2C {
    Matrix2C::new(t.b, t.a_right, t.a, t.b_right)
}

pub fn su11_u2_checks(m: &Matrix2C, a: C64, b: C64) -> Su11Report {
    let eta = Matrix2C::diag(c(1.0, 0.0), c(-1.0, 0.0));
    let (m12, m22) = (m.m[0][1], m.m[1][1]);
    let s = Matrix2C::new(b, 1.0 / m22, a, m12 / m22);
    let m_norm = m.max_abs();
    let floor = m_norm.powi(2).max(1.0);
    Su11Report {
        pseudo_unitarity: (m.adjoint() * eta * *m - eta).max_abs() / floor,
        det: (m.det() - 1.0).norm() / floor,
        probability: (a.norm_sqr() + b.norm_sqr() - 1.0).abs(),
        unitarity: (s.adjoint() * s - Matrix2C::identity()).max_abs(),
        symmetry: (s - s.transpose()).max_abs(),
        m_norm,
    }
}

/// Closed-form square-barrier transmission `A` for `V₀` on `[0, a]`.
pub fn square_barrier_transmission(height: f64, width: f64, k: C64, h: f64) -> C64 {
    let q = (k * k - height).sqrt();
    let (kk, qq) = (k / h, q / h);
    let i = c(0.0, 1.0);
    let denom = (qq * width).cos() - i * (kk * kk + qq * qq) / (2.0 * kk * qq) * (qq * width).sin();
    (-i * kk * width).exp() / denom
}

/// Rectangle `[re.0, re.1] × [im.0, im.1]` in the complex `k` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRect {
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl SearchRect {
    pub fn contains(&self, k: C64, slack: f64) -> bool {
        k.re >= self.re.0 - slack && k.re <= self.re.1 + slack && k.im >= self.im.0 - slack && k.im <= self.im.1 + slack
    }

    fn corners(&self) -> [C64; 4] {
        [c(self.re.0, self.im.0), c(self.re.1, self.im.0), c(self.re.1, self.im.1), c(self.re.0, self.im.1)]
    }

    fn width(&self) -> f64 {
        self.re.1 - self.re.0
    }

    fn height(&self) -> f64 {
        self.im.1 - self.im.0
    }

    pub fn inflated(&self, factor: f64) -> SearchRect {
        let (dw, dh) = (0.5 * factor * self.width(), 0.5 * factor * self.height());
        SearchRect {
            re: (self.re.0 - dw, self.re.1 + dw),
            im: (self.im.0 - dh, self.im.1 + dh),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonancePole {
    pub k: C64,
    pub energy: C64,
    /// `Im k > 0`, the sign convention used for physical resonances here.
    pub physical: bool,
    /// `|1/A|` at the converged point.
    pub residual: f64,
}

/// Winding number of `f` around the rectangle, or `None` when the contour
/// passes too close to a zero.
fn winding<F: Fn(C64) -> Result<C64> + Sync>(f: &F, rect: &SearchRect) -> Result<Option<i64>> {
    let corners = rect.corners();
    let scale = rect.width().max(rect.height());
    let mut total = 0.0;
    for e in 0..4 {
        let (z0, z1) = (corners[e], corners[(e + 1) % 4]);
        let n0 = 24;
        let pts: Vec<C64> = (0..=n0).map(|i| z0 + (z1 - z0) * (i as f64 / n0 as f64)).collect();
        let vals: Vec<C64> = pts.par_iter().map(|&z| f(z)).collect::<Result<_>>()?;
        let mut stack: Vec<(C64, C64, C64, C64, usize)> = (0..n0).rev().map(|i| (pts[i], vals[i], pts[i + 1], vals[i + 1], 0)).collect();
        while let Some((za, fa, zb, fb, depth)) = stack.pop() {
            let step = (fb / fa).arg();
            let near = |fz: C64, slope: f64| fz.norm() < 1e-6 * slope;
            let slope = (fb - fa).norm() / (zb - za).norm();
            if near(fa, slope) || near(fb, slope) {
                return Ok(None);
            }
            if step.abs() > PI / 8.0 && depth < 40 && (zb - za).norm() > 1e-12 * scale {
                let zm = 0.5 * (za + zb);
                let fm = f(zm)?;
                stack.push((zm, fm, zb, fb, depth + 1));
                stack.push((za, fa, zm, fm, depth + 1));
            } else {
                total += step;
            }
        }
    }
    Ok(Some((total / (2.0 * PI)).round() as i64))
}

fn newton<F: Fn(C64) -> Result<C64>>(f: &F, mut z: C64) -> Result<(C64, f64)> {
    let mut fz = f(z)?;
    for _ in 0..60 {
        let d = 1e-7 * z.norm().max(1.0);
        let df = (f(z + d)? - f(z - d)?) / (2.0 * d);
        if df.norm() == 0.0 {
            break;
        }
        let step = fz / df;
        z -= step;
        fz = f(z)?;
        if step.norm() <= 1e-14 * z.norm().max(1.0) {
            break;
        }
    }
    Ok((z, fz.norm()))
}

/// Zeros of `1/A(k)` inside `rect` by argument-principle subdivision and
/// Newton polishing.
pub fn find_resonances(potential: &Potential, rect: &SearchRect, h: f64) -> Result<Vec<ResonancePole>> {
    if rect.contains(c(0.0, 0.0), 0.0) {
        return Err(Error::Domain("search rectangle must avoid k = 0".into()));
    }
    if potential.support().is_none() {
        return Ok(Vec::new());
    }
    let f = |k: C64| inverse_transmission(potential, k, h);
    let min_size = 1e-3 * rect.width().max(rect.height());
    let mut pending = vec![*rect];
    let mut seeds = Vec::new();
    let mut retries = 0;
    while let Some(r) = pending.pop() {
        let count = match winding(&f, &r)? {
            Some(n) => n,
            None => {
                retries += 1;
                if retries > 50 {
                    return Err(Error::Numerical("contour keeps passing through zeros of 1/A".into()));
                }
                pending.push(r.inflated(1e-3 * (1.0 + retries as f64 * 0.37)));
                continue;
            }
        };
        if count <= 0 {
            continue;
        }
        if count == 1 && r.width().max(r.height()) < 100.0 * min_size || r.width().max(r.height()) < min_size {
            seeds.push(c(0.5 * (r.re.0 + r.re.1), 0.5 * (r.im.0 + r.im.1)));
            continue;
        }
        // Split off-centre so that the cut rarely lands on a zero.
        let t = 0.5 + 0.0137 * ((pending.len() % 5) as f64 - 2.0);
        if r.width() >= r.height() {
            let m = r.re.0 + t * r.width();
            pending.push(SearchRect { re: (r.re.0, m), im: r.im });
            pending.push(SearchRect { re: (m, r.re.1), im: r.im });
        } else {
            let m = r.im.0 + t * r.height();
            pending.push(SearchRect { re: r.re, im: (r.im.0, m) });
            pending.push(SearchRect { re: r.re, im: (m, r.im.1) });
        }
    }
    let polished: Vec<(C64, f64)> = seeds.par_iter().map(|&z| newton(&f, z)).collect::<Result<_>>()?;
    let mut poles: Vec<ResonancePole> = Vec::new();
    let slack = 1e-6 * rect.width().max(rect.height());
    for (k, residual) in polished {
        if !rect.contains(k, slack) || poles.iter().any(|p| (p.k - k).norm() < 1e-9 * k.norm().max(1.0)) {
            continue;
        }
        poles.push(ResonancePole {
            k,
            energy: k * k,
            physical: k.im > 0.0,
            residual,
        });
    }
    poles.sort_by(|a, b| a.k.re.total_cmp(&b.k.re).then(a.k.im.total_cmp(&b.k.im)));
    Ok(poles)
}

/// One bank plane wave `spinor·e^{exponent·x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankMode {
    pub spinor: [C64; 2],
    pub exponent: C64,
    /// `+1` for the `F₁` family (`k² = μ + i√(Δ²−E²)`), `−1` for `F₂`.
    pub family: i8,
    pub decays_right: bool,
    pub decays_left: bool,
}

/// Bank modes at energy `E` for frozen `Δ`, `μ` and the phase on each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankBasis {
    pub energy: f64,
    pub delta: f64,
    pub mu: f64,
    /// Principal `sqrt(μ + i√(Δ²−E²))`, `Im k > 0` inside the gap.
    pub k: C64,
    /// Modes with the left-bank phase `−φ/2`.
    pub left: [BankMode; 4],
    /// Modes with the right-bank phase `+φ/2`.
    pub right: [BankMode; 4],
}

impl BankBasis {
    /// The two modes that decay towards `side·∞` (`side = ±1`), taken from
    /// that side's set.
    pub fn decaying(&self, side: f64) -> Vec<BankMode> {
        if side > 0.0 {
            self.right.iter().filter(|m| m.decays_right).copied().collect()
        } else {
            self.left.iter().filter(|m| m.decays_left).copied().collect()
        }
    }
}

fn bank_modes(energy: f64, delta: f64, mu: f64, phase: f64, h: f64) -> (C64, [BankMode; 4]) {
    let s = c(delta * delta - energy * energy, 0.0).sqrt();
    let i = c(0.0, 1.0);
    let k1 = (mu + i * s).sqrt();
    let k2 = (mu - i * s).sqrt();
    let head = C64::from_polar(std::f64::consts::FRAC_1_SQRT_2, 0.5 * phase);
    let tail = |sign: f64| (energy - sign * i * s) / (delta * std::f64::consts::SQRT_2);
    let mut modes = [BankMode {
        spinor: [head, tail(1.0)],
        exponent: c(0.0, 0.0),
        family: 1,
        decays_right: false,
        decays_left: false,
    }; 4];
    let entries = [(k1, 1.0, 1i8), (-k1, 1.0, 1), (k2, -1.0, -1), (-k2, -1.0, -1)];
    for (slot, (k, sign, family)) in modes.iter_mut().zip(entries) {
        let exponent = i * k / h;
        *slot = BankMode {
            spinor: [head, tail(sign)],
            exponent,
            family,
            decays_right: exponent.re < 0.0,
            decays_left: exponent.re > 0.0,
        };
    }
    (k1, modes)
}

/// Bank modes with the asymptotic `Δ₀` and bank chemical potential.
pub fn bank_basis(profile: &PotentialProfile, energy: f64) -> BankBasis {
    let far = 1e3 * (profile.half_length + profile.junction_width);
    let mu = profile.mu(far);
    assemble_bank(profile, energy, profile.delta0, mu)
}

/// Bank modes frozen at the local `Δ(x)`, `μ(x)`.
pub fn bank_basis_at(profile: &PotentialProfile, energy: f64, x: f64) -> BankBasis {
    assemble_bank(profile, energy, profile.delta(x).abs(), profile.mu(x))
}

fn assemble_bank(profile: &PotentialProfile, energy: f64, delta: f64, mu: f64) -> BankBasis {
    let (k, left) = bank_modes(energy, delta, mu, -profile.phi, profile.h);
    let (_, right) = bank_modes(energy, delta, mu, profile.phi, profile.h);
    BankBasis {
        energy,
        delta,
        mu,
        k,
        left,
        right,
    }
}

/// Zero-energy spinor directions `(e^{iφ/2}, ∓i)/√2` of the two families.
pub fn leading_spinors(phase: f64) -> ([C64; 2], [C64; 2]) {
    let head = C64::from_polar(std::f64::consts::FRAC_1_SQRT_2, 0.5 * phase);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    ([head, c(0.0, -r)], [head, c(0.0, r)])
}

/// Fit window half-offsets: `[x_E − 2δ, x_E − δ]` and its mirror image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Windows {
    pub x_branch: f64,
    pub delta: f64,
}

impl Windows {
    pub fn for_energy(profile: &PotentialProfile, energy: f64) -> Result<Self> {
        let slice = make_energy_slice(profile, energy)?;
        let delta = 5.0 * profile.h / profile.mu0.sqrt();
        if slice.x_branch - 2.0 * delta <= 0.0 {
            return Err(Error::Domain(format!(
                "fit windows overlap the origin: x_E = {} with delta = {delta}",
                slice.x_branch
            )));
        }
        Ok(Self {
            x_branch: slice.x_branch,
            delta,
        })
    }

    /// Right window; the left one is its mirror.
    pub fn right(&self) -> (f64, f64) {
        (self.x_branch - 2.0 * self.delta, self.x_branch - self.delta)
    }

    pub fn left(&self) -> (f64, f64) {
        let (a, b) = self.right();
        (-b, -a)
    }
}

/// Leading-order WKB spinor mode `(ρ, σ)` phased from `origin`:
/// `Y_ρ K_ρ^{−1/4} exp(iσ∫_origin^x √K_ρ/h)` with `K_ρ = μ + ρ√(E² − Δ²)`.
fn wkb_mode(profile: &PotentialProfile, energy: f64, rho: f64, sigma: f64, origin: f64, x: f64) -> Result<[C64; 2]> {
    let k_of = |t: f64| {
        let d = profile.delta(t).abs();
        let s = ((energy - d) * (energy + d)).max(0.0).sqrt();
        profile.mu(t) + rho * s
    };
    let kx = k_of(x);
    if kx <= 0.0 {
        return Err(Error::Domain(format!("kinetic branch closed at x = {x}")));
    }
    let phase = sigma * integrate(|t| k_of(t).max(0.0).sqrt(), origin, x, 24) / profile.h;
    let eig = symbol_eigen(profile, x, sigma * kx.sqrt())?;
    let amp = C64::from_polar(kx.powf(-0.25), phase);
    Ok([eig.y_plus[0] * amp, eig.y_plus[1] * amp])
}

/// Mode order used by the window fits.
const MODES: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)];

fn mode_index(rho: f64, sigma: f64) -> usize {
    MODES.iter().position(|&(r, s)| r == rho && s == sigma).unwrap()
}

/// Least-squares coefficients of the four WKB modes for samples `(x, u₁, u₂)`.
fn fit_window(profile: &PotentialProfile, energy: f64, origin: f64, samples: &[(f64, C64, C64)]) -> Result<[C64; 4]> {
    let n = samples.len();
    let mut cols = vec![vec![c(0.0, 0.0); 2 * n]; 4];
    let mut rhs = vec![c(0.0, 0.0); 2 * n];
    for (i, &(x, u1, u2)) in samples.iter().enumerate() {
        rhs[2 * i] = u1;
        rhs[2 * i + 1] = u2;
        for (j, &(rho, sigma)) in MODES.iter().enumerate() {
            let m = wkb_mode(profile, energy, rho, sigma, origin, x)?;
            cols[j][2 * i] = m[0];
            cols[j][2 * i + 1] = m[1];
        }
    }
    let (x, cond) = linalg::least_squares(&cols, &rhs);
    if cond > 1e6 {
        return Err(Error::IllConditioned { cond });
    }
    Ok([x[0], x[1], x[2], x[3]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePhase {
    /// Right-window over left-window coefficient of the electron mode in the
    /// state's momentum valley, modes phased from each window centre.
    pub d: C64,
    /// `arg d − σ∫√K₊/h` between the window centres, wrapped to `(−π, π]`.
    pub tau_over_h: f64,
    pub valley: i8,
}

pub fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

pub fn relative_phase(profile: &PotentialProfile, energy: f64, psi: &GridWavefunction) -> Result<RelativePhase> {
    let win = Windows::for_energy(profile, energy)?;
    let collect = |(a, b): (f64, f64)| -> Vec<(f64, C64, C64)> {
        psi.x_grid
            .iter()
            .enumerate()
            .filter(|(_, &x)| x >= a && x <= b)
            .map(|(i, &x)| (x, psi.u1[i], psi.u2[i]))
            .collect()
    };
    let (wl, wr) = (win.left(), win.right());
    let (cl, cr) = (0.5 * (wl.0 + wl.1), 0.5 * (wr.0 + wr.1));
    let left = fit_window(profile, energy, cl, &collect(wl))?;
    let right = fit_window(profile, energy, cr, &collect(wr))?;
    let sigma = if psi.momentum >= 0.0 { 1.0 } else { -1.0 };
    let idx = mode_index(1.0, sigma);
    let d = right[idx] / left[idx];
    let k_plus = |t: f64| {
        let dd = profile.delta(t).abs();
        (profile.mu(t) + ((energy - dd) * (energy + dd)).max(0.0).sqrt()).sqrt()
    };
    // Split at the origin where the phase jumps.
    let action = integrate(k_plus, cl, 0.0, 96) + integrate(k_plus, 0.0, cr, 96);
    Ok(RelativePhase {
        d,
        tau_over_h: wrap_phase(d.arg() - sigma * action / profile.h),
        valley: sigma as i8,
    })
}

/// Samples of the two-dimensional space of solutions decaying into the bank
/// at `side·x_max`, taken on `points` inside the right window. Columns are
/// re-orthonormalized outside the window only, so the samples share a basis.
fn shot_samples(profile: &PotentialProfile, energy: f64, side: f64, points: &[f64], opts: &ShootingOptions) -> Result<[Vec<(f64, C64, C64)>; 2]> {
    let h = profile.h;
    let x0 = side * opts.x_max;
    let bank = bank_basis_at(profile, energy, x0);
    let mut y = Vec::with_capacity(8);
    for mode in bank.decaying(side) {
        let hk = mode.exponent * h;
        y.extend_from_slice(&[mode.spinor[0], hk * mode.spinor[0], mode.spinor[1], hk * mode.spinor[1]]);
    }
    let (w0, w1) = (points[0], points[points.len() - 1]);
    let rhs_for = |sign: f64| {
        let half = 0.5 * sign * profile.phi;
        let (ep, em) = (C64::from_polar(1.0, half), C64::from_polar(1.0, -half));
        move |x: f64, y: &[C64], dy: &mut [C64]| {
            let d = profile.delta(x);
            let mu = profile.mu(x);
            for col in 0..2 {
                let s = &y[4 * col..4 * col + 4];
                dy[4 * col] = s[1] / h;
                dy[4 * col + 1] = -((energy + mu) * s[0] - d * ep * s[2]) / h;
                dy[4 * col + 2] = s[3] / h;
                dy[4 * col + 3] = ((energy - mu) * s[2] - d * em * s[0]) / h;
            }
        }
    };
    let renorm = |x: f64, y: &mut [C64]| {
        if x >= w0 - 1e-12 && x <= w1 + 1e-12 {
            return false;
        }
        let mut cols = vec![y[0..4].to_vec(), y[4..8].to_vec()];
        linalg::orthonormalize(&mut cols);
        y[0..4].copy_from_slice(&cols[0]);
        y[4..8].copy_from_slice(&cols[1]);
        true
    };
    let mut o = opts.ode;
    o.first_step = 0.01 * h;
    let mut x = x0;
    if side < 0.0 {
        y = ode::integrate(rhs_for(-1.0), x, &y, 0.0, &o, renorm)?.0;
        x = 0.0;
    }
    let order: Vec<f64> = if side < 0.0 { points.to_vec() } else { points.iter().rev().copied().collect() };
    let mut out: [Vec<(f64, C64, C64)>; 2] = [Vec::new(), Vec::new()];
    for &p in &order {
        y = ode::integrate(rhs_for(1.0), x, &y, p, &o, renorm)?.0;
        x = p;
        for col in 0..2 {
            out[col].push((p, y[4 * col], y[4 * col + 2]));
        }
    }
    Ok(out)
}

/// Ratio `c_h/c_e` of the valley-pure combination of a two-dimensional
/// solution space fitted in the right window.
fn valley_ratio(profile: &PotentialProfile, energy: f64, origin: f64, cols: &[Vec<(f64, C64, C64)>; 2], valley: f64) -> Result<C64> {
    let c1 = fit_window(profile, energy, origin, &cols[0])?;
    let c2 = fit_window(profile, energy, origin, &cols[1])?;
    let other = mode_index(1.0, -valley);
    let (alpha, beta) = (c2[other], -c1[other]);
    let e = mode_index(1.0, valley);
    let hh = mode_index(-1.0, valley);
    Ok((alpha * c1[hh] + beta * c2[hh]) / (alpha * c1[e] + beta * c2[e]))
}

/// Loop phase mismatch in the `valley` sector: the argument of the
/// hole/electron ratio carried into the right window by left-decaying
/// solutions, relative to that of right-decaying ones. Vanishes modulo 2π
/// exactly at eigenvalues of that valley.
pub fn phase_closure(profile: &PotentialProfile, energy: f64, valley: i8, opts: &ShootingOptions) -> Result<f64> {
    let win = Windows::for_energy(profile, energy)?;
    let (a, b) = win.right();
    let n = 16;
    let points: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    let origin = 0.5 * (a + b);
    let (from_left, from_right) = rayon::join(
        || shot_samples(profile, energy, -1.0, &points, opts),
        || shot_samples(profile, energy, 1.0, &points, opts),
    );
    let v = valley as f64;
    let q_left = valley_ratio(profile, energy, origin, &from_left?, v)?;
    let q_right = valley_ratio(profile, energy, origin, &from_right?, v)?;
    Ok(wrap_phase((q_left / q_right).arg()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(height: f64, width: f64) -> Potential {
        Potential::Squares {
            bumps: vec![SquareBump { left: 0.0, right: width, height }],
        }
    }

    #[test]
    fn free_propagation_is_identity() {
        let t = transfer_schrodinger(&Potential::Free, c(1.3, 0.0), 0.1).unwrap();
        assert_eq!(t.m, Matrix2C::identity());
        assert_eq!((t.a, t.b), (c(1.0, 0.0), c(0.0, 0.0)));
        assert_eq!(su11_u2_checks(&t.m, t.a, t.b).max_defect(), 0.0);
        assert!(find_resonances(&Potential::Free, &SearchRect { re: (0.5, 2.0), im: (-0.5, 0.5) }, 0.1).unwrap().is_empty());
    }

    #[test]
    fn square_barrier_matches_closed_form() {
        for &(v0, k) in &[(2.0, 1.0), (0.5, 1.2), (3.0, 2.5)] {
            let t = transfer_schrodinger(&square(v0, 0.3), c(k, 0.0), 0.1).unwrap();
            let exact = square_barrier_transmission(v0, 0.3, c(k, 0.0), 0.1);
            assert!((t.a - exact).norm() < 1e-8, "{} vs {}", t.a, exact);
            let r = su11_u2_checks(&t.m, t.a, t.b);
            assert!(r.max_defect() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn smooth_bump_determinant_and_printed_form() {
        let p = Potential::Smooth {
            bumps: vec![SmoothBump { center: 0.2, half_width: 0.7, height: 1.5 }],
        };
        let t = transfer_schrodinger(&p, c(0.9, 0.0), 0.2).unwrap();
        assert!((t.m.det() - 1.0).norm() < 1e-10);
        let printed = (1.0 - t.b.norm_sqr()) / t.a.norm_sqr();
        assert!((printed - 1.0).abs() < 1e-10);
        // M = [[1/Ā, −B̄/Ā], [−B/A, 1/A]] on the real axis.
        let m = t.m.m;
        assert!((m[0][0] - 1.0 / t.a.conj()).norm() < 1e-9);
        assert!((m[0][1] + t.b.conj() / t.a.conj()).norm() < 1e-9);
    }

    #[test]
    fn complex_k_keeps_symmetry_only() {
        let t = transfer_schrodinger(&square(2.0, 0.3), c(1.0, 0.2), 0.1).unwrap();
        let r = su11_u2_checks(&t.m, t.a, t.b);
        assert!(r.symmetry < 1e-9);
        assert!(r.det < 1e-9);
        assert!(r.unitarity > 1e-3);
    }

    #[test]
    fn double_barrier_resonances_pair_and_are_stable() {
        let pot = Potential::double_barrier(20.0, 0.08, 2.0);
        let h = 0.05;
        let rect = SearchRect { re: (1.50, 1.62), im: (-0.02, 0.005) };
        let poles = find_resonances(&pot, &rect, h).unwrap();
        assert!(!poles.is_empty());
        let mirror = SearchRect { re: (-rect.re.1, -rect.re.0), im: rect.im };
        let mirrored = find_resonances(&pot, &mirror, h).unwrap();
        assert_eq!(poles.len(), mirrored.len());
        for p in &poles {
            assert!(p.k.im.abs() < 1e-3);
            assert!(!p.physical);
            assert!(mirrored.iter().any(|q| (q.k + p.k.conj()).norm() < 1e-8));
        }
        let wider = find_resonances(&pot, &rect.inflated(0.1), h).unwrap();
        for p in &poles {
            assert!(wider.iter().any(|q| (q.k - p.k).norm() <= 1e-8));
        }
    }

    #[test]
    fn bank_modes_decay_and_solve_the_bank_equation() {
        let p = PotentialProfile::default_junction();
        let b = bank_basis(&p, 0.5);
        assert!(b.k.im > 0.0);
        assert_eq!(b.right.iter().filter(|m| m.decays_right).count(), 2);
        assert_eq!(b.left.iter().filter(|m| m.decays_left).count(), 2);
        for side in [&b.left, &b.right] {
            for m in side {
                // Symbol at ξ = −ihκ applied to the spinor, with a = e^{iφ/2}|a|.
                let k2 = -(m.exponent * p.h).powi(2);
                let (a, bb) = (m.spinor[0], m.spinor[1]);
                let ph = a / a.norm();
                let r1 = (k2 - b.mu - b.energy) * a + b.delta * ph * bb;
                let r2 = b.delta * ph.conj() * a + (b.mu - k2 - b.energy) * bb;
                assert!(r1.norm() < 1e-12 && r2.norm() < 1e-12, "{r1} {r2}");
                assert!((m.spinor[0].norm_sqr() + m.spinor[1].norm_sqr() - 1.0).abs() < 1e-14);
            }
        }
        let exps: Vec<C64> = b.right.iter().map(|m| m.exponent * p.h / c(0.0, 1.0)).collect();
        for k in [b.k, -b.k, b.k.conj(), -b.k.conj()] {
            assert!(exps.iter().any(|e| (e - k).norm() < 1e-14));
        }
    }

    #[test]
    fn leading_spinors_are_orthogonal_and_match_zero_energy() {
        let (f1, f2) = leading_spinors(0.7);
        assert!((f1[0].conj() * f2[0] + f1[1].conj() * f2[1]).norm() < 1e-15);
        let p = PotentialProfile::default_junction().with_phi(0.7);
        let b = bank_basis(&p, 1e-12);
        let m = b.right.iter().find(|m| m.family == 1).unwrap();
        assert!((m.spinor[0] - f1[0]).norm() < 1e-12 && (m.spinor[1] - f1[1]).norm() < 1e-12);
    }

    #[test]
    fn closing_gap_makes_k_real() {
        let mut p = PotentialProfile::default_junction();
        p.delta0 = 1e-9;
        let b = bank_basis(&p, 0.5e-9);
        assert!((b.k - c(p.mu0.sqrt(), 0.0)).norm() < 1e-9);
        assert!(b.right.iter().all(|m| m.exponent.re.abs() < 1e-7));
    }
}
