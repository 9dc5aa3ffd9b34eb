//! Classical phase-space quantities of the BdG symbol: kinetic branches,
//! branching points, the loop action and its period, the anharmonic normal
//! form `F₀` and the symbol eigenbasis.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PotentialProfile, SimulationConfig};
use crate::quadrature::{integrate, integrate_doubling, Doubled};

const QUAD_CAP: usize = 1024;
const QUAD_RTOL: f64 = 1e-10;

/// `(K₊, K₋) = μ ± sqrt(E² − Δ²)` where `Δ(x) ≤ E`; `None` in the forbidden region.
pub fn kinetic_branches(profile: &PotentialProfile, energy: f64, x: f64) -> Option<(f64, f64)> {
    let d = profile.delta(x).abs();
    if d > energy {
        return None;
    }
    let s = ((energy - d) * (energy + d)).sqrt();
    let mu = profile.mu(x);
    Some((mu + s, mu - s))
}

/// Classical data at one energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySlice {
    pub energy: f64,
    /// Positive branching point `x_E` with `Δ(±x_E) = E`.
    pub x_branch: f64,
    /// `ξ_E = sqrt(μ(x_E))`.
    pub xi_branch: f64,
    /// `Δ'(x_E)`.
    pub alpha: f64,
    /// `sqrt(α)·(2ξ_E)^(−3/2)`.
    pub beta: f64,
    /// `E/(2ξ_E)²`.
    pub e1: f64,
}

/// Branching point search on `[0, L + 16w]`.
pub fn make_energy_slice(profile: &PotentialProfile, energy: f64) -> Result<EnergySlice> {
    let x_max = SimulationConfig::for_profile(profile).x_max;
    make_energy_slice_within(profile, energy, x_max)
}

pub fn make_energy_slice_within(profile: &PotentialProfile, energy: f64, x_max: f64) -> Result<EnergySlice> {
    if !(energy > 0.0 && energy < profile.delta0 * (1.0 - 1e-9)) {
        return Err(Error::Domain(format!(
            "energy {energy} outside (0, delta0·(1 − 1e-9)) with delta0 = {}",
            profile.delta0
        )));
    }
    if !profile.is_even() {
        return Err(Error::Profile("branching points need an even gap profile".into()));
    }
    let g = |x: f64| profile.delta(x) - energy;
    let (mut lo, mut hi) = (0.0, x_max);
    let (mut glo, ghi) = (g(lo), g(hi));
    if !(glo < 0.0 && ghi > 0.0) {
        return Err(Error::Profile(format!(
            "no sign change of Delta(x) - E on [0, {x_max}] at E = {energy}"
        )));
    }
    // Bisection down to a narrow bracket, then secant steps kept inside it.
    while hi - lo > 1e-6 * x_max {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm < 0.0 {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    let mut ghi = g(hi);
    let mut x = hi;
    for _ in 0..100 {
        let cand = hi - ghi * (hi - lo) / (ghi - glo);
        x = if cand > lo && cand < hi { cand } else { 0.5 * (lo + hi) };
        let gx = g(x);
        if gx == 0.0 {
            break;
        }
        if gx < 0.0 {
            lo = x;
            glo = gx;
        } else {
            hi = x;
            ghi = gx;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    let alpha = profile.delta_prime(x);
    if !(alpha > 0.0) {
        return Err(Error::Profile(format!("non-transversal branching point at x = {x}")));
    }
    let mu = profile.mu(x);
    if !(mu > energy) {
        return Err(Error::Profile(format!("mu(x_E) = {mu} does not exceed E = {energy}")));
    }
    let xi = mu.sqrt();
    Ok(EnergySlice {
        energy,
        x_branch: x,
        xi_branch: xi,
        alpha,
        beta: alpha.sqrt() * (2.0 * xi).powf(-1.5),
        e1: energy / (4.0 * mu),
    })
}

/// Loop action and period at one energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionValue {
    pub action: f64,
    /// `dA/dE` by direct quadrature.
    pub period: f64,
    /// `dA/dE` by central differences with step `1e-5·Δ₀`; NaN when the
    /// stencil leaves the gap.
    pub period_fd: f64,
    pub nodes: usize,
    /// Set when node doubling hit the cap before reaching `1e-10`.
    pub accuracy_warning: bool,
}

/// `A(E) = ∫_{−x_E}^{x_E} (sqrt(K₊) − sqrt(K₋)) dx` with both period estimates.
pub fn loop_action(profile: &PotentialProfile, energy: f64) -> Result<ActionValue> {
    loop_action_with(profile, energy, SimulationConfig::DEFAULT_QUAD_POINTS)
}

pub fn loop_action_with(profile: &PotentialProfile, energy: f64, quad_points: usize) -> Result<ActionValue> {
    let slice = make_energy_slice(profile, energy)?;
    let a = action_integral(profile, &slice, quad_points);
    let t = period_integral(profile, &slice, quad_points);
    let step = 1e-5 * profile.delta0;
    let period_fd = if energy - step > 0.0 && energy + step < profile.delta0 * (1.0 - 1e-9) {
        let up = action_only(profile, energy + step, quad_points)?;
        let down = action_only(profile, energy - step, quad_points)?;
        (up - down) / (2.0 * step)
    } else {
        f64::NAN
    };
    let warn = !a.converged || !t.converged;
    if warn {
        log::warn!(
            "action quadrature at E = {energy} stopped at {} nodes (relative change {:.2e})",
            a.nodes,
            a.rel_change
        );
    }
    Ok(ActionValue {
        action: a.value,
        period: t.value,
        period_fd,
        nodes: a.nodes.max(t.nodes),
        accuracy_warning: warn,
    })
}

/// Action without the period estimates.
pub fn action_only(profile: &PotentialProfile, energy: f64, quad_points: usize) -> Result<f64> {
    let slice = make_energy_slice(profile, energy)?;
    Ok(action_integral(profile, &slice, quad_points).value)
}

/// Action on a fixed rule of `nodes` points per half loop. Smooth in `E`,
/// unlike the doubling variant whose node count can jump between energies.
pub fn action_with_nodes(profile: &PotentialProfile, energy: f64, nodes: usize) -> Result<f64> {
    let slice = make_energy_slice(profile, energy)?;
    Ok(2.0 * integrate(action_integrand(profile, &slice), 0.0, std::f64::consts::FRAC_PI_2, nodes))
}

/// Period on a fixed rule; see [`action_with_nodes`].
pub fn period_with_nodes(profile: &PotentialProfile, energy: f64, nodes: usize) -> Result<f64> {
    let slice = make_energy_slice(profile, energy)?;
    Ok(2.0 * integrate(period_integrand(profile, &slice), 0.0, std::f64::consts::FRAC_PI_2, nodes))
}

/// Node count that meets the doubling tolerance at every sampled energy.
pub fn required_nodes(profile: &PotentialProfile, energies: &[f64], quad_points: usize) -> Result<usize> {
    let mut nodes = quad_points;
    for &e in energies {
        let slice = make_energy_slice(profile, e)?;
        nodes = nodes.max(action_integral(profile, &slice, quad_points).nodes);
        nodes = nodes.max(period_integral(profile, &slice, quad_points).nodes);
    }
    Ok(nodes)
}

/// `E − Δ(x)` and `E + Δ(x)` on `x = x_E·sin θ`, free of cancellation near ±x_E.
fn gap_factors(profile: &PotentialProfile, slice: &EnergySlice, theta: f64) -> (f64, f64, f64) {
    let (s, c) = theta.sin_cos();
    let xe = slice.x_branch;
    let x = xe * s;
    let ax = x.abs();
    let gap = xe * c * c / (1.0 + s.abs());
    let below = profile.delta_drop(xe, ax, gap).max(0.0);
    let d = profile.delta(ax);
    (x, below, slice.energy + d)
}

fn action_integrand<'a>(profile: &'a PotentialProfile, slice: &'a EnergySlice) -> impl Fn(f64) -> f64 + 'a {
    let xe = slice.x_branch;
    move |theta: f64| {
        let (x, below, above) = gap_factors(profile, slice, theta);
        let s = (below * above).sqrt();
        let mu = profile.mu(x);
        let (kp, km) = (mu + s, mu - s);
        2.0 * s / (kp.sqrt() + km.max(0.0).sqrt()) * xe * theta.cos()
    }
}

fn period_integrand<'a>(profile: &'a PotentialProfile, slice: &'a EnergySlice) -> impl Fn(f64) -> f64 + 'a {
    let xe = slice.x_branch;
    let e = slice.energy;
    move |theta: f64| {
        let (x, below, above) = gap_factors(profile, slice, theta);
        let (sn, c) = theta.sin_cos();
        // s vanishes like cos θ at the ends; divide it out analytically.
        let gap = xe * c * c / (1.0 + sn.abs());
        let slope = if gap > 0.0 { below / gap } else { slice.alpha };
        let s_over_c = (slope * above * xe / (1.0 + sn.abs())).sqrt();
        let s = (below * above).sqrt();
        let mu = profile.mu(x);
        let (kp, km) = (mu + s, mu - s);
        let weight = 0.5 / kp.sqrt() + 0.5 / km.max(0.0).sqrt();
        if s_over_c > 0.0 {
            e / s_over_c * weight * xe
        } else {
            0.0
        }
    }
}

// Both integrands are even in θ: fold onto [0, π/2] so a kink of Δ at x = 0
// sits on an endpoint.
fn action_integral(profile: &PotentialProfile, slice: &EnergySlice, n0: usize) -> Doubled {
    let mut r = integrate_doubling(action_integrand(profile, slice), 0.0, std::f64::consts::FRAC_PI_2, n0, QUAD_CAP, QUAD_RTOL);
    r.value *= 2.0;
    r
}

fn period_integral(profile: &PotentialProfile, slice: &EnergySlice, n0: usize) -> Doubled {
    let mut r = integrate_doubling(period_integrand(profile, slice), 0.0, std::f64::consts::FRAC_PI_2, n0, QUAD_CAP, QUAD_RTOL);
    r.value *= 2.0;
    r
}

/// `∫_a^b sqrt(E − V(x)) dx` for a scalar potential whose allowed region at
/// energy `E` is exactly `[a, b]`.
pub fn scalar_action<V: Fn(f64) -> f64>(v: V, energy: f64, a: f64, b: f64, quad_points: usize) -> f64 {
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    let f = |theta: f64| (energy - v(c + r * theta.sin())).max(0.0).sqrt() * r * theta.cos();
    let half = std::f64::consts::FRAC_PI_2;
    integrate_doubling(f, -half, half, quad_points, QUAD_CAP, QUAD_RTOL).value
}

/// Barrier value `1/(16β²)` of the anharmonic well `(ξ + βξ²)²`.
pub fn normal_form_barrier(beta: f64) -> f64 {
    if beta == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (16.0 * beta * beta)
    }
}

/// `F₀(t, β) = (1/π)·∫ sqrt(t − q(ξ)²) dξ` over the well containing 0, with
/// `q = ξ + βξ²`. Reduces to `t/2` at `β = 0`.
pub fn normal_form_f0(beta: f64, t: f64) -> Result<f64> {
    let barrier = normal_form_barrier(beta);
    if !(t > 0.0 && t < barrier) {
        return Err(Error::Domain(format!(
            "t = {t} outside the well (0, {barrier:.6e}) of (xi + beta xi^2)^2"
        )));
    }
    let b = beta.abs();
    let rt = t.sqrt();
    let xp = 2.0 * rt / (1.0 + (1.0 + 4.0 * b * rt).sqrt());
    let xm = -2.0 * rt / (1.0 + (1.0 - 4.0 * b * rt).sqrt());
    let (c, r) = (0.5 * (xp + xm), 0.5 * (xp - xm));
    let f = |theta: f64| {
        let (s, co) = theta.sin_cos();
        let xi = c + r * s;
        // ξ₊ − ξ and ξ − ξ₋ without cancellation.
        let (to_p, to_m) = if s >= 0.0 {
            (r * co * co / (1.0 + s), r * (1.0 + s))
        } else {
            (r * (1.0 - s), r * co * co / (1.0 - s))
        };
        let upper = to_p * (1.0 + b * (xp + xi));
        let lower = to_m * (1.0 + b * (xi + xm));
        (upper * lower).max(0.0).sqrt() * r * co
    };
    let half = std::f64::consts::FRAC_PI_2;
    let res = integrate_doubling(f, -half, half, 64, 1 << 16, 1e-13);
    Ok(res.value / std::f64::consts::PI)
}

/// ν together with its normal-form input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuValue {
    pub nu: f64,
    pub t: f64,
    pub barrier: f64,
    /// `t` beyond 90% of the barrier value.
    pub near_separatrix: bool,
}

/// `ν = (F₀(t, β) − h/2)/h − 1` with `t = (E₁/β)²`.
pub fn nu_parameter(slice: &EnergySlice, h: f64) -> Result<NuValue> {
    let t = (slice.e1 / slice.beta).powi(2);
    let f0 = normal_form_f0(slice.beta, t)?;
    let barrier = normal_form_barrier(slice.beta);
    let near = t > 0.9 * barrier;
    if near {
        log::warn!("t = {t:.4e} is within 10% of the separatrix {barrier:.4e}");
    }
    Ok(NuValue {
        nu: (f0 - 0.5 * h) / h - 1.0,
        t,
        barrier,
        near_separatrix: near,
    })
}

/// Eigen-decomposition of the BdG symbol at `(x, ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolEigen {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub y_plus: [C64; 2],
    pub y_minus: [C64; 2],
}

/// The symbol `[[ξ²−μ, Δe^{iφ/2}], [Δe^{−iφ/2}, −ξ²+μ]]` at `(x, ξ)`.
pub fn symbol_matrix(profile: &PotentialProfile, x: f64, xi: f64) -> [[C64; 2]; 2] {
    let a = xi * xi - profile.mu(x);
    let c = C64::from_polar(profile.delta(x), 0.5 * profile.phase(x));
    [[C64::new(a, 0.0), c], [c.conj(), C64::new(-a, 0.0)]]
}

pub fn symbol_eigen(profile: &PotentialProfile, x: f64, xi: f64) -> Result<SymbolEigen> {
    let a = xi * xi - profile.mu(x);
    let d = profile.delta(x);
    if d == 0.0 && a == 0.0 {
        return Err(Error::Domain(format!("degenerate symbol at (x, xi) = ({x}, {xi})")));
    }
    let e = C64::from_polar(1.0, 0.5 * profile.phase(x));
    let lam = d.hypot(a);
    let pick = |u: [C64; 2], v: [C64; 2]| {
        let nu = (u[0].norm_sqr() + u[1].norm_sqr()).sqrt();
        let nv = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        let (w, n) = if nu >= nv { (u, nu) } else { (v, nv) };
        let sign = if w[1].re < 0.0 { -1.0 } else { 1.0 };
        [w[0] * (sign / n), w[1] * (sign / n)]
    };
    let y_plus = pick([e * d, C64::new(lam - a, 0.0)], [e * (a + lam), C64::new(d, 0.0)]);
    let y_minus = pick([-e * d, C64::new(a + lam, 0.0)], [-e * (lam - a), C64::new(d, 0.0)]);
    Ok(SymbolEigen {
        lambda_plus: lam,
        lambda_minus: -lam,
        y_plus,
        y_minus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GapShape;
    use std::f64::consts::PI;

    fn bisect_oracle(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (f(a) < 0.0) == (f(m) < 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn branches_in_lead_edge_and_bank() {
        let p = PotentialProfile::default_junction();
        let (kp, km) = kinetic_branches(&p, 0.5, 0.0).unwrap();
        assert!((kp - 2.5).abs() < 1e-6 && (km - 1.5).abs() < 1e-6);
        assert!(kinetic_branches(&p, 0.5, 5.0).is_none());
        let s = make_energy_slice(&p, 0.5).unwrap();
        let (kp, km) = kinetic_branches(&p, p.delta(s.x_branch), s.x_branch).unwrap();
        assert_eq!((kp, km), (2.0, 2.0));
    }

    #[test]
    fn slice_matches_scalar_bisection() {
        let p = PotentialProfile::default_junction();
        let s = make_energy_slice(&p, 0.5).unwrap();
        let f = |x: f64| 0.5 * (((x - 2.0) / 0.25).tanh() + ((-x - 2.0) / 0.25).tanh() + 2.0) - 0.5;
        let x_ref = bisect_oracle(f, 0.0, 6.0);
        assert!((s.x_branch - x_ref).abs() < 1e-13, "{} vs {}", s.x_branch, x_ref);
        assert!((s.x_branch - 2.0).abs() < 1e-3);
        assert!((s.xi_branch - 2f64.sqrt()).abs() < 1e-15);
        assert!(s.alpha > 0.0);
        assert!((s.beta - s.alpha.sqrt() * (2.0 * s.xi_branch).powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn slice_errors() {
        let p = PotentialProfile::default_junction();
        assert!(matches!(make_energy_slice(&p, 0.0), Err(Error::Domain(_))));
        assert!(matches!(make_energy_slice(&p, 1.2), Err(Error::Domain(_))));
        // Gap edge: Δ(x) reaches E beyond the search interval.
        assert!(matches!(make_energy_slice_within(&p, 1.0 - 1e-8, 4.0), Err(Error::Profile(_))));
    }

    /// Composite trapezoid on `x = x_E sin θ` with many panels.
    fn trapezoid_action(p: &PotentialProfile, e: f64, panels: usize) -> f64 {
        let s = make_energy_slice(p, e).unwrap();
        let f = |th: f64| {
            let x = s.x_branch * th.sin();
            match kinetic_branches(p, e, x) {
                Some((kp, km)) => (kp.sqrt() - km.sqrt()) * s.x_branch * th.cos(),
                None => 0.0,
            }
        };
        let (a, b) = (-PI / 2.0, PI / 2.0);
        let hstep = (b - a) / panels as f64;
        let mut sum = 0.5 * (f(a) + f(b));
        for i in 1..panels {
            sum += f(a + i as f64 * hstep);
        }
        sum * hstep
    }

    #[test]
    fn action_linear_gap_small_energy_limit() {
        let p = PotentialProfile::default_junction().with_gap_shape(GapShape::Linear { slope: 1.0 });
        let e = 0.01 * p.mu0;
        let a = loop_action(&p, e).unwrap().action;
        let asym = PI * e * e / (2.0 * 1.0 * p.mu0.sqrt());
        assert!((a / asym - 1.0).abs() < 0.02, "ratio {}", a / asym);
        let oracle = trapezoid_action(&p, e, 20000);
        assert!((a - oracle).abs() < 1e-8 * oracle);
    }

    #[test]
    fn action_matches_trapezoid_oracle_on_default_profile() {
        let p = PotentialProfile::default_junction();
        for &e in &[0.1, 0.5, 0.9] {
            let a = loop_action(&p, e).unwrap();
            let oracle = trapezoid_action(&p, e, 40000);
            assert!((a.action - oracle).abs() < 1e-8 * oracle, "E={e}: {} vs {oracle}", a.action);
            assert!(!a.accuracy_warning);
        }
    }

    #[test]
    fn action_strictly_increasing_and_vanishing_at_zero() {
        let p = PotentialProfile::default_junction();
        let grid: Vec<f64> = (0..50).map(|i| 0.05 + 0.9 * i as f64 / 49.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&e| loop_action(&p, e).unwrap().action).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        let tiny = loop_action(&p, 1e-6).unwrap().action;
        assert!(tiny > 0.0 && tiny < 1e-6);
    }

    #[test]
    fn period_two_ways_agree() {
        let p = PotentialProfile::default_junction();
        for &e in &[0.05, 0.3, 0.6, 0.95] {
            let a = loop_action(&p, e).unwrap();
            assert!(a.period > 0.0);
            assert!((a.period - a.period_fd).abs() < 1e-5 * a.period, "E={e}: {} vs {}", a.period, a.period_fd);
        }
    }

    #[test]
    fn f0_disk_limit_and_small_beta() {
        for &t in &[0.01, 0.3, 1.0, 7.5] {
            assert!((normal_form_f0(0.0, t).unwrap() - 0.5 * t).abs() <= 1e-12 * t.max(1.0));
        }
        let f = normal_form_f0(1e-3, 1.0).unwrap();
        assert!((f - 0.5).abs() <= 1e-4);
    }

    #[test]
    fn f0_matches_fine_trapezoid_oracle() {
        let (beta, t) = (0.3, 0.4);
        let f = normal_form_f0(beta, t).unwrap();
        // Trapezoid on a bracketing interval with clipping, sqrt endpoint error O(n^-1.5).
        let n = 2_000_000;
        let (a, b) = (-3.0, 1.0);
        let hs = (b - a) / n as f64;
        let mut sum = 0.0;
        for i in 0..=n {
            let x = a + i as f64 * hs;
            let q = x + beta * x * x;
            // Restrict to the well containing 0: left of the local minimum of q is another well.
            if x > -0.5 / beta {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                sum += w * (t - q * q).max(0.0).sqrt();
            }
        }
        let oracle = sum * hs / PI;
        assert!((f - oracle).abs() < 1e-7, "{f} vs {oracle}");
    }

    #[test]
    fn f0_symmetric_in_beta_and_domain_error() {
        assert_eq!(normal_form_f0(0.2, 0.5).unwrap(), normal_form_f0(-0.2, 0.5).unwrap());
        let err = normal_form_f0(0.5, 0.3).unwrap_err();
        assert!(err.to_string().contains("2.5"), "{err}");
    }

    #[test]
    fn f0_slope_blows_up_at_separatrix() {
        let beta = 0.5;
        let top = normal_form_barrier(beta);
        let slope = |t: f64| (normal_form_f0(beta, t + 1e-7).unwrap() - normal_form_f0(beta, t - 1e-7).unwrap()) / 2e-7;
        let s1 = slope(0.9 * top);
        let s2 = slope(0.99 * top);
        let s3 = slope(0.9999 * top);
        assert!(s1 < s2 && s2 < s3 && s3 > 1.5 * s1);
        assert!(normal_form_f0(beta, top * (1.0 - 1e-9)).unwrap().is_finite());
    }

    #[test]
    fn nu_harmonic_limit_and_h_scaling() {
        let p = PotentialProfile::default_junction();
        let s = make_energy_slice(&p, 0.5).unwrap();
        let v1 = nu_parameter(&s, 0.05).unwrap();
        let v2 = nu_parameter(&s, 0.025).unwrap();
        assert!(v1.nu.is_finite() && !v1.near_separatrix);
        // (ν+1)·h + h/2 = F₀ is h independent.
        assert!(((v1.nu + 1.5) * 0.05 - (v2.nu + 1.5) * 0.025).abs() < 1e-12);
        assert!((v2.nu - 2.0 * v1.nu - 1.5).abs() < 1e-9);
        let tiny = EnergySlice {
            beta: 1e-6,
            e1: 1e-6 * 0.1,
            ..s
        };
        let v = nu_parameter(&tiny, 0.05).unwrap();
        assert!(((v.nu + 1.0) - (v.t / (2.0 * 0.05) - 0.5)).abs() < 1e-6 * v.nu.abs());
    }

    #[test]
    fn nu_near_separatrix_is_flagged() {
        let p = PotentialProfile::default_junction();
        let mut s = make_energy_slice(&p, 0.5).unwrap();
        s.e1 = s.beta * (0.99 * normal_form_barrier(s.beta)).sqrt();
        assert!(nu_parameter(&s, 0.05).unwrap().near_separatrix);
    }

    #[test]
    fn symbol_eigen_diagonal_cases() {
        let p = PotentialProfile::default_junction();
        let e = symbol_eigen(&p, 0.0, 2.0).unwrap();
        assert!((e.lambda_plus - (4.0 - p.mu(0.0))).abs() < 1e-6);
        assert!((e.y_plus[0].norm() - 1.0).abs() < 1e-6 && e.y_plus[1].norm() < 1e-6);
        let e = symbol_eigen(&p, 0.0, 1.0).unwrap();
        assert!(e.y_plus[0].norm() < 1e-6 && (e.y_plus[1].re - 1.0).abs() < 1e-6);
        let z = PotentialProfile::new(1.0, 4.0, 2.0, 0.25, 0.0, 0.05)
            .unwrap()
            .with_gap_shape(GapShape::Zero);
        assert!(matches!(symbol_eigen(&z, 0.3, 2.0), Err(Error::Domain(_))));
        assert!(symbol_eigen(&z, 0.3, 1.0).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Independent 2×2 Hermitian eigensolver: closed-form eigenvalues and
        /// kernel of (P − λ) from whichever column is larger.
        fn oracle_eigvals(m: [[C64; 2]; 2]) -> (f64, f64) {
            let a = m[0][0].re;
            let d = m[1][1].re;
            let tr = 0.5 * (a + d);
            let disc = (0.25 * (a - d) * (a - d) + m[0][1].norm_sqr()).sqrt();
            (tr + disc, tr - disc)
        }

        proptest! {
            #[test]
            fn symbol_eigen_residual_and_orthogonality(x in -6.0f64..6.0, xi in -3.0f64..3.0, phi in -3.1f64..3.1) {
                let p = PotentialProfile::default_junction().with_phi(phi);
                let e = symbol_eigen(&p, x, xi).unwrap();
                let m = symbol_matrix(&p, x, xi);
                let (l1, l2) = oracle_eigvals(m);
                prop_assert!((e.lambda_plus - l1).abs() <= 1e-12 * (1.0 + l1.abs()));
                prop_assert!((e.lambda_minus - l2).abs() <= 1e-12 * (1.0 + l2.abs()));
                prop_assert_eq!(e.lambda_plus, -e.lambda_minus);
                let lam2 = p.delta(x).powi(2) + (xi * xi - p.mu(x)).powi(2);
                prop_assert!((e.lambda_plus * e.lambda_minus + lam2).abs() <= 1e-12 * lam2);
                for (lam, y) in [(e.lambda_plus, e.y_plus), (e.lambda_minus, e.y_minus)] {
                    let n = (y[0].norm_sqr() + y[1].norm_sqr()).sqrt();
                    prop_assert!((n - 1.0).abs() < 1e-14);
                    prop_assert!(y[1].im == 0.0 && y[1].re >= 0.0);
                    let r0 = m[0][0] * y[0] + m[0][1] * y[1] - y[0] * lam;
                    let r1 = m[1][0] * y[0] + m[1][1] * y[1] - y[1] * lam;
                    prop_assert!((r0.norm_sqr() + r1.norm_sqr()).sqrt() <= 1e-12 * (1.0 + lam.abs()));
                }
                let ip = e.y_plus[0].conj() * e.y_minus[0] + e.y_plus[1].conj() * e.y_minus[1];
                prop_assert!(ip.norm() <= 1e-12);
            }

            #[test]
            fn f0_increasing_in_t(beta in 0.0f64..1.0, u in 0.05f64..0.9, du in 0.01f64..0.09) {
                let top = normal_form_barrier(beta).min(50.0);
                let f1 = normal_form_f0(beta, u * top).unwrap();
                let f2 = normal_form_f0(beta, (u + du) * top).unwrap();
                prop_assert!(f2 > f1);
            }
        }
    }
}
