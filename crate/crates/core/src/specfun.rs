//! Complex Gamma, Kummer's `M`, and the parabolic cylinder function `D_ν`.
//!
//! `D_ν` is evaluated by one of four methods:
//! - the Kummer form for `|z| ≤ 6`, summed in double-double arithmetic, while
//!   its cancellation stays below `1e20`;
//! - the Poincaré expansion for `|z| > 6`, `0 ≤ ν < 1`, `|arg z| ≤ π/2`, and
//!   forward recurrence in `ν` from there for larger orders;
//! - the integral `e^{−z²/4}/Γ(−ν)·∫₀^∞ t^{−ν−1} e^{−zt−t²/2} dt` for
//!   `ν < 0`, `|arg z| ≤ π/4`, on a generalized Gauss–Laguerre rule;
//! - Taylor continuation of the Weber equation along the arc `|z| = const`
//!   from the integral at `|arg z| = π/4`, for `ν < 0`, `π/4 < |arg z| ≤ π/2`;
//! - the connection formula
//!   `D_ν(z) = e^{±iπν} D_ν(−z) + √(2π)/Γ(−ν)·e^{±iπ(ν+1)/2} D_{−ν−1}(∓iz)`
//!   for `|arg z| > π/2`, whose right-hand side only needs `|arg| ≤ π/2`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dd::{self, CDd, Dd};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_laguerre_normalized, Rule};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn is_nonpositive_integer(z: C64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round()
}

/// `Γ(z)`; poles at the nonpositive integers are errors.
pub fn gamma(z: C64) -> Result<C64> {
    if is_nonpositive_integer(z) {
        return Err(Error::Pole(z.re));
    }
    Ok(gamma_unchecked(z))
}

fn gamma_unchecked(z: C64) -> C64 {
    if z.re < 0.5 {
        let s = (z * PI).sin();
        return PI / (s * gamma_unchecked(1.0 - z));
    }
    let z = z - 1.0;
    let mut x = C64::new(LANCZOS[0], 0.0);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        x += *c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    let log = 0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln();
    log.exp()
}

/// `1/Γ(z)`, zero at the poles.
pub fn rgamma(z: C64) -> C64 {
    if is_nonpositive_integer(z) {
        C64::new(0.0, 0.0)
    } else {
        1.0 / gamma_unchecked(z)
    }
}

/// Neumaier-compensated complex accumulator.
#[derive(Default)]
struct Compensated {
    sum: C64,
    comp: C64,
}

impl Compensated {
    fn add(&mut self, v: C64) {
        let (re, cre) = two_sum(self.sum.re, v.re);
        let (im, cim) = two_sum(self.sum.im, v.im);
        self.sum = C64::new(re, im);
        self.comp += C64::new(cre, cim);
    }

    fn value(&self) -> C64 {
        self.sum + self.comp
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Series value and its largest term modulus, both on the scale of the
/// result. For `Re z < 0` Kummer's transformation `M(a,b,z) = e^z M(b−a,b,−z)`
/// avoids the alternating sum.
fn kummer_series(a: C64, b: C64, z: C64) -> (C64, f64) {
    if z.re < 0.0 {
        let (m, max_term) = kummer_maclaurin(b - a, b, -z);
        let scale = z.exp();
        return (scale * m, scale.norm() * max_term);
    }
    kummer_maclaurin(a, b, z)
}

fn kummer_maclaurin(a: C64, b: C64, z: C64) -> (C64, f64) {
    let mut acc = Compensated::default();
    let mut term = C64::new(1.0, 0.0);
    let mut max_term = 1.0f64;
    acc.add(term);
    let mut small = 0;
    for k in 0..5000 {
        let kf = k as f64;
        term = term * (a + kf) * z / ((b + kf) * (kf + 1.0));
        if term == C64::new(0.0, 0.0) {
            break;
        }
        acc.add(term);
        let tn = term.norm();
        max_term = max_term.max(tn);
        if kf > z.norm() && tn <= 1e-16 * acc.value().norm() {
            small += 1;
            if small >= 2 {
                break;
            }
        } else {
            small = 0;
        }
    }
    (acc.value(), max_term)
}

/// Kummer's confluent hypergeometric `M(a, b, z)` by its Maclaurin series.
pub fn kummer_m(a: C64, b: C64, z: C64) -> Result<C64> {
    if is_nonpositive_integer(b) {
        return Err(Error::Pole(b.re));
    }
    if !(z.norm() <= 400.0) {
        return Err(Error::Domain(format!("|z| = {} exceeds 400 in kummer_m", z.norm())));
    }
    Ok(kummer_series(a, b, z).0)
}

/// Evaluation method used for `D_ν`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcfRegime {
    Series,
    Asymptotic,
    Integral,
    /// Taylor continuation of the Weber equation from a shifted center.
    RecurrenceShifted,
    /// Reflection `z → −z` through the connection formula.
    Connection,
}

/// `D_ν(z)` with its `z` derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcfValue {
    pub value: C64,
    pub derivative: C64,
    pub regime: PcfRegime,
}

/// Radius separating the Kummer form from the large-argument methods.
pub const PCF_CROSSOVER: f64 = 6.0;
/// Largest tolerated ratio of the biggest Kummer summand to the result.
const SERIES_MAX_LOSS: f64 = 1e20;
const LAGUERRE_NODES: usize = 96;

/// `D_ν(z)` for real `|ν| ≤ 20`, `|z| ≤ 20`, with `D_ν'(z) = (z/2)D_ν − D_{ν+1}`.
pub fn pcf_d(nu: f64, z: C64) -> Result<PcfValue> {
    check_domain(nu, z)?;
    let (value, regime) = d_value(nu, z);
    let (next, _) = d_value(nu + 1.0, z);
    Ok(PcfValue {
        value,
        derivative: 0.5 * z * value - next,
        regime,
    })
}

/// `D_ν(z)` forced through one method, for cross-checks between regimes.
/// Returns a domain error where the method does not apply.
pub fn pcf_d_with(nu: f64, z: C64, regime: PcfRegime) -> Result<C64> {
    check_domain(nu, z)?;
    match regime {
        PcfRegime::Series => Ok(d_series(nu, z).0),
        PcfRegime::Asymptotic => {
            if z.norm() < 1.0 {
                return Err(Error::Domain("asymptotic expansion needs |z| >= 1".into()));
            }
            Ok(d_large(nu, z))
        }
        PcfRegime::Integral => {
            if nu >= 0.0 || z.arg().abs() > FRAC_PI_4 + 1e-12 {
                return Err(Error::Domain("integral form needs nu < 0 and |arg z| <= pi/4".into()));
            }
            Ok(d_integral(nu, z))
        }
        PcfRegime::RecurrenceShifted => {
            if nu >= 0.0 {
                return Err(Error::Domain("arc continuation is seeded for nu < 0 only".into()));
            }
            Ok(d_continued(nu, z))
        }
        PcfRegime::Connection => Ok(d_connection(nu, z)),
    }
}

/// Regime `pcf_d` selects at `z`.
pub fn pcf_regime(nu: f64, z: C64) -> PcfRegime {
    d_value(nu, z).1
}

/// Regime the large-argument branch would use at `z` regardless of `|z|`.
pub fn pcf_outer_regime(nu: f64, z: C64) -> PcfRegime {
    outer_regime(nu, z)
}

fn check_domain(nu: f64, z: C64) -> Result<()> {
    if !(nu.abs() <= 20.0) || !(z.norm() <= 20.0) {
        return Err(Error::Domain(format!("pcf_d needs |nu| <= 20 and |z| <= 20, got nu = {nu}, z = {z}")));
    }
    Ok(())
}

fn is_nonneg_integer(nu: f64) -> bool {
    nu >= 0.0 && nu == nu.round()
}

fn d_value(nu: f64, z: C64) -> (C64, PcfRegime) {
    if is_nonneg_integer(nu) && z.norm() > PCF_CROSSOVER {
        // Terminating expansion: the Hermite function, exact in every sector.
        return (d_asymptotic(nu, z), PcfRegime::Asymptotic);
    }
    if z.norm() <= PCF_CROSSOVER {
        let (v, loss) = d_series(nu, z);
        if loss <= SERIES_MAX_LOSS || nu >= 0.0 {
            return (v, PcfRegime::Series);
        }
    }
    let regime = outer_regime(nu, z);
    let v = match regime {
        PcfRegime::Asymptotic => d_large(nu, z),
        PcfRegime::Integral => d_integral(nu, z),
        PcfRegime::RecurrenceShifted => d_continued(nu, z),
        PcfRegime::Series | PcfRegime::Connection => d_connection(nu, z),
    };
    (v, regime)
}

fn outer_regime(nu: f64, z: C64) -> PcfRegime {
    let psi = z.arg().abs();
    if psi > FRAC_PI_2 {
        PcfRegime::Connection
    } else if nu >= 0.0 {
        PcfRegime::Asymptotic
    } else if psi <= FRAC_PI_4 {
        PcfRegime::Integral
    } else {
        PcfRegime::RecurrenceShifted
    }
}

/// Kummer form with its cancellation ratio. The two series cancel by up to
/// `e^{|z|²/2}`, so they are summed in double-double arithmetic.
fn d_series(nu: f64, z: C64) -> (C64, f64) {
    let zd = CDd::from_c64(z);
    let w = (zd * zd).scale(Dd::from_f64(0.5));
    let half_nu = Dd::from_f64(0.5 * nu);
    let a1 = -half_nu;
    let a2 = Dd::from_f64(0.5) - half_nu;
    let c1 = dd::SQRT_PI * dd::rgamma_dd(a2);
    let c2 = dd::SQRT_2PI * dd::rgamma_dd(a1);
    let (m1, max1) = dd::kummer_dd(a1, 0.5, w);
    let (m2, max2) = dd::kummer_dd(a2, 1.5, w);
    let bracket = m1.scale(c1) - (zd * m2).scale(c2);
    let pre = 2f64.powf(0.5 * nu) * (-0.25 * z * z).exp();
    let value = pre * bracket.to_c64();
    let biggest = pre.norm() * (c1.to_f64().abs() * max1).max(c2.to_f64().abs() * z.norm() * max2);
    let loss = if value.norm() > 0.0 { biggest / value.norm() } else { f64::INFINITY };
    (value, loss)
}

/// `ν ≥ 0`, `|arg z| ≤ π/2`: the expansion for `ν < 1`, then the recurrence
/// `D_{ν+1} = z D_ν − ν D_{ν−1}`, which is stable upwards in `ν` there.
fn d_large(nu: f64, z: C64) -> C64 {
    if nu < 1.0 || is_nonneg_integer(nu) {
        return d_asymptotic(nu, z);
    }
    let base = nu - nu.floor();
    let below = base - 1.0;
    let mut prev = if z.arg().abs() <= FRAC_PI_4 { d_integral(below, z) } else { d_continued(below, z) };
    let mut cur = d_asymptotic(base, z);
    let mut order = base;
    while order + 0.5 < nu {
        let next = z * cur - order * prev;
        prev = cur;
        cur = next;
        order += 1.0;
    }
    cur
}

fn d_asymptotic(nu: f64, z: C64) -> C64 {
    let inv = 1.0 / (z * z);
    let terminating = is_nonneg_integer(nu);
    let mut acc = Compensated::default();
    let mut term = C64::new(1.0, 0.0);
    acc.add(term);
    for k in 0..200 {
        let kf = k as f64;
        let next = -term * (nu - 2.0 * kf) * (nu - 2.0 * kf - 1.0) * inv / (2.0 * (kf + 1.0));
        // Integer orders terminate (Hermite functions) and are summed in full.
        if next == C64::new(0.0, 0.0) || (next.norm() > term.norm() && !terminating) {
            break;
        }
        acc.add(next);
        term = next;
        if term.norm() < 1e-17 * acc.value().norm() {
            break;
        }
    }
    (nu * z.ln() - 0.25 * z * z).exp() * acc.value()
}

fn laguerre_rule(alpha: f64) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&alpha.to_bits()) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(gauss_laguerre_normalized(LAGUERRE_NODES, alpha));
    cache.lock().unwrap().insert(alpha.to_bits(), Arc::clone(&rule));
    rule
}

/// Integral form for `ν < 0`, `|arg z| ≤ π/4`. For `|z| ≥ 2` the path is
/// rotated to `arg t = −arg(z)/2`, where both the linear and the quadratic
/// exponent decay, and scaled so the linear part matches the Laguerre weight.
fn d_integral(nu: f64, z: C64) -> C64 {
    let rule = laguerre_rule(-nu - 1.0);
    let mut acc = Compensated::default();
    if z.norm() >= 2.0 {
        let half = 0.5 * z.arg();
        let kappa = 1.0 / (z.norm() * half.cos());
        let lin = C64::new(0.0, -half.tan());
        let quad = -0.5 * kappa * kappa * C64::from_polar(1.0, -2.0 * half);
        for (s, w) in rule.nodes.iter().zip(&rule.weights) {
            acc.add(*w * (lin * *s + quad * (s * s)).exp());
        }
        let log_pre = -0.25 * z * z - nu * C64::new(kappa.ln(), -half);
        log_pre.exp() * acc.value()
    } else {
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            acc.add(*w * ((1.0 - z) * *t - 0.5 * t * t).exp());
        }
        (-0.25 * z * z).exp() * acc.value()
    }
}

/// Taylor continuation along `|z| = r` from `arg z = ±π/4`, for `ν < 0`.
fn d_continued(nu: f64, z: C64) -> C64 {
    let r = z.norm();
    let psi = z.arg();
    let psi0 = FRAC_PI_4.copysign(psi);
    let z0 = C64::from_polar(r, psi0);
    let (v0, _) = d_value(nu, z0);
    let (v1, _) = d_value(nu + 1.0, z0);
    let dv0 = 0.5 * z0 * v0 - v1;
    weber_continue(nu, z0, v0, dv0, r, psi0, psi).0
}

/// Connection formula for `|arg z| > π/2`, choosing the sign so that both
/// `−z` and `∓iz` lie in `|arg| ≤ π/2`.
fn d_connection(nu: f64, z: C64) -> C64 {
    let (reflected, _) = d_value(nu, -z);
    let sign = if z.arg() > 0.0 { 1.0 } else { -1.0 };
    let rotated = C64::new(0.0, -sign) * z;
    let (companion, _) = d_value(-nu - 1.0, rotated);
    let pre = (2.0 * PI).sqrt() * rgamma(C64::new(-nu, 0.0));
    C64::from_polar(1.0, sign * PI * nu) * reflected
        + pre * C64::from_polar(1.0, sign * 0.5 * PI * (nu + 1.0)) * companion
}

/// Integrates the Weber equation `v'' = (z²/4 − ν − 1/2) v` by Taylor steps
/// along the arc from angle `psi0` to `psi1` at radius `r`.
fn weber_continue(nu: f64, z0: C64, v0: C64, dv0: C64, r: f64, psi0: f64, psi1: f64) -> (C64, C64) {
    let steps = ((r * (psi1 - psi0).abs()) / 0.25).ceil().max(1.0) as usize;
    let mut c = z0;
    let (mut v, mut dv) = (v0, dv0);
    for i in 1..=steps {
        let target = C64::from_polar(r, psi0 + (psi1 - psi0) * i as f64 / steps as f64);
        let (nv, ndv) = weber_taylor_step(nu, c, v, dv, target - c);
        v = nv;
        dv = ndv;
        c = target;
    }
    (v, dv)
}

/// One Taylor step of the Weber equation from center `c` by `s`.
pub(crate) fn weber_taylor_step(nu: f64, c: C64, v: C64, dv: C64, s: C64) -> (C64, C64) {
    let q = 0.25 * c * c - (nu + 0.5);
    let zero = C64::new(0.0, 0.0);
    let (mut am2, mut am1, mut a0, mut a1) = (zero, zero, v, dv);
    let mut val = Compensated::default();
    let mut der = Compensated::default();
    val.add(a0);
    val.add(a1 * s);
    der.add(a1);
    let mut spow = s;
    let mut quiet = 0;
    for k in 0..400 {
        let kf = k as f64;
        let a2 = (q * a0 + 0.5 * c * am1 + 0.25 * am2) / ((kf + 1.0) * (kf + 2.0));
        // a_{k+2} s^{k+2} and (k+2) a_{k+2} s^{k+1}
        let d_term = (kf + 2.0) * a2 * spow;
        spow *= s;
        let v_term = a2 * spow;
        val.add(v_term);
        der.add(d_term);
        am2 = am1;
        am1 = a0;
        a0 = a1;
        a1 = a2;
        if v_term.norm() <= 1e-18 * val.value().norm() && d_term.norm() <= 1e-18 * der.value().norm() {
            quiet += 1;
            if quiet >= 3 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    (val.value(), der.value())
}

/// `|−D″ + (z²/4)D − (ν+½)D| / (1 + |D|)` with
/// `D″ = (½ + z²/4)D_ν − z·D_{ν+1} + D_{ν+2}`.
pub fn weber_residual(nu: f64, z: C64) -> Result<f64> {
    check_domain(nu, z)?;
    let (d0, _) = d_value(nu, z);
    let (d1, _) = d_value(nu + 1.0, z);
    let (d2, _) = d_value(nu + 2.0, z);
    let zz = 0.25 * z * z;
    let dd = (0.5 + zz) * d0 - z * d1 + d2;
    let res = -dd + zz * d0 - (nu + 0.5) * d0;
    Ok(res.norm() / (1.0 + d0.norm()))
}
