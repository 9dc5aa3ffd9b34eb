//! Gauss rules: Legendre nodes cached per order, and generalized Laguerre
//! nodes from the Golub–Welsch eigenproblem.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of an `n`-point rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn legendre_cache() -> &'static Mutex<HashMap<usize, Arc<Rule>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    assert!(n >= 1, "rule needs at least one node");
    if let Some(rule) = legendre_cache().lock().unwrap().get(&n) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(compute_legendre(n));
    legendre_cache().lock().unwrap().insert(n, Arc::clone(&rule));
    rule
}

fn compute_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let theta = std::f64::consts::PI * (4 * i + 3) as f64 / (4.0 * nf + 2.0);
        let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_pair(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_pair(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `∫_a^b f` with an `n`-point Gauss–Legendre rule.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let rule = gauss_legendre(n);
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    let mut sum = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        sum += w * f(c + r * x);
    }
    sum * r
}

/// Result of an integral refined by node doubling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Doubled {
    pub value: f64,
    pub nodes: usize,
    /// Relative change between the last two orders.
    pub rel_change: f64,
    pub converged: bool,
}

/// Doubles the node count from `n0` until the relative change drops below
/// `rtol` or `cap` nodes are reached.
pub fn integrate_doubling<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n0: usize, cap: usize, rtol: f64) -> Doubled {
    let mut n = n0.max(2);
    let mut prev = integrate(&mut f, a, b, n);
    loop {
        let next_n = n * 2;
        if next_n > cap {
            return Doubled {
                value: prev,
                nodes: n,
                rel_change: f64::INFINITY,
                converged: false,
            };
        }
        let next = integrate(&mut f, a, b, next_n);
        let rel = (next - prev).abs() / next.abs().max(f64::MIN_POSITIVE);
        n = next_n;
        if rel <= rtol || (next - prev).abs() <= 1e-300 {
            return Doubled {
                value: next,
                nodes: n,
                rel_change: rel,
                converged: true,
            };
        }
        prev = next;
    }
}

/// Generalized Gauss–Laguerre rule for `∫_0^∞ t^α e^{−t} f(t) dt`, with
/// weights divided by `Γ(α+1)` so that they sum to one.
pub fn gauss_laguerre_normalized(n: usize, alpha: f64) -> Rule {
    assert!(alpha > -1.0, "Laguerre rule needs alpha > -1");
    let mut d: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let mut e: Vec<f64> = (0..n)
        .map(|k| {
            let k1 = (k + 1) as f64;
            if k + 1 < n {
                (k1 * (k1 + alpha)).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    tridiagonal_ql(&mut d, &mut e, &mut z);
    let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(z.into_iter().map(|v| v * v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Implicit QL on a symmetric tridiagonal matrix (diagonal `d`, sub-diagonal
/// `e` with `e[i]` coupling `i` and `i+1`). On return `d` holds eigenvalues and
/// `z` the first components of the matching eigenvectors when seeded with `e_0`.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64]) {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zi1 = z[i + 1];
                z[i + 1] = s * z[i] + c * zi1;
                z[i] = c * z[i] - s * zi1;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 64] {
            let rule = gauss_legendre(n);
            assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let deg = 2 * n - 1;
            let v = integrate(|x| x.powi(deg as i32 - 1), -1.0, 1.0, n);
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((v - exact).abs() < 1e-13, "n={n}: {v} vs {exact}");
        }
    }

    #[test]
    fn legendre_nodes_sorted_and_symmetric() {
        let rule = gauss_legendre(33);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        for i in 0..33 {
            assert_eq!(rule.nodes[i], -rule.nodes[32 - i]);
        }
    }

    #[test]
    fn doubling_reaches_tolerance_on_smooth_integrand() {
        let r = integrate_doubling(|x: f64| x.exp(), 0.0, 1.0, 4, 1024, 1e-12);
        assert!(r.converged);
        assert!((r.value - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn laguerre_moments() {
        // ∫ t^α e^{-t} t^k dt / Γ(α+1) = (α+1)(α+2)…(α+k)
        for &alpha in &[0.0, 0.5, -0.5, 3.2] {
            let rule = gauss_laguerre_normalized(24, alpha);
            for k in 0..10 {
                let v: f64 = rule.nodes.iter().zip(&rule.weights).map(|(t, w)| w * t.powi(k)).sum();
                let exact: f64 = (1..=k).map(|j| alpha + j as f64).product();
                assert!((v - exact).abs() <= 1e-11 * exact.max(1.0), "alpha={alpha} k={k}: {v} vs {exact}");
            }
        }
    }
}
