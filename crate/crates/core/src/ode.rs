//! Dormand–Prince 5(4) integrator for complex linear systems.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    /// Initial step magnitude; 0 picks one from the interval length.
    pub first_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-10,
            first_step: 0.0,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(x, y)` from `x0` to `x1` (either direction).
///
/// `after_step` runs after every accepted step and may rescale or rotate the
/// state; the integrator restarts its FSAL stage when it does so.
pub fn integrate<F, G>(
    mut f: F,
    x0: f64,
    y0: &[C64],
    x1: f64,
    opts: &OdeOptions,
    mut after_step: G,
) -> Result<(Vec<C64>, OdeStats)>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    G: FnMut(f64, &mut [C64]) -> bool,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut stats = OdeStats::default();
    let span = x1 - x0;
    if span == 0.0 {
        return Ok((y, stats));
    }
    let dir = span.signum();
    let mut x = x0;
    let mut step = if opts.first_step > 0.0 {
        opts.first_step
    } else {
        (span.abs() * 1e-3).min(opts.max_step)
    };
    let zero = C64::new(0.0, 0.0);
    let mut k: Vec<Vec<C64>> = vec![vec![zero; n]; 7];
    let mut tmp = vec![zero; n];
    let mut ynew = vec![zero; n];
    f(x, &y, &mut k[0]);

    while (x1 - x) * dir > 0.0 {
        if stats.accepted + stats.rejected > opts.max_steps {
            return Err(Error::Stiffness { x });
        }
        if (x1 - x).abs() <= 8.0 * f64::EPSILON * x.abs().max(x1.abs()).max(1.0) {
            break;
        }
        let mut h = step.min(opts.max_step);
        // Absorb remainders too small to step over on their own.
        let last = (x + dir * h * (1.0 + 1e-9) - x1) * dir >= 0.0;
        if last {
            h = (x1 - x).abs();
        }
        if h < 1e-14 * x.abs().max(1.0) {
            return Err(Error::Stiffness { x });
        }
        let hs = dir * h;

        macro_rules! stage {
            ($out:expr, $xc:expr, $($a:expr => $ki:expr),+) => {{
                for i in 0..n {
                    tmp[i] = y[i] $(+ k[$ki][i] * (hs * $a))+;
                }
                let (_, rest) = k.split_at_mut($out);
                f(x + $xc * hs, &tmp, &mut rest[0]);
            }};
        }
        stage!(1, C2, A21 => 0);
        stage!(2, C3, A31 => 0, A32 => 1);
        stage!(3, C4, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, C5, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(5, 1.0, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        for i in 0..n {
            ynew[i] = y[i] + (k[0][i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * hs;
        }
        let xnew = if last { x1 } else { x + hs };
        {
            let (_, rest) = k.split_at_mut(6);
            f(xnew, &ynew, &mut rest[0]);
        }

        let mut err = 0.0;
        for i in 0..n {
            let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * hs;
            let scale = opts.atol + opts.rtol * y[i].norm().max(ynew[i].norm());
            err += (e.norm() / scale).powi(2);
        }
        let err = (err / n as f64).sqrt();

        if err <= 1.0 {
            stats.accepted += 1;
            x = xnew;
            std::mem::swap(&mut y, &mut ynew);
            if after_step(x, &mut y) {
                f(x, &y, &mut k[0]);
            } else {
                k.swap(0, 6);
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            step = h * factor;
        } else {
            stats.rejected += 1;
            let factor = if err.is_finite() { (0.9 * err.powf(-0.25)).clamp(0.1, 0.9) } else { 0.1 };
            step = h * factor;
        }
    }
    Ok((y, stats))
}
