//! First-order Bohr–Sommerfeld quantization of the Andreev spectrum and the
//! supercurrent carried by each level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::classical::{action_with_nodes, period_with_nodes, required_nodes};
use crate::error::{Error, Result};
use crate::model::{PhaseConvention, PotentialProfile, SimulationConfig};

/// Distance from the gap edges (in units of `Δ₀`) excluded from the search.
pub const EDGE_FRACTION: f64 = 1e-3;
/// Phase step of the finite-difference supercurrent.
pub const PHI_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AndreevLevel {
    pub n: i64,
    /// +1 for electron-like (even `n`), −1 for hole-like (odd `n`).
    pub rho: i8,
    pub energy: f64,
    pub action: f64,
    pub period: f64,
    /// `dE/dφ` from the implicit formula.
    pub supercurrent: f64,
    /// Quantization mismatch left at the returned energy.
    pub residual: f64,
    /// Level lies within `ε₀` of the scanned window, where the linearized
    /// gap at the branching point is least reliable.
    pub edge_flag: bool,
}

pub fn parity(n: i64) -> i8 {
    if n.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// Right-hand side `2πnh + s·hφ − hπ` with `s = 1` (literal) or `s = ρ`.
pub fn quantization_target(profile: &PotentialProfile, n: i64, convention: PhaseConvention) -> f64 {
    let h = profile.h;
    let sign = match convention {
        PhaseConvention::Literal => 1.0,
        PhaseConvention::RhoDependent => parity(n) as f64,
    };
    2.0 * PI * n as f64 * h + sign * h * profile.phi - h * PI
}

/// Action evaluator on a rule fixed once per profile so that `A(E)` is smooth
/// in `E` and the roots can be polished to rounding level.
#[derive(Debug, Clone)]
pub struct Quantizer {
    pub profile: PotentialProfile,
    pub convention: PhaseConvention,
    pub root_tol: f64,
    pub nodes: usize,
    pub e_min: f64,
    pub e_max: f64,
}

impl Quantizer {
    pub fn new(profile: &PotentialProfile, config: &SimulationConfig) -> Result<Self> {
        let d0 = profile.delta0;
        let eps = EDGE_FRACTION * d0;
        let samples = [eps, 0.25 * d0, 0.5 * d0, 0.75 * d0, d0 - eps];
        let nodes = 2 * required_nodes(profile, &samples, config.quad_points)?;
        Ok(Self::with_nodes(profile, config, nodes))
    }

    pub fn with_nodes(profile: &PotentialProfile, config: &SimulationConfig, nodes: usize) -> Self {
        let eps = EDGE_FRACTION * profile.delta0;
        Self {
            profile: *profile,
            convention: config.phase_convention,
            root_tol: config.root_tol,
            nodes,
            e_min: eps,
            e_max: profile.delta0 - eps,
        }
    }

    pub fn action(&self, energy: f64) -> Result<f64> {
        action_with_nodes(&self.profile, energy, self.nodes)
    }

    pub fn period(&self, energy: f64) -> Result<f64> {
        period_with_nodes(&self.profile, energy, self.nodes)
    }

    pub fn mismatch(&self, energy: f64, n: i64) -> Result<f64> {
        Ok(self.action(energy)? - quantization_target(&self.profile, n, self.convention))
    }

    /// Quantum numbers whose target lies inside the action range of `[lo, hi]`.
    fn candidates(&self, a_lo: f64, a_hi: f64) -> std::ops::RangeInclusive<i64> {
        let h = self.profile.h;
        let shift = h * PI + h * self.profile.phi.abs();
        let n_lo = ((a_lo + h * PI - h * self.profile.phi.abs()) / (2.0 * PI * h)).floor() as i64 - 1;
        let n_hi = ((a_hi + shift) / (2.0 * PI * h)).ceil() as i64 + 1;
        n_lo..=n_hi
    }

    /// All levels with a sign change of the mismatch on `[e_min, e_max]`.
    pub fn solve(&self) -> Result<Vec<AndreevLevel>> {
        self.solve_in(self.e_min, self.e_max)
    }

    fn solve_in(&self, lo: f64, hi: f64) -> Result<Vec<AndreevLevel>> {
        let (a_lo, a_hi) = (self.action(lo)?, self.action(hi)?);
        let mut levels = Vec::new();
        for n in self.candidates(a_lo, a_hi) {
            let target = quantization_target(&self.profile, n, self.convention);
            let (g_lo, g_hi) = (a_lo - target, a_hi - target);
            if g_lo <= 0.0 && g_hi > 0.0 {
                levels.push(self.polish(n, lo, hi, g_lo, g_hi)?);
            }
        }
        levels.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        Ok(levels)
    }

    /// Level `n` alone, searched on a window slightly wider than the default
    /// so that a small phase shift does not push it out.
    pub fn solve_single(&self, n: i64) -> Result<Option<AndreevLevel>> {
        let (lo, hi) = (0.5 * self.e_min, self.profile.delta0 - 0.5 * self.e_min);
        let target = quantization_target(&self.profile, n, self.convention);
        let (g_lo, g_hi) = (self.action(lo)? - target, self.action(hi)? - target);
        if g_lo <= 0.0 && g_hi > 0.0 {
            Ok(Some(self.polish(n, lo, hi, g_lo, g_hi)?))
        } else {
            Ok(None)
        }
    }

    fn polish(&self, n: i64, lo: f64, hi: f64, g_lo: f64, g_hi: f64) -> Result<AndreevLevel> {
        let tol = self.root_tol * self.profile.h;
        let (energy, residual) = find_root(|e| self.mismatch(e, n), lo, hi, g_lo, g_hi, tol)?;
        let period = self.period(energy)?;
        let rho = parity(n);
        let sign = match self.convention {
            PhaseConvention::Literal => 1.0,
            PhaseConvention::RhoDependent => rho as f64,
        };
        let d0 = self.profile.delta0;
        let eps = EDGE_FRACTION * d0;
        Ok(AndreevLevel {
            n,
            rho,
            energy,
            action: residual + quantization_target(&self.profile, n, self.convention),
            period,
            supercurrent: sign * self.profile.h / period,
            residual,
            edge_flag: energy <= 2.0 * eps || energy >= d0 - 2.0 * eps,
        })
    }
}

/// Bracketed root of an increasing function: secant steps with the Illinois
/// modification, falling back to bisection when the bracket stalls.
fn find_root<F: FnMut(f64) -> Result<f64>>(
    mut g: F,
    mut a: f64,
    mut b: f64,
    mut ga: f64,
    mut gb: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    if ga == 0.0 {
        return Ok((a, 0.0));
    }
    let mut side = 0i8;
    let mut width = b - a;
    for iter in 0..300 {
        let mut x = (a * gb - b * ga) / (gb - ga);
        // Every third step must have halved the bracket.
        if iter % 3 == 2 && b - a > 0.5 * width {
            x = 0.5 * (a + b);
        }
        if iter % 3 == 2 {
            width = b - a;
        }
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        if x <= a || x >= b {
            break;
        }
        let gx = g(x)?;
        if gx.abs() <= tol {
            return Ok((x, gx));
        }
        if gx < 0.0 {
            a = x;
            ga = gx;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            gb = gx;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    // Bracket exhausted at rounding level; the Illinois halving may have
    // rescaled the stored values, so re-evaluate.
    let (fa, fb) = (g(a)?, g(b)?);
    if fa.abs() <= fb.abs() {
        Ok((a, fa))
    } else {
        Ok((b, fb))
    }
}

/// `A(E) − 2πnh − hφ + hπ` with the default settings.
pub fn quantization_mismatch(profile: &PotentialProfile, energy: f64, n: i64) -> Result<f64> {
    Quantizer::new(profile, &SimulationConfig::for_profile(profile))?.mismatch(energy, n)
}

pub fn solve_levels(profile: &PotentialProfile) -> Result<Vec<AndreevLevel>> {
    solve_levels_with(profile, &SimulationConfig::for_profile(profile))
}

pub fn solve_levels_with(profile: &PotentialProfile, config: &SimulationConfig) -> Result<Vec<AndreevLevel>> {
    Quantizer::new(profile, config)?.solve()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Supercurrent {
    /// `±h/T(E)`, the reported value.
    pub implicit: f64,
    /// Central difference of re-solved levels at `φ ± 10⁻⁴`.
    pub finite_difference: f64,
    pub rel_diff: f64,
}

pub fn supercurrent(profile: &PotentialProfile, level: &AndreevLevel) -> Result<Supercurrent> {
    supercurrent_with(profile, level, &SimulationConfig::for_profile(profile))
}

pub fn supercurrent_with(profile: &PotentialProfile, level: &AndreevLevel, config: &SimulationConfig) -> Result<Supercurrent> {
    let base = Quantizer::new(profile, config)?;
    let shifted = |dphi: f64| -> Result<f64> {
        let p = (*profile).with_phi(profile.phi + dphi);
        Quantizer::with_nodes(&p, config, base.nodes)
            .solve_single(level.n)?
            .map(|l| l.energy)
            .ok_or_else(|| Error::Consistency(format!("level n = {} leaves the gap under a phase shift of {dphi:e}", level.n)))
    };
    let fd = (shifted(PHI_STEP)? - shifted(-PHI_STEP)?) / (2.0 * PHI_STEP);
    let implicit = level.supercurrent;
    let rel_diff = (implicit - fd).abs() / implicit.abs().max(f64::MIN_POSITIVE);
    if rel_diff > 1e-2 {
        return Err(Error::Consistency(format!(
            "supercurrent of level n = {}: implicit {implicit:e} vs finite difference {fd:e}",
            level.n
        )));
    }
    Ok(Supercurrent {
        implicit,
        finite_difference: fd,
        rel_diff,
    })
}

/// One row of the phase-dispersion table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub phi: f64,
    pub n: i64,
    pub rho: i8,
    pub energy: f64,
    pub d_e_d_phi: f64,
    pub edge_flag: bool,
}

pub fn spectrum_table(profile: &PotentialProfile, phis: &[f64]) -> Result<Vec<SpectrumRow>> {
    spectrum_table_with(profile, phis, &SimulationConfig::for_profile(profile))
}

/// Rows ordered by the input phases, then by energy.
pub fn spectrum_table_with(profile: &PotentialProfile, phis: &[f64], config: &SimulationConfig) -> Result<Vec<SpectrumRow>> {
    if let Some(phi) = phis.iter().find(|p| !(p.abs() <= PI)) {
        return Err(Error::Domain(format!("phase {phi} outside [-pi, pi]")));
    }
    if phis.is_empty() {
        return Ok(Vec::new());
    }
    let nodes = Quantizer::new(profile, config)?.nodes;
    let blocks: Vec<Vec<SpectrumRow>> = phis
        .par_iter()
        .map(|&phi| {
            let p = (*profile).with_phi(phi);
            let levels = Quantizer::with_nodes(&p, config, nodes).solve()?;
            Ok(levels
                .iter()
                .map(|l| SpectrumRow {
                    phi,
                    n: l.n,
                    rho: l.rho,
                    energy: l.energy,
                    d_e_d_phi: l.supercurrent,
                    edge_flag: l.edge_flag,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_levels() -> Vec<AndreevLevel> {
        solve_levels(&PotentialProfile::default_junction()).unwrap()
    }

    #[test]
    fn mismatch_is_linear_in_n() {
        let p = PotentialProfile::default_junction();
        let q = Quantizer::new(&p, &SimulationConfig::for_profile(&p)).unwrap();
        let (m0, m1) = (q.mismatch(0.4, 3).unwrap(), q.mismatch(0.4, 4).unwrap());
        assert!(((m1 - m0) + 2.0 * PI * p.h).abs() < 1e-14);
    }

    #[test]
    fn default_levels_are_roots_with_parity() {
        let levels = default_levels();
        assert!(levels.len() > 3);
        for l in &levels {
            assert!(l.residual.abs() <= 1e-12 * 0.05, "{l:?}");
            assert_eq!(l.rho == 1, l.n % 2 == 0);
            assert!(l.energy > 0.0 && l.energy < 1.0);
            assert!(l.supercurrent > 0.0);
        }
        for w in levels.windows(2) {
            assert_eq!(w[1].n, w[0].n + 1);
            assert!(w[1].energy > w[0].energy);
        }
    }

    #[test]
    fn level_count_matches_action_range() {
        let p = PotentialProfile::default_junction();
        let q = Quantizer::new(&p, &SimulationConfig::for_profile(&p)).unwrap();
        let levels = q.solve().unwrap();
        let two_pi_h = 2.0 * PI * p.h;
        let estimate = (q.action(q.e_max).unwrap() / two_pi_h).floor() - (q.action(q.e_min).unwrap() / two_pi_h).ceil();
        assert!((levels.len() as f64 - estimate).abs() <= 2.0);

        let finer = solve_levels(&p.with_h(0.025)).unwrap();
        let ratio = finer.len() as f64 / levels.len() as f64;
        assert!((ratio - 2.0).abs() < 0.3, "{} vs {}", finer.len(), levels.len());
    }

    #[test]
    fn full_phase_turn_shifts_quantum_number() {
        let p = PotentialProfile::default_junction().with_phi(0.0);
        let a = solve_levels(&p).unwrap();
        let b = solve_levels(&p.with_phi(2.0 * PI)).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(y.n + 1, x.n);
            assert!((x.energy - y.energy).abs() < 1e-12);
        }
    }

    #[test]
    fn supercurrent_estimates_agree() {
        let p = PotentialProfile::default_junction();
        for l in default_levels().iter().filter(|l| !l.edge_flag) {
            let s = supercurrent(&p, l).unwrap();
            assert!(s.rel_diff <= 1e-3, "{l:?} {s:?}");
        }
    }

    #[test]
    fn supercurrent_scales_with_h() {
        let p = PotentialProfile::default_junction();
        let q1 = Quantizer::new(&p, &SimulationConfig::for_profile(&p)).unwrap();
        let t = q1.period(0.5).unwrap();
        let fine = p.with_h(0.025);
        let q2 = Quantizer::new(&fine, &SimulationConfig::for_profile(&fine)).unwrap();
        assert!(((p.h / t) / (fine.h / q2.period(0.5).unwrap()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_table_single_phase_and_empty() {
        let p = PotentialProfile::default_junction();
        assert!(spectrum_table(&p, &[]).unwrap().is_empty());
        let rows = spectrum_table(&p, &[p.phi]).unwrap();
        let levels = default_levels();
        assert_eq!(rows.len(), levels.len());
        for (r, l) in rows.iter().zip(&levels) {
            assert_eq!((r.n, r.rho), (l.n, l.rho));
            assert!((r.energy - l.energy).abs() < 1e-13);
            assert!((r.d_e_d_phi - l.supercurrent).abs() < 1e-13);
        }
        assert!(spectrum_table(&p, &[4.0]).is_err());
    }

    #[test]
    fn rho_dependent_convention_reverses_hole_currents() {
        let p = PotentialProfile::default_junction();
        let mut cfg = SimulationConfig::for_profile(&p);
        cfg.phase_convention = PhaseConvention::RhoDependent;
        let levels = solve_levels_with(&p, &cfg).unwrap();
        for l in &levels {
            assert_eq!(l.supercurrent > 0.0, l.rho == 1);
            assert!(l.residual.abs() <= cfg.root_tol * p.h);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn levels_valid_for_random_phase(phi in -PI..PI) {
            let p = PotentialProfile::default_junction().with_phi(phi);
            let levels = solve_levels(&p).unwrap();
            prop_assert!(!levels.is_empty());
            for l in &levels {
                prop_assert!(l.residual.abs() <= 1e-12 * p.h);
            }
            for w in levels.windows(2) {
                prop_assert_eq!(w[1].n, w[0].n + 1);
                prop_assert!(w[1].energy > w[0].energy);
                prop_assert_eq!(w[1].rho, -w[0].rho);
            }
        }
    }
}
