use std::f64::consts::PI;

use andreev_core::bs::{self, Quantizer};
use andreev_core::classical::normal_form_f0;
use andreev_core::scattering::{self, wrap_phase, Potential, SquareBump};
use andreev_core::specfun;
use andreev_core::{Complex64 as C64, PotentialProfile, SimulationConfig};
use proptest::prelude::*;

fn squares() -> impl Strategy<Value = Potential> {
    prop::collection::vec((-2.0f64..1.5, 0.05f64..1.0, -3.0f64..6.0), 1..4).prop_map(|bs| Potential::Squares {
        bumps: bs
            .into_iter()
            .map(|(left, width, height)| SquareBump {
                left,
                right: left + width,
                height,
            })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transfer_identities_on_random_steps(pot in squares(), k in 0.2f64..3.0, h in 0.05f64..0.5) {
        let t = scattering::transfer_schrodinger(&pot, C64::new(k, 0.0), h).unwrap();
        let r = scattering::su11_u2_checks(&t.m, t.a, t.b);
        prop_assert!(r.max_defect() <= 1e-9, "{r:?}");
        // Reciprocity: the transmission amplitude does not depend on the side.
        prop_assert!((t.a - t.a_right).norm() <= 1e-9 * (1.0 + t.a.norm()));
    }

    #[test]
    fn single_barrier_matches_closed_form(height in 0.1f64..4.0, width in 0.05f64..0.8, k in 0.2f64..2.5, h in 0.05f64..0.5) {
        let pot = Potential::Squares { bumps: vec![SquareBump { left: 0.0, right: width, height }] };
        let t = scattering::transfer_schrodinger(&pot, C64::new(k, 0.0), h).unwrap();
        let exact = scattering::square_barrier_transmission(height, width, C64::new(k, 0.0), h);
        prop_assert!((t.a.norm() - exact.norm()).abs() <= 1e-9, "{} vs {}", t.a.norm(), exact.norm());
    }

    #[test]
    fn f0_even_in_beta(beta in 0.0f64..1.0, u in 0.02f64..0.95) {
        let top = if beta == 0.0 { 50.0 } else { 1.0 / (16.0 * beta * beta) };
        let t = u * top.min(50.0);
        let a = normal_form_f0(beta, t).unwrap();
        let b = normal_form_f0(-beta, t).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn gamma_reflection(re in -4.5f64..4.5, im in -3.0f64..3.0) {
        let z = C64::new(re, im);
        prop_assume!((z - z.re.round()).norm() > 1e-3);
        let lhs = specfun::gamma(z).unwrap() * specfun::gamma(1.0 - z).unwrap();
        let rhs = PI / (PI * z).sin();
        prop_assert!((lhs - rhs).norm() <= 1e-11 * rhs.norm());
    }

    #[test]
    fn pcf_recurrence_in_order(nu in -10.0f64..10.0, r in 0.0f64..10.0, arg in -PI..PI) {
        let z = C64::from_polar(r, arg);
        let d = |n: f64| specfun::pcf_d(n, z).unwrap().value;
        let (a, b, c) = (d(nu + 1.0), d(nu), d(nu - 1.0));
        let scale = a.norm().max((z * b).norm()).max((nu * c).norm()).max(f64::MIN_POSITIVE);
        prop_assert!((a - z * b + nu * c).norm() <= 1e-9 * scale);
    }

    #[test]
    fn pcf_derivative_consistent(nu in -5.0f64..5.0, re in -4.0f64..4.0, im in -4.0f64..4.0) {
        let z = C64::new(re, im);
        let v = specfun::pcf_d(nu, z).unwrap();
        let lower = specfun::pcf_d(nu - 1.0, z).unwrap().value;
        // D'_ν = −(z/2)D_ν + ν D_{ν−1}.
        let alt = -0.5 * z * v.value + nu * lower;
        let scale = v.derivative.norm().max((0.5 * z * v.value).norm()).max(1e-300);
        prop_assert!((v.derivative - alt).norm() <= 1e-9 * scale);
    }

    #[test]
    fn wrap_phase_range(p in -100.0f64..100.0) {
        let w = wrap_phase(p);
        prop_assert!(w > -PI && w <= PI);
        let turns = (p - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mismatch_shifts_linearly_in_n(e in 0.1f64..0.9, n in 0i64..30, phi in -PI..PI) {
        let p = PotentialProfile::default_junction().with_phi(phi);
        let q = Quantizer::new(&p, &SimulationConfig::for_profile(&p)).unwrap();
        let m0 = q.mismatch(e, n).unwrap();
        let m1 = q.mismatch(e, n + 1).unwrap();
        prop_assert!((m0 - m1 - 2.0 * PI * p.h).abs() <= 1e-12);
    }

    #[test]
    fn levels_alternate_in_parity(phi in -PI..PI) {
        let p = PotentialProfile::default_junction().with_phi(phi);
        let levels = bs::solve_levels(&p).unwrap();
        prop_assert!(!levels.is_empty());
        for w in levels.windows(2) {
            prop_assert_eq!(w[1].n, w[0].n + 1);
            prop_assert_eq!(w[1].rho, -w[0].rho);
            prop_assert!(w[1].energy > w[0].energy);
        }
        for l in &levels {
            prop_assert!(l.energy > 0.0 && l.energy < p.delta0);
            prop_assert!(l.period > 0.0);
        }
    }
}
