use andreev_core::bs;
use andreev_core::classical::normal_form_f0;
use andreev_core::model::config_to_json;
use andreev_core::oracle;
use andreev_core::scattering::{self, Potential, SmoothBump, SquareBump};
use andreev_core::specfun::{pcf_d, weber_residual};
use andreev_core::{Complex64 as C64, Error, PotentialProfile, SimulationConfig};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::spectrum::resolved_config;
use crate::output::{Artifact, CheckSummary};
use crate::{CliError, RunOutput};

pub const REPORT: &str = "verify_report.json";
pub const GROUPS: [&str; 6] = ["flux", "symmetry", "weber", "f0", "su11", "supercurrent"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bound {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub group: String,
    pub measured: f64,
    pub threshold: f64,
    pub bound: Bound,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(group: &str, name: &str, measured: f64, bound: Bound, threshold: f64, detail: String) -> Self {
        let pass = match bound {
            Bound::AtMost => measured <= threshold,
            Bound::AtLeast => measured >= threshold,
        };
        Self {
            name: format!("{group}.{name}"),
            group: group.to_string(),
            measured,
            threshold,
            bound,
            pass,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub all_pass: bool,
    pub checks: Vec<Check>,
}

fn flux(profile: &PotentialProfile, config: &SimulationConfig) -> Result<Vec<Check>, Error> {
    let states = oracle::eigen_gap(&oracle::discretize(profile, config)?)?;
    let worst = states
        .iter()
        .map(|s| oracle::quantum_flux(s, profile).relative_deviation)
        .fold(0.0, f64::max);
    // Dropping the hole component must break conservation visibly.
    let control = states
        .iter()
        .map(|s| {
            let mut broken = s.clone();
            broken.u2.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            oracle::quantum_flux(&broken, profile).relative_deviation
        })
        .fold(f64::INFINITY, f64::min);
    let n = states.len();
    Ok(vec![
        Check::new("flux", "conservation", if n == 0 { f64::INFINITY } else { worst }, Bound::AtMost, 1e-4, format!("{n} gap states")),
        Check::new("flux", "negative_control", if n == 0 { 0.0 } else { control }, Bound::AtLeast, 1e-1, "hole component removed".into()),
    ])
}

fn symmetry(profile: &PotentialProfile, config: &SimulationConfig) -> Result<Vec<Check>, Error> {
    let r = oracle::symmetry_spectrum(profile, config)?;
    Ok(vec![
        Check::new(
            "symmetry",
            "charge_conjugation",
            r.charge_conjugation,
            Bound::AtMost,
            1e-10,
            format!("{} levels, operator distance {:.3e}", r.levels, r.charge_conjugation_matrix),
        ),
        Check::new(
            "symmetry",
            "pt",
            r.pt_defect(),
            Bound::AtMost,
            1e-10,
            format!("matrix {:.3e}, spectrum {:.3e}", r.pt_matrix, r.pt_spectral),
        ),
    ])
}

fn weber() -> Result<Vec<Check>, Error> {
    let mut residual = 0.0f64;
    for i in 0..=40 {
        let nu = -5.0 + 0.25 * i as f64;
        for j in 0..20 {
            let s = -5.0 + 10.0 * j as f64 / 19.0;
            for z in [C64::new(s, 0.0), C64::new(0.0, s)] {
                residual = residual.max(weber_residual(nu, z)?);
            }
        }
    }
    let d = |nu: f64, z: C64| pcf_d(nu, z).map(|v| v.value);
    let mut closed = 0.0f64;
    for z in [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 2.0)] {
        closed = closed.max((d(0.0, z)? - (-z * z / 4.0).exp()).norm());
    }
    let z = C64::new(1.3, 0.0);
    closed = closed.max((d(1.0, z)? - z * (-z * z / 4.0).exp()).norm());
    let mut recurrence = 0.0f64;
    for i in 0..=20 {
        let nu = -9.5 + 0.9 * i as f64;
        for j in 0..12 {
            let z = C64::from_polar(0.5 + 0.75 * j as f64, -3.0 + 0.5 * j as f64);
            let (a, b, c) = (d(nu + 1.0, z)?, d(nu, z)?, d(nu - 1.0, z)?);
            let scale = a.norm().max((z * b).norm()).max((nu * c).norm()).max(f64::MIN_POSITIVE);
            recurrence = recurrence.max((a - z * b + nu * c).norm() / scale);
        }
    }
    Ok(vec![
        Check::new("weber", "residual", residual, Bound::AtMost, 1e-8, "nu in [-5, 5], real and imaginary z in [-5, 5]".into()),
        Check::new("weber", "closed_forms", closed, Bound::AtMost, 1e-12, "D_0 and D_1".into()),
        Check::new("weber", "recurrence", recurrence, Bound::AtMost, 1e-9, "three-term recurrence in nu".into()),
    ])
}

fn f0() -> Result<Vec<Check>, Error> {
    let ts: Vec<f64> = (0..=90).map(|i| 0.1 + 0.01 * i as f64).collect();
    let mut harmonic = 0.0f64;
    let mut weak = 0.0f64;
    for &t in &ts {
        harmonic = harmonic.max((normal_form_f0(0.0, t)? - t / 2.0).abs());
        weak = weak.max((normal_form_f0(1e-3, t)? - t / 2.0).abs());
    }
    let mut violations = 0usize;
    for beta in [0.0, 1e-3, 0.1, 0.3, -0.3] {
        let top = if beta == 0.0 { 50.0 } else { 1.0 / (16.0 * beta * beta) };
        let vals = (1..400).map(|i| normal_form_f0(beta, top * i as f64 / 400.0)).collect::<Result<Vec<_>, _>>()?;
        violations += vals.windows(2).filter(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)).count();
    }
    Ok(vec![
        Check::new("f0", "harmonic", harmonic, Bound::AtMost, 1e-12, "|F0(t, 0) - t/2|".into()),
        Check::new("f0", "weak_coupling", weak, Bound::AtMost, 1e-4, "|F0(t, 1e-3) - t/2|".into()),
        Check::new("f0", "monotone", violations as f64, Bound::AtMost, 0.0, "non-increasing steps below the barrier top".into()),
    ])
}

fn sample_potentials() -> Vec<Potential> {
    vec![
        Potential::double_barrier(20.0, 0.08, 2.0),
        Potential::Squares {
            bumps: vec![
                SquareBump { left: -1.2, right: -0.4, height: 3.5 },
                SquareBump { left: 0.1, right: 0.3, height: -2.0 },
            ],
        },
        Potential::Smooth {
            bumps: vec![
                SmoothBump { center: -0.5, half_width: 0.6, height: 4.0 },
                SmoothBump { center: 0.7, half_width: 0.3, height: -1.5 },
            ],
        },
        Potential::Tabulated {
            x: vec![-1.0, -0.6, 0.0, 0.3, 1.1],
            v: vec![0.0, 2.5, -1.0, 5.0, 0.0],
        },
    ]
}

fn su11() -> Result<Vec<Check>, Error> {
    let mut cases: Vec<(Potential, f64, f64)> = Vec::new();
    for p in sample_potentials() {
        for h in [0.05, 0.2] {
            for i in 0..8 {
                cases.push((p.clone(), h, 0.2 + 0.35 * i as f64));
            }
        }
    }
    let reports = cases
        .par_iter()
        .map(|(p, h, k)| scattering::transfer_schrodinger(p, C64::new(*k, 0.0), *h).map(|t| scattering::su11_u2_checks(&t.m, t.a, t.b)))
        .collect::<Result<Vec<_>, _>>()?;
    let max = |f: fn(&scattering::Su11Report) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    let detail = format!("{} (potential, h, k) samples", reports.len());
    Ok(vec![
        Check::new("su11", "probability", max(|r| r.probability), Bound::AtMost, 1e-9, detail.clone()),
        Check::new("su11", "det", max(|r| r.det), Bound::AtMost, 1e-9, detail.clone()),
        Check::new("su11", "pseudo_unitarity", max(|r| r.pseudo_unitarity), Bound::AtMost, 1e-9, detail.clone()),
        Check::new("su11", "s_unitarity", max(|r| r.unitarity), Bound::AtMost, 1e-9, detail.clone()),
        Check::new("su11", "s_symmetry", max(|r| r.symmetry), Bound::AtMost, 1e-9, detail),
    ])
}

fn supercurrent(profile: &PotentialProfile, config: &SimulationConfig) -> Result<Vec<Check>, Error> {
    let levels = bs::solve_levels_with(profile, config)?;
    let mut worst = if levels.is_empty() { f64::INFINITY } else { 0.0f64 };
    let mut failures = Vec::new();
    for l in &levels {
        match bs::supercurrent_with(profile, l, config) {
            Ok(s) => worst = worst.max(s.rel_diff),
            Err(Error::Consistency(m)) => {
                worst = f64::INFINITY;
                failures.push(m);
            }
            Err(e) => return Err(e),
        }
    }
    let mut detail = format!("{} levels", levels.len());
    if !failures.is_empty() {
        detail.push_str(&format!("; {}", failures.join("; ")));
    }
    Ok(vec![Check::new("supercurrent", "agreement", worst, Bound::AtMost, 1e-3, detail)])
}

pub fn run(profile: &PotentialProfile, config: &SimulationConfig, only: &[String]) -> Result<RunOutput, CliError> {
    if let Some(bad) = only.iter().find(|g| !GROUPS.contains(&g.as_str())) {
        return Err(CliError::Usage(format!("unknown check group `{bad}`; expected one of {}", GROUPS.join(", "))));
    }
    let wanted = |g: &str| only.is_empty() || only.iter().any(|o| o == g);
    let cfg = resolved_config(profile, config);
    let mut checks = Vec::new();
    for group in GROUPS.into_iter().filter(|g| wanted(g)) {
        log::info!("verify: {group}");
        let found = match group {
            "flux" => flux(profile, &cfg),
            "symmetry" => symmetry(profile, &cfg),
            "weber" => weber(),
            "f0" => f0(),
            "su11" => su11(),
            _ => supercurrent(profile, &cfg),
        }?;
        checks.extend(found);
    }
    let all_pass = checks.iter().all(|c| c.pass);
    let report = Report { all_pass, checks };
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    text.push('\n');
    let mut echo = config_to_json(profile, config);
    echo["only"] = json!(only);
    Ok(RunOutput {
        artifacts: vec![Artifact::new(REPORT, text)],
        checks: report
            .checks
            .iter()
            .map(|c| CheckSummary {
                name: c.name.clone(),
                pass: c.pass,
            })
            .collect(),
        summary: json!({ "checks": report.checks.len(), "failed": report.checks.iter().filter(|c| !c.pass).count() }),
        config_echo: echo,
        pass: all_pass,
    })
}
