use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use andreev_core::bs::{self, AndreevLevel, Quantizer, SpectrumRow};
use andreev_core::model::config_to_json;
use andreev_core::oracle::{self, ShootingOptions};
use andreev_core::{PotentialProfile, SimulationConfig};
use rayon::prelude::*;
use serde_json::json;

use super::linspace;
use crate::output::{num, Artifact, CheckSummary, Table};
use crate::{CliError, RunOutput};

pub const LEVELS_BS: &str = "levels_bs.csv";
pub const LEVELS_ORACLE: &str = "levels_oracle.csv";
pub const COMPARISON: &str = "comparison.csv";
pub const DISPERSION: &str = "dispersion.dat";
pub const SCRIPT: &str = "dispersion.gp";

/// BS levels at one `h` paired with the extrapolated grid and shooting values.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub h: f64,
    pub levels: Vec<AndreevLevel>,
    pub oracle: Vec<OracleLevel>,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleLevel {
    /// Index `n` of the BS level this oracle value is paired with.
    pub n: i64,
    pub e_fd: f64,
    pub e_shoot: f64,
    pub residual: f64,
}

impl SweepPoint {
    pub fn max_error(&self) -> f64 {
        self.levels
            .iter()
            .zip(&self.oracle)
            .map(|(l, o)| (l.energy - o.e_fd).abs())
            .fold(0.0, f64::max)
    }
}

/// Same settings as `config`, with the grid refined when `h` needs it.
pub fn resolved_config(profile: &PotentialProfile, config: &SimulationConfig) -> SimulationConfig {
    let needed = SimulationConfig::points_for_step(config.x_max, oracle::max_grid_step(profile));
    config.with_grid_points(config.grid_points.max(needed))
}

pub fn sweep_point(profile: &PotentialProfile, config: &SimulationConfig) -> Result<SweepPoint, CliError> {
    let cfg = resolved_config(profile, config);
    let levels = bs::solve_levels_with(profile, &cfg)?;
    let q = Quantizer::with_nodes(profile, &cfg, 0);
    let pad = 0.01 * profile.delta0;
    let lo = (q.e_min - pad).max(1e-6 * profile.delta0);
    let hi = (q.e_max + pad).min(profile.delta0 * (1.0 - 1e-6));
    let grid: Vec<f64> = oracle::extrapolated_levels(profile, &cfg, lo, hi)?
        .into_iter()
        .filter(|l| l.valley == 1)
        .map(|l| l.energy)
        .collect();
    let opts = ShootingOptions {
        x_max: cfg.x_max,
        ..ShootingOptions::for_profile(profile)
    };
    let oracle = levels
        .par_iter()
        .map(|l| {
            let e_fd = grid
                .iter()
                .copied()
                .min_by(|a, b| (a - l.energy).abs().total_cmp(&(b - l.energy).abs()))
                .unwrap_or(f64::NAN);
            if !e_fd.is_finite() {
                return Ok(OracleLevel {
                    n: l.n,
                    e_fd,
                    e_shoot: f64::NAN,
                    residual: f64::NAN,
                });
            }
            let spacing = 2.0 * PI * profile.h / l.period;
            let root = oracle::refine_shooting(profile, e_fd, 0.2 * spacing, &opts)?;
            Ok(OracleLevel {
                n: l.n,
                e_fd,
                e_shoot: root.energy,
                residual: root.indicator,
            })
        })
        .collect::<Result<Vec<_>, andreev_core::Error>>()?;
    Ok(SweepPoint {
        h: profile.h,
        levels,
        oracle,
    })
}

/// Rows `(level, h, n, E_bs, E_oracle, abs_err, ratio)`: each level of the
/// first `h` is followed to the nearest BS level at the next `h`, and
/// `ratio` is the previous error over the current one.
pub fn comparison_table(points: &[SweepPoint]) -> Table {
    let mut table = Table::new(&["level", "h", "n", "E_bs", "E_oracle", "abs_err", "ratio"]);
    let Some(first) = points.first() else {
        return table;
    };
    for (id, start) in first.levels.iter().enumerate() {
        let mut target = start.energy;
        let mut previous: Option<f64> = None;
        for p in points {
            let Some(i) = (0..p.levels.len()).min_by(|&a, &b| (p.levels[a].energy - target).abs().total_cmp(&(p.levels[b].energy - target).abs())) else {
                continue;
            };
            let (l, o) = (&p.levels[i], &p.oracle[i]);
            let err = (l.energy - o.e_fd).abs();
            let ratio = previous.map_or(f64::NAN, |e| e / err);
            table.row(&[id.to_string(), num(p.h), l.n.to_string(), num(l.energy), num(o.e_fd), num(err), num(ratio)]);
            previous = Some(err);
            target = l.energy;
        }
    }
    table
}

pub fn dispersion_files(rows: &[SpectrumRow]) -> (String, String) {
    let mut by_n: BTreeMap<i64, Vec<&SpectrumRow>> = BTreeMap::new();
    for r in rows {
        by_n.entry(r.n).or_default().push(r);
    }
    let mut dat = String::from("# E_n(phi) dispersion; one gnuplot index per level n\n");
    for (block, (n, rs)) in by_n.iter().enumerate() {
        if block > 0 {
            dat.push_str("\n\n");
        }
        let _ = writeln!(dat, "# n = {n}, rho = {}", rs[0].rho);
        for r in rs {
            let _ = writeln!(dat, "{} {}", num(r.phi), num(r.energy));
        }
    }
    let mut gp = String::new();
    gp.push_str("set xlabel \"phi\"\nset ylabel \"E\"\nset xrange [-pi:pi]\n");
    if by_n.is_empty() {
        gp.push_str("# no levels in the gap window\n");
    } else {
        let _ = writeln!(gp, "plot for [i=0:{}] '{DISPERSION}' index i using 1:2 with lines notitle", by_n.len() - 1);
    }
    (dat, gp)
}

pub fn run(profile: &PotentialProfile, config: &SimulationConfig, h_sweep: &[f64], phi_points: usize) -> Result<RunOutput, CliError> {
    if let Some(h) = h_sweep.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(CliError::Usage(format!("--h-sweep values must be positive, got {h}")));
    }
    if phi_points < 2 {
        return Err(CliError::Usage("--phi-points must be at least 2".into()));
    }
    let hs: Vec<f64> = if h_sweep.is_empty() { vec![profile.h] } else { h_sweep.to_vec() };
    let points: Vec<SweepPoint> = hs
        .par_iter()
        .map(|&h| {
            log::info!("h = {h}: BS and oracle levels");
            sweep_point(&(*profile).with_h(h), config)
        })
        .collect::<Result<_, _>>()?;

    let mut bs_table = Table::new(&["phi", "n", "rho", "E", "dE_dphi", "h"]);
    let mut oracle_table = Table::new(&["E_fd", "E_shoot", "residual", "n", "h"]);
    for p in &points {
        for (l, o) in p.levels.iter().zip(&p.oracle) {
            bs_table.row(&[num(profile.phi), l.n.to_string(), l.rho.to_string(), num(l.energy), num(l.supercurrent), num(p.h)]);
            oracle_table.row(&[num(o.e_fd), num(o.e_shoot), num(o.residual), o.n.to_string(), num(p.h)]);
        }
    }
    let comparison = comparison_table(&points);

    let phis: Vec<f64> = linspace(-PI, PI, phi_points);
    let rows = bs::spectrum_table_with(profile, &phis, &resolved_config(profile, config))?;
    let (dat, gp) = dispersion_files(&rows);

    let errors: Vec<_> = points.iter().map(|p| json!({ "h": p.h, "levels": p.levels.len(), "max_abs_err": p.max_error() })).collect();
    let finite = points.iter().all(|p| p.max_error().is_finite());
    let mut echo = config_to_json(profile, config);
    echo["h_sweep"] = json!(hs);
    echo["phi_points"] = json!(phi_points);
    Ok(RunOutput {
        artifacts: vec![
            Artifact::new(LEVELS_BS, bs_table.into_string()),
            Artifact::new(LEVELS_ORACLE, oracle_table.into_string()),
            Artifact::new(COMPARISON, comparison.into_string()),
            Artifact::new(DISPERSION, dat),
            Artifact::new(SCRIPT, gp),
        ],
        checks: vec![CheckSummary {
            name: "comparison.finite".into(),
            pass: finite,
        }],
        summary: json!({ "sweep": errors }),
        config_echo: echo,
        pass: true,
    })
}
