use andreev_core::model::config_to_json;
use andreev_core::scattering::{self, SearchRect};
use andreev_core::{Complex64 as C64, PotentialProfile, SimulationConfig};
use rayon::prelude::*;
use serde_json::json;

use super::linspace;
use crate::output::{num, Artifact, CheckSummary, Table};
use crate::potential_spec::parse_potential;
use crate::{CliError, RunOutput};

pub const SMATRIX: &str = "smatrix.csv";
pub const RESONANCES: &str = "resonances.csv";
/// Largest identity defect reported as passing in the manifest.
pub const DEFECT_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ScatterArgs {
    pub potential: String,
    pub k_min: f64,
    pub k_max: f64,
    pub k_points: usize,
    pub re: (f64, f64),
    pub im: (f64, f64),
}

pub fn run(profile: &PotentialProfile, config: &SimulationConfig, args: &ScatterArgs) -> Result<RunOutput, CliError> {
    let potential = parse_potential(&args.potential).map_err(CliError::Usage)?;
    if !(args.k_min > 0.0 && args.k_max >= args.k_min && args.k_max.is_finite()) || args.k_points == 0 {
        return Err(CliError::Usage("need 0 < k_min <= k_max and k_points >= 1".into()));
    }
    if !(args.re.0 < args.re.1 && args.im.0 < args.im.1) {
        return Err(CliError::Usage("resonance rectangle needs re_min < re_max and im_min < im_max".into()));
    }
    let h = profile.h;
    let ks = linspace(args.k_min, args.k_max, args.k_points);
    let transfers = ks
        .par_iter()
        .map(|&k| scattering::transfer_schrodinger(&potential, C64::new(k, 0.0), h))
        .collect::<Result<Vec<_>, _>>()?;

    let mut smatrix = Table::new(&[
        "k",
        "re_A",
        "im_A",
        "re_B",
        "im_B",
        "re_A_right",
        "im_A_right",
        "re_B_right",
        "im_B_right",
        "probability_defect",
        "det_defect",
        "su11_defect",
        "unitarity_defect",
        "symmetry_defect",
    ]);
    let mut worst = 0.0f64;
    for (k, t) in ks.iter().zip(&transfers) {
        let r = scattering::su11_u2_checks(&t.m, t.a, t.b);
        worst = worst.max(r.max_defect());
        smatrix.row(&[
            num(*k),
            num(t.a.re),
            num(t.a.im),
            num(t.b.re),
            num(t.b.im),
            num(t.a_right.re),
            num(t.a_right.im),
            num(t.b_right.re),
            num(t.b_right.im),
            num(r.probability),
            num(r.det),
            num(r.pseudo_unitarity),
            num(r.unitarity),
            num(r.symmetry),
        ]);
    }

    let rect = SearchRect { re: args.re, im: args.im };
    let poles = scattering::find_resonances(&potential, &rect, h)?;
    let mut resonances = Table::new(&["re_k", "im_k", "re_E", "im_E", "physical", "residual"]);
    for p in &poles {
        resonances.row(&[
            num(p.k.re),
            num(p.k.im),
            num(p.energy.re),
            num(p.energy.im),
            u8::from(p.physical).to_string(),
            num(p.residual),
        ]);
    }

    let mut echo = config_to_json(profile, config);
    echo["potential"] = serde_json::to_value(&potential).unwrap_or_default();
    echo["k_grid"] = json!({ "min": args.k_min, "max": args.k_max, "points": args.k_points });
    echo["search_rect"] = json!({ "re": [rect.re.0, rect.re.1], "im": [rect.im.0, rect.im.1] });
    Ok(RunOutput {
        artifacts: vec![Artifact::new(SMATRIX, smatrix.into_string()), Artifact::new(RESONANCES, resonances.into_string())],
        checks: vec![CheckSummary {
            name: "scattering.identities".into(),
            pass: worst <= DEFECT_THRESHOLD,
        }],
        summary: json!({ "max_defect": worst, "resonances": poles.len() }),
        config_echo: echo,
        pass: true,
    })
}
