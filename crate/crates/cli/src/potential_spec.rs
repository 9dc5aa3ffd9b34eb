//! Text form of scattering potentials.
//!
//! ```text
//! free
//! double:HEIGHT,BARRIER_WIDTH,WELL_WIDTH
//! square:LEFT,RIGHT,HEIGHT[;LEFT,RIGHT,HEIGHT...]
//! smooth:CENTER,HALF_WIDTH,HEIGHT[;...]
//! table:X,V;X,V[;...]
//! @potential.json
//! ```
//!
//! A leading `@` reads the serde form of [`Potential`] from a file.

use andreev_core::scattering::{Potential, SmoothBump, SquareBump};

pub fn parse_potential(spec: &str) -> Result<Potential, String> {
    let spec = spec.trim();
    let potential = if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read potential file {path}: {e}"))?;
        serde_json::from_str(&text).map_err(|e| format!("potential file {path}: {e}"))?
    } else {
        let (kind, body) = match spec.split_once(':') {
            Some((k, b)) => (k.trim().to_ascii_lowercase(), b),
            None => (spec.to_ascii_lowercase(), ""),
        };
        match kind.as_str() {
            "free" if body.trim().is_empty() => Potential::Free,
            "double" => {
                let [height, width, well] = triple(body)?;
                Potential::double_barrier(height, width, well)
            }
            "square" => Potential::Squares {
                bumps: groups(body)?
                    .into_iter()
                    .map(|g| fixed::<3>(&g).map(|[left, right, height]| SquareBump { left, right, height }))
                    .collect::<Result<_, _>>()?,
            },
            "smooth" => Potential::Smooth {
                bumps: groups(body)?
                    .into_iter()
                    .map(|g| {
                        fixed::<3>(&g).map(|[center, half_width, height]| SmoothBump {
                            center,
                            half_width,
                            height,
                        })
                    })
                    .collect::<Result<_, _>>()?,
            },
            "table" => {
                let pairs = groups(body)?.into_iter().map(|g| fixed::<2>(&g)).collect::<Result<Vec<_>, _>>()?;
                Potential::Tabulated {
                    x: pairs.iter().map(|p| p[0]).collect(),
                    v: pairs.iter().map(|p| p[1]).collect(),
                }
            }
            _ => return Err(format!("unknown potential spec `{spec}`; expected free, double:, square:, smooth:, table: or @file")),
        }
    };
    potential.validate().map_err(|e| e.to_string())?;
    Ok(potential)
}

fn groups(body: &str) -> Result<Vec<Vec<f64>>, String> {
    let out: Vec<Vec<f64>> = body
        .split(';')
        .filter(|g| !g.trim().is_empty())
        .map(|g| {
            g.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", t.trim())))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err("potential spec has no entries".into());
    }
    Ok(out)
}

fn fixed<const N: usize>(g: &[f64]) -> Result<[f64; N], String> {
    <[f64; N]>::try_from(g).map_err(|_| format!("expected {N} numbers per entry, got {}", g.len()))
}

fn triple(body: &str) -> Result<[f64; 3], String> {
    let g = groups(body)?;
    if g.len() != 1 {
        return Err("expected a single HEIGHT,BARRIER_WIDTH,WELL_WIDTH entry".into());
    }
    fixed::<3>(&g[0])
}
