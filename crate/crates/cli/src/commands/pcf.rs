use andreev_core::specfun::{pcf_d, weber_residual};
use andreev_core::Complex64 as C64;
use serde_json::json;

use crate::output::{num, Artifact, Table};
use crate::{CliError, RunOutput};

pub const FILE: &str = "pcf.csv";

/// Parses `a`, `bi`, `a+bi`, `a-bi` (also with `j`), ignoring spaces.
pub fn parse_complex(text: &str) -> Result<C64, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("`{text}` is not a complex number");
    if s.is_empty() {
        return Err(bad());
    }
    let Some(body) = s.strip_suffix('i').or_else(|| s.strip_suffix('j')) else {
        return s.parse::<f64>().map(|re| C64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("", body),
    };
    let re = if re.is_empty() { 0.0 } else { re.parse::<f64>().map_err(|_| bad())? };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        t => t.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(C64::new(re, im))
}

pub fn run(nu: f64, points: &[String]) -> Result<RunOutput, CliError> {
    let zs = points.iter().map(|p| parse_complex(p)).collect::<Result<Vec<_>, _>>().map_err(CliError::Usage)?;
    let mut table = Table::new(&["re_z", "im_z", "re_d", "im_d", "weber_residual"]);
    let mut worst = 0.0f64;
    for &z in &zs {
        let d = pcf_d(nu, z)?;
        let r = weber_residual(nu, z)?;
        worst = worst.max(r);
        table.row(&[num(z.re), num(z.im), num(d.value.re), num(d.value.im), num(r)]);
    }
    let text = table.into_string();
    print!("{text}");
    Ok(RunOutput {
        artifacts: vec![Artifact::new(FILE, text)],
        checks: Vec::new(),
        summary: json!({ "points": zs.len(), "max_weber_residual": worst }),
        config_echo: json!({ "nu": nu, "z": points }),
        pass: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_forms() {
        let cases = [
            ("1.5", C64::new(1.5, 0.0)),
            ("-2i", C64::new(0.0, -2.0)),
            ("i", C64::new(0.0, 1.0)),
            ("-i", C64::new(0.0, -1.0)),
            ("1+0.5i", C64::new(1.0, 0.5)),
            ("1 - 0.5j", C64::new(1.0, -0.5)),
            ("-1e-3+2e+1i", C64::new(-1e-3, 20.0)),
            ("3-i", C64::new(3.0, -1.0)),
        ];
        for (s, z) in cases {
            assert_eq!(parse_complex(s).unwrap(), z, "{s}");
        }
        for s in ["", "x", "1+", "1+2", "i2", "1++2i"] {
            assert!(parse_complex(s).is_err(), "{s}");
        }
    }
}
