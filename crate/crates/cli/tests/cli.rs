use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_andreev-bs"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ANDREEV_BS_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn csv(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.ends_with('\n') && !text.contains('\r'));
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_manifest_complete(dir: &Path, command: &str) -> Value {
    let m = json(&dir.join("manifest.json"));
    assert_eq!(m["command"], command);
    assert!(m["version"].is_string());
    assert!(m["duration_seconds"].as_f64().unwrap() >= 0.0);
    assert!(m["config"].is_object());
    let artifacts = m["artifacts"].as_array().unwrap();
    assert!(!artifacts.is_empty());
    for a in artifacts {
        let meta = fs::metadata(dir.join(a["name"].as_str().unwrap())).unwrap();
        assert!(meta.len() > 0);
        assert_eq!(meta.len(), a["bytes"].as_u64().unwrap());
    }
    m
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn spectrum_default_run_is_complete_and_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&bin(&["spectrum"], &a)), 0);
    let m = assert_manifest_complete(&a, "spectrum");
    let err = m["summary"]["sweep"][0]["max_abs_err"].as_f64().unwrap();
    assert!(err.is_finite() && err > 0.0);

    let levels = csv(&a.join("levels_bs.csv"));
    assert_eq!(levels[0], ["phi", "n", "rho", "E", "dE_dphi", "h"]);
    assert!(levels.len() > 1);
    let oracle = csv(&a.join("levels_oracle.csv"));
    assert_eq!(&oracle[0][..3], ["E_fd", "E_shoot", "residual"]);
    assert_eq!(oracle.len(), levels.len());
    for row in &oracle[1..] {
        let (fd, shoot): (f64, f64) = (row[0].parse().unwrap(), row[1].parse().unwrap());
        assert!((fd - shoot).abs() < 1e-6, "{fd} vs {shoot}");
    }
    // 17 significant digits in every float field.
    let e = &levels[1][3];
    assert_eq!(e.split('e').next().unwrap().trim_start_matches('-').len(), 18);
    assert!(fs::read_to_string(a.join("dispersion.gp")).unwrap().contains("dispersion.dat"));

    assert_eq!(code(&bin(&["spectrum"], &b)), 0);
    for f in ["levels_bs.csv", "levels_oracle.csv", "comparison.csv", "dispersion.dat"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs between runs");
    }
}

#[test]
fn spectrum_h_sweep_reports_three_rows_per_level() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sweep");
    assert_eq!(code(&bin(&["spectrum", "--h-sweep", "0.05,0.025,0.0125", "--jobs", "2"], &out)), 0);
    let rows = csv(&out.join("comparison.csv"));
    assert_eq!(rows[0], ["level", "h", "n", "E_bs", "E_oracle", "abs_err", "ratio"]);
    let body = &rows[1..];
    assert!(!body.is_empty());
    assert_eq!(body.len() % 3, 0);
    for chunk in body.chunks(3) {
        assert!(chunk.iter().all(|r| r[0] == chunk[0][0]));
        let hs: Vec<f64> = chunk.iter().map(|r| r[1].parse().unwrap()).collect();
        assert_eq!(hs, [0.05, 0.025, 0.0125]);
        assert_eq!(chunk[0][6], "NaN");
        assert!(chunk[1][6].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn missing_config_exits_2_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = bin(&["spectrum", "--config", tmp.path().join("absent.json").to_str().unwrap()], &out);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.json"));
}

#[test]
fn invalid_config_exits_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), r#"{"delta0": 1, "mu0": 2, "L": 2, "w": 0.25, "phi": 0, "h": 0.05, "colour": 3}"#);
    assert_eq!(code(&bin(&["verify", "--config", &cfg], &out)), 2);
    let cfg = write_config(tmp.path(), r#"{"delta0": 1, "mu0": 2, "L": 2"#);
    assert_eq!(code(&bin(&["verify", "--config", &cfg], &out)), 2);
    assert!(!out.exists());
}

#[test]
fn unknown_flags_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&bin(&["spectrum", "--frobnicate"], tmp.path())), 2);
    assert_eq!(code(&bin(&["verify", "--only", "nonsense"], &tmp.path().join("x"))), 2);
    assert_eq!(code(&bin(&["verify", "--jobs", "0"], &tmp.path().join("y"))), 2);
}

#[test]
fn scatter_free_potential_has_header_only_resonances() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("free");
    assert_eq!(code(&bin(&["scatter", "--potential", "free", "--k-points", "5"], &out)), 0);
    let res = csv(&out.join("resonances.csv"));
    assert_eq!(res, vec![["re_k", "im_k", "re_E", "im_E", "physical", "residual"].map(String::from).to_vec()]);
    let s = csv(&out.join("smatrix.csv"));
    assert_eq!(s.len(), 6);
    assert_eq!(s[1][1].parse::<f64>().unwrap(), 1.0);
    assert_manifest_complete(&out, "scatter");
}

#[test]
fn scatter_double_barrier_finds_a_resonance() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("db");
    let args = [
        "scatter", "--potential", "double:20,0.08,2", "--k-min", "1.4", "--k-max", "1.6", "--k-points", "9", "--im-min", "-0.02", "--im-max", "0.005",
    ];
    assert_eq!(code(&bin(&args, &out)), 0);
    let res = csv(&out.join("resonances.csv"));
    assert!(res.len() >= 2);
    for r in &res[1..] {
        let im: f64 = r[1].parse().unwrap();
        assert!(im < 0.0);
        assert_eq!(r[4], "0");
    }
    let s = csv(&out.join("smatrix.csv"));
    for r in &s[1..] {
        for d in &r[9..] {
            assert!(d.parse::<f64>().unwrap() <= 1e-9);
        }
    }
}

#[test]
fn scatter_rejects_malformed_potential() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("bad");
    for spec in ["square:1,0,2", "wall:1", "table:0,1"] {
        let o = bin(&["scatter", "--potential", spec], &out);
        assert_eq!(code(&o), 2, "{spec}");
        assert!(!o.stderr.is_empty());
    }
    assert!(!out.exists());
}

#[test]
fn verify_default_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("v");
    assert_eq!(code(&bin(&["verify"], &out)), 0);
    let r = json(&out.join("verify_report.json"));
    assert_eq!(r["all_pass"], true);
    let groups: Vec<&str> = r["checks"].as_array().unwrap().iter().map(|c| c["group"].as_str().unwrap()).collect();
    for g in ["flux", "symmetry", "weber", "f0", "su11", "supercurrent"] {
        assert!(groups.contains(&g), "{g} missing");
    }
    assert_manifest_complete(&out, "verify");
}

#[test]
fn verify_flags_injected_asymmetry() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("v");
    let cfg = write_config(tmp.path(), r#"{"delta0": 1, "mu0": 2, "L": 2, "w": 0.25, "phi": 1.5707963267948966, "h": 0.05, "asymmetry": 0.01}"#);
    assert_eq!(code(&bin(&["verify", "--config", &cfg, "--only", "symmetry"], &out)), 1);
    let r = json(&out.join("verify_report.json"));
    assert_eq!(r["all_pass"], false);
    let pt = r["checks"].as_array().unwrap().iter().find(|c| c["name"] == "symmetry.pt").unwrap();
    assert_eq!(pt["pass"], false);
    assert!(pt["measured"].as_f64().unwrap() > 1e-3);
}

#[test]
fn verify_only_flux() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("v");
    assert_eq!(code(&bin(&["verify", "--only", "flux"], &out)), 0);
    let r = json(&out.join("verify_report.json"));
    let checks = r["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["group"] == "flux"));
}

#[test]
fn pcf_values_and_rows() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("p");
    let o = bin(&["pcf", "--nu", "0", "--z", "0"], &out);
    assert_eq!(code(&o), 0);
    let rows = csv(&out.join("pcf.csv"));
    assert_eq!(rows[0], ["re_z", "im_z", "re_d", "im_d", "weber_residual"]);
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 1.0);
    assert!(rows[1][4].parse::<f64>().unwrap() <= 1e-12);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), fs::read_to_string(out.join("pcf.csv")).unwrap());

    assert_eq!(code(&bin(&["pcf", "--nu", "1", "--z", "1.3"], &out)), 0);
    let rows = csv(&out.join("pcf.csv"));
    let expected = 1.3 * (-0.4225f64).exp();
    assert!((rows[1][2].parse::<f64>().unwrap() - expected).abs() <= 1e-14);

    assert_eq!(code(&bin(&["pcf", "--nu", "2.5", "--z", "0.5,-1+2i,3i,-2.5-0.5i,4"], &out)), 0);
    assert_eq!(csv(&out.join("pcf.csv")).len(), 6);
    assert_manifest_complete(&out, "pcf");
}

#[test]
fn pcf_domain_violation_exits_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("p");
    assert_eq!(code(&bin(&["pcf", "--nu", "25", "--z", "1"], &out)), 2);
    assert_eq!(code(&bin(&["pcf", "--nu", "1", "--z", "30i"], &out)), 2);
    assert_eq!(code(&bin(&["pcf", "--nu", "1", "--z", "abc"], &out)), 2);
    assert!(!out.exists());
}

#[test]
fn environment_overrides_out_flag() {
    let tmp = TempDir::new().unwrap();
    let env_dir = tmp.path().join("env");
    let flag_dir = tmp.path().join("flag");
    let o = Command::new(env!("CARGO_BIN_EXE_andreev-bs"))
        .args(["pcf", "--nu", "0", "--z", "1", "--out"])
        .arg(&flag_dir)
        .env("ANDREEV_BS_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(env_dir.join("pcf.csv").exists());
    assert!(!flag_dir.exists());
}
