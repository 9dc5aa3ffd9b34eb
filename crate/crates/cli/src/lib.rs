//! Command-line surface of the Andreev level toolkit.
//!
//! Every command computes its artifacts in memory first and only then writes
//! them, together with `manifest.json`, into the output directory.

pub mod commands;
pub mod output;
pub mod potential_spec;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use andreev_core::{load_config, Error, PotentialProfile, SimulationConfig};
use clap::{Parser, Subcommand};
use serde_json::Value;

use crate::output::{Artifact, CheckSummary, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable that takes precedence over `--out`.
pub const OUT_ENV: &str = "ANDREEV_BS_OUT";
pub const DEFAULT_OUT: &str = "andreev-bs-out";

#[derive(Debug, Parser)]
#[command(name = "andreev-bs", version, about = "Bohr-Sommerfeld Andreev levels, oracles and invariant checks")]
pub struct Cli {
    /// JSON configuration file; the default junction is used when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overridden by ANDREEV_BS_OUT).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for independent tasks.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Comma-separated list of h values for `spectrum`.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    pub h_sweep: Vec<f64>,
    /// Restrict `verify` to the named check groups.
    #[arg(long, global = true, value_delimiter = ',', value_name = "NAME")]
    pub only: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// BS levels, oracle levels, their comparison and the E(φ) dispersion.
    Spectrum {
        /// Phase samples on [−π, π] for the dispersion plot.
        #[arg(long, default_value_t = 73)]
        phi_points: usize,
    },
    /// Scattering matrix on a real k grid and resonances in a k rectangle.
    Scatter {
        /// free | double:V,B,W | square:L,R,V;... | smooth:C,W,V;... | table:X,V;... | @file.json
        #[arg(long, allow_hyphen_values = true)]
        potential: String,
        #[arg(long, default_value_t = 0.2)]
        k_min: f64,
        #[arg(long, default_value_t = 3.0)]
        k_max: f64,
        #[arg(long, default_value_t = 57)]
        k_points: usize,
        /// Resonance rectangle; the real range defaults to [k_min, k_max].
        #[arg(long, allow_hyphen_values = true)]
        re_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        re_max: Option<f64>,
        #[arg(long, default_value_t = -0.05, allow_hyphen_values = true)]
        im_min: f64,
        #[arg(long, default_value_t = 0.01, allow_hyphen_values = true)]
        im_max: f64,
    },
    /// Invariant suite; exits with 1 when a check fails.
    Verify,
    /// D_ν(z) with its Weber residual.
    Pcf {
        #[arg(long, allow_hyphen_values = true)]
        nu: f64,
        /// Comma-separated complex points such as `1.5`, `-2i`, `1+0.5i`.
        #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
        z: Vec<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum { .. } => "spectrum",
            Command::Scatter { .. } => "scatter",
            Command::Verify => "verify",
            Command::Pcf { .. } => "pcf",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => core_exit_code(e),
            CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Configuration and domain problems map to 2, solver failures to 3.
pub fn core_exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::MissingKeys(_)
        | Error::UnknownKey(_)
        | Error::Constraint { .. }
        | Error::Domain(_)
        | Error::Profile(_)
        | Error::Resolution { .. } => EXIT_USAGE,
        Error::Pole(_) | Error::Stiffness { .. } | Error::IllConditioned { .. } | Error::Numerical(_) | Error::Consistency(_) => EXIT_NUMERICAL,
    }
}

/// Everything a command hands back for writing.
#[derive(Debug)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<CheckSummary>,
    pub summary: Value,
    pub config_echo: Value,
    /// False when a verification check failed.
    pub pass: bool,
}

pub fn load_profile(path: Option<&Path>) -> Result<(PotentialProfile, SimulationConfig), CliError> {
    match path {
        None => {
            let p = PotentialProfile::default_junction();
            let c = SimulationConfig::for_profile(&p);
            Ok((p, c))
        }
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            Ok(load_config(&text)?)
        }
    }
}

/// `ANDREEV_BS_OUT` wins over `--out`, which wins over the default.
pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    }
}

fn execute(cli: &Cli) -> Result<RunOutput, CliError> {
    if let Command::Pcf { nu, z } = &cli.command {
        return commands::pcf::run(*nu, z);
    }
    let (profile, config) = load_profile(cli.config.as_deref())?;
    match &cli.command {
        Command::Spectrum { phi_points } => commands::spectrum::run(&profile, &config, &cli.h_sweep, *phi_points),
        Command::Scatter {
            potential,
            k_min,
            k_max,
            k_points,
            re_min,
            re_max,
            im_min,
            im_max,
        } => {
            let args = commands::scatter::ScatterArgs {
                potential: potential.clone(),
                k_min: *k_min,
                k_max: *k_max,
                k_points: *k_points,
                re: (re_min.unwrap_or(*k_min), re_max.unwrap_or(*k_max)),
                im: (*im_min, *im_max),
            };
            commands::scatter::run(&profile, &config, &args)
        }
        Command::Verify => commands::verify::run(&profile, &config, &cli.only),
        Command::Pcf { .. } => unreachable!(),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let start = Instant::now();

    let jobs = cli.jobs.unwrap_or(0);
    if cli.jobs == Some(0) {
        eprintln!("error: --jobs must be at least 1");
        return EXIT_USAGE;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let result = pool.install(|| execute(&cli));
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };

    let out = output_dir(cli.out.as_deref());
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        config: output.config_echo,
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: start.elapsed().as_secs_f64(),
        checks: output.checks,
        summary: output.summary,
        artifacts: Vec::new(),
    };
    match output::write_run(&out, &output.artifacts, manifest) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", out.display());
            return EXIT_NUMERICAL;
        }
    }
    if output.pass {
        EXIT_OK
    } else {
        eprintln!("verification failed; see {}", out.join(commands::verify::REPORT).display());
        EXIT_VERIFY
    }
}
