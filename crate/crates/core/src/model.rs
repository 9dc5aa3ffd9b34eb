//! SNS junction profiles and run configuration.
//!
//! The pair potential is a symmetric double tanh step
//! `Δ(x) = (Δ₀/2)·[tanh((x−L)/w) + tanh((−x−L)/w) + 2]`, vanishing inside the
//! normal lead and saturating at `Δ₀` in both banks. The superconducting phase
//! is `sgn(x)·φ`, with the jump placed at `x = 0` where `Δ` is negligible.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Shape of the pair potential. `TanhStep` is the physical model; the others
/// exist for closed-form checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapShape {
    TanhStep,
    /// `Δ(x) = min(slope·|x|, Δ₀)`.
    Linear { slope: f64 },
    /// `Δ ≡ 0`: the operator decouples into two scalar problems.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChemicalPotential {
    Constant,
    /// `μ(x) = μ_N − (μ_N − μ_S)·Δ(x)/Δ₀` with `μ_N = mu0`.
    Graded { mu_bank: f64 },
}

/// Sign convention for the `hφ` term of the quantization rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    /// `A(E) − hφ + hπ = 2πnh` for both parities.
    #[default]
    Literal,
    /// `A(E) − ρhφ + hπ = 2πnh` with `ρ = (−1)^n`.
    RhoDependent,
}

/// The junction model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialProfile {
    pub delta0: f64,
    pub mu0: f64,
    pub half_length: f64,
    pub junction_width: f64,
    pub phi: f64,
    pub h: f64,
    pub gap_shape: GapShape,
    pub chemical: ChemicalPotential,
    /// Adds `asymmetry·x` to `Δ`. Only used to break parity in negative controls.
    pub asymmetry: f64,
}

/// `(Δ(x), μ(x), phase(x))` at one abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub delta: f64,
    pub mu: f64,
    pub phase: f64,
}

impl PotentialProfile {
    /// Tanh-step profile with constant chemical potential. Validates all invariants.
    pub fn new(delta0: f64, mu0: f64, half_length: f64, junction_width: f64, phi: f64, h: f64) -> Result<Self> {
        let p = Self {
            delta0,
            mu0,
            half_length,
            junction_width,
            phi,
            h,
            gap_shape: GapShape::TanhStep,
            chemical: ChemicalPotential::Constant,
            asymmetry: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Δ₀=1, μ₀=2, L=2, w=0.25, φ=π/2, h=0.05.
    pub fn default_junction() -> Self {
        Self::new(1.0, 2.0, 2.0, 0.25, std::f64::consts::FRAC_PI_2, 0.05).expect("default profile is valid")
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_gap_shape(mut self, shape: GapShape) -> Self {
        self.gap_shape = shape;
        self
    }

    pub fn with_chemical(mut self, chemical: ChemicalPotential) -> Self {
        self.chemical = chemical;
        self
    }

    pub fn with_asymmetry(mut self, asymmetry: f64) -> Self {
        self.asymmetry = asymmetry;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Constraint {
                key: key.to_string(),
                message,
            })
        };
        if !(self.delta0 > 0.0) || !self.delta0.is_finite() {
            return bad("delta0", "delta0 must be positive".into());
        }
        if !(self.mu0 > self.delta0) {
            return bad("mu0", "mu0 must exceed delta0".into());
        }
        if !(self.half_length > 0.0) {
            return bad("L", "L must be positive".into());
        }
        if !(self.junction_width > 0.0 && self.junction_width < self.half_length) {
            return bad("w", "w must satisfy 0 < w < L".into());
        }
        if !(self.phi.abs() <= std::f64::consts::PI + 1e-12) {
            return bad("phi", "phi must lie in [-pi, pi]".into());
        }
        if !(self.h > 0.0) {
            return bad("h", "h must be positive".into());
        }
        if let ChemicalPotential::Graded { mu_bank } = self.chemical {
            if !(mu_bank > 0.0) {
                return bad("mu_bank", "mu_bank must be positive".into());
            }
        }
        if self.gap_shape == GapShape::TanhStep && self.delta(0.0) >= 1e-6 * self.delta0 {
            return bad(
                "w",
                format!("junction too wide: Delta(0) = {:.3e} is not below 1e-6*delta0", self.delta(0.0)),
            );
        }
        Ok(())
    }

    pub fn delta(&self, x: f64) -> f64 {
        let base = match self.gap_shape {
            GapShape::TanhStep => {
                let (l, w) = (self.half_length, self.junction_width);
                0.5 * self.delta0 * (((x - l) / w).tanh() + ((-x - l) / w).tanh() + 2.0)
            }
            GapShape::Linear { slope } => (slope * x.abs()).min(self.delta0),
            GapShape::Zero => 0.0,
        };
        base + self.asymmetry * x
    }

    pub fn delta_prime(&self, x: f64) -> f64 {
        let base = match self.gap_shape {
            GapShape::TanhStep => {
                let (l, w) = (self.half_length, self.junction_width);
                let sech2 = |u: f64| {
                    let c = u.cosh();
                    1.0 / (c * c)
                };
                0.5 * self.delta0 / w * (sech2((x - l) / w) - sech2((x + l) / w))
            }
            GapShape::Linear { slope } => {
                if slope * x.abs() < self.delta0 {
                    slope * x.signum()
                } else {
                    0.0
                }
            }
            GapShape::Zero => 0.0,
        };
        base + self.asymmetry
    }

    /// `Δ(x_ref) − Δ(x)` where `gap = x_ref − x` is supplied exactly by the
    /// caller. Avoids the cancellation of the naive difference near a
    /// branching point.
    pub fn delta_drop(&self, x_ref: f64, x: f64, gap: f64) -> f64 {
        let base = match self.gap_shape {
            GapShape::TanhStep if gap.abs() / self.junction_width < 40.0 => {
                let (l, w) = (self.half_length, self.junction_width);
                let d = gap / w;
                let (ar, ax) = ((x_ref - l) / w, (x - l) / w);
                let (br, bx) = ((x_ref + l) / w, (x + l) / w);
                0.5 * self.delta0 * d.sinh() * (1.0 / (ar.cosh() * ax.cosh()) - 1.0 / (br.cosh() * bx.cosh()))
            }
            GapShape::Linear { slope } if slope * x_ref.abs() <= self.delta0 && slope * x.abs() <= self.delta0 => {
                if x_ref.signum() == x.signum() || x == 0.0 {
                    slope * x_ref.signum() * gap
                } else {
                    slope * (x_ref.abs() - x.abs())
                }
            }
            GapShape::Zero => 0.0,
            _ => (self.delta(x_ref) - self.asymmetry * x_ref) - (self.delta(x) - self.asymmetry * x),
        };
        base + self.asymmetry * gap
    }

    pub fn mu(&self, x: f64) -> f64 {
        match self.chemical {
            ChemicalPotential::Constant => self.mu0,
            ChemicalPotential::Graded { mu_bank } => self.mu0 - (self.mu0 - mu_bank) * self.delta(x) / self.delta0,
        }
    }

    /// `sgn(x)·φ`, zero at the origin.
    pub fn phase(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.phi
        } else if x < 0.0 {
            -self.phi
        } else {
            0.0
        }
    }

    pub fn is_even(&self) -> bool {
        self.asymmetry == 0.0
    }
}

pub fn evaluate_profile(profile: &PotentialProfile, x: f64) -> ProfileSample {
    ProfileSample {
        delta: profile.delta(x),
        mu: profile.mu(x),
        phase: profile.phase(x),
    }
}

/// Numerical settings shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub x_max: f64,
    pub grid_points: usize,
    pub root_tol: f64,
    pub quad_points: usize,
    pub phase_convention: PhaseConvention,
}

impl SimulationConfig {
    pub const DEFAULT_GRID_POINTS: usize = 8001;
    pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
    pub const DEFAULT_QUAD_POINTS: usize = 64;

    /// Defaults for a profile: `x_max = L + 16w`.
    pub fn for_profile(profile: &PotentialProfile) -> Self {
        Self {
            x_max: profile.half_length + 16.0 * profile.junction_width,
            grid_points: Self::DEFAULT_GRID_POINTS,
            root_tol: Self::DEFAULT_ROOT_TOL,
            quad_points: Self::DEFAULT_QUAD_POINTS,
            phase_convention: PhaseConvention::Literal,
        }
    }

    pub fn with_grid_points(mut self, n: usize) -> Self {
        self.grid_points = n;
        self
    }

    pub fn with_x_max(mut self, x_max: f64) -> Self {
        self.x_max = x_max;
        self
    }

    /// Grid step of the uniform grid on `[−x_max, x_max]`.
    pub fn dx(&self) -> f64 {
        2.0 * self.x_max / (self.grid_points - 1) as f64
    }

    /// Odd point count giving a step no larger than `dx`.
    pub fn points_for_step(x_max: f64, dx: f64) -> usize {
        let intervals = (2.0 * x_max / dx).ceil() as usize;
        let intervals = intervals + intervals % 2;
        intervals + 1
    }

    pub fn validate(&self, profile: &PotentialProfile) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Constraint {
                key: key.to_string(),
                message,
            })
        };
        let min_x = profile.half_length + 5.0 * profile.junction_width;
        if !(self.x_max > min_x) {
            return bad("x_max", format!("x_max must exceed L + 5w = {min_x}"));
        }
        if profile.gap_shape == GapShape::TanhStep && !(profile.delta(self.x_max) > 0.99 * profile.delta0) {
            return bad("x_max", "Delta(x_max) must exceed 0.99*delta0".into());
        }
        if self.grid_points < 1001 {
            return bad("grid_points", "grid_points must be at least 1001".into());
        }
        if self.grid_points.is_multiple_of(2) {
            return bad("grid_points", "grid_points must be odd so that x = 0 is a node".into());
        }
        if !(self.root_tol > 0.0) {
            return bad("root_tol", "root_tol must be positive".into());
        }
        if self.quad_points < 8 {
            return bad("quad_points", "quad_points must be at least 8".into());
        }
        Ok(())
    }
}

const REQUIRED_KEYS: [&str; 6] = ["delta0", "mu0", "L", "w", "phi", "h"];
const OPTIONAL_KEYS: [&str; 7] = [
    "x_max",
    "grid_points",
    "root_tol",
    "quad_points",
    "mu_bank",
    "phase_convention",
    "asymmetry",
];

/// Parses a JSON configuration document and validates both the profile and
/// the numerical settings.
pub fn load_config(text: &str) -> Result<(PotentialProfile, SimulationConfig)> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let map = match value {
        Value::Object(map) => map,
        _ => {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: "expected a JSON object".into(),
            })
        }
    };
    for key in map.keys() {
        if !REQUIRED_KEYS.contains(&key.as_str()) && !OPTIONAL_KEYS.contains(&key.as_str()) {
            return Err(Error::UnknownKey(key.clone()));
        }
    }
    let missing: Vec<String> = REQUIRED_KEYS
        .iter()
        .filter(|k| !map.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing));
    }

    let mut profile = PotentialProfile {
        delta0: number(&map, "delta0")?,
        mu0: number(&map, "mu0")?,
        half_length: number(&map, "L")?,
        junction_width: number(&map, "w")?,
        phi: number(&map, "phi")?,
        h: number(&map, "h")?,
        gap_shape: GapShape::TanhStep,
        chemical: ChemicalPotential::Constant,
        asymmetry: 0.0,
    };
    if map.contains_key("mu_bank") {
        profile.chemical = ChemicalPotential::Graded {
            mu_bank: number(&map, "mu_bank")?,
        };
    }
    profile.validate()?;
    if map.contains_key("asymmetry") {
        profile.asymmetry = number(&map, "asymmetry")?;
    }

    let mut config = SimulationConfig::for_profile(&profile);
    if map.contains_key("x_max") {
        config.x_max = number(&map, "x_max")?;
    }
    if map.contains_key("grid_points") {
        config.grid_points = integer(&map, "grid_points")?;
    }
    if map.contains_key("root_tol") {
        config.root_tol = number(&map, "root_tol")?;
    }
    if map.contains_key("quad_points") {
        config.quad_points = integer(&map, "quad_points")?;
    }
    if let Some(v) = map.get("phase_convention") {
        config.phase_convention = match v.as_str() {
            Some("literal") => PhaseConvention::Literal,
            Some("rho_dependent") => PhaseConvention::RhoDependent,
            _ => {
                return Err(Error::Constraint {
                    key: "phase_convention".into(),
                    message: "expected \"literal\" or \"rho_dependent\"".into(),
                })
            }
        };
    }
    config.validate(&profile)?;
    Ok((profile, config))
}

/// Serializes a profile and settings back into the flat JSON schema.
pub fn config_to_json(profile: &PotentialProfile, config: &SimulationConfig) -> Value {
    let mut map = Map::new();
    map.insert("delta0".into(), profile.delta0.into());
    map.insert("mu0".into(), profile.mu0.into());
    map.insert("L".into(), profile.half_length.into());
    map.insert("w".into(), profile.junction_width.into());
    map.insert("phi".into(), profile.phi.into());
    map.insert("h".into(), profile.h.into());
    map.insert("x_max".into(), config.x_max.into());
    map.insert("grid_points".into(), (config.grid_points as u64).into());
    map.insert("root_tol".into(), config.root_tol.into());
    map.insert("quad_points".into(), (config.quad_points as u64).into());
    if let ChemicalPotential::Graded { mu_bank } = profile.chemical {
        map.insert("mu_bank".into(), mu_bank.into());
    }
    if config.phase_convention == PhaseConvention::RhoDependent {
        map.insert("phase_convention".into(), "rho_dependent".into());
    }
    if profile.asymmetry != 0.0 {
        map.insert("asymmetry".into(), profile.asymmetry.into());
    }
    Value::Object(map)
}

fn number(map: &Map<String, Value>, key: &str) -> Result<f64> {
    map.get(key).and_then(Value::as_f64).ok_or_else(|| Error::Constraint {
        key: key.to_string(),
        message: "expected a number".into(),
    })
}

fn integer(map: &Map<String, Value>, key: &str) -> Result<usize> {
    map.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| Error::Constraint {
            key: key.to_string(),
            message: "expected a non-negative integer".into(),
        })
}
