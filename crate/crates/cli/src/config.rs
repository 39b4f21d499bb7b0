//! Flat key=value run configuration with `[section]` headers.
//!
//! Sections are organizational only; key names are global and unique. Every
//! parameter has a default, unknown keys are rejected with their line number,
//! and a `schema=1` key is required so the format can evolve.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    CheckCoeffs,
    Constants,
    Solve,
    Sweep,
    Rays,
    MorawetzCheck,
    MollifyStudy,
    Infsup,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckCoeffs => "check-coeffs",
            Command::Constants => "constants",
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Rays => "rays",
            Command::MorawetzCheck => "morawetz-check",
            Command::MollifyStudy => "mollify-study",
            Command::Infsup => "infsup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    None,
    Square,
    RegularPolygon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Constant,
    Radial,
    Transmission,
    Annuli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    GaussianBump,
    Ramp,
    SmoothWell,
    InverseSquare,
    ExpCut,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Assert,
    ReportOnly,
}

/// Fully resolved run configuration; every field has a default.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: String,

    // domain
    pub outer_shape: ShapeKind,
    pub outer_half_width: f64,
    pub outer_radius: f64,
    pub outer_vertices: usize,
    pub obstacle_shape: ShapeKind,
    pub obstacle_half_width: f64,
    pub obstacle_radius: f64,
    pub obstacle_vertices: usize,

    // coefficients
    pub family: FamilyKind,
    pub a_value: f64,
    pub n_value: f64,
    pub a_i: f64,
    pub n_i: f64,
    pub interface_shape: ShapeKind,
    pub interface_half_width: f64,
    pub interface_radius: f64,
    pub profile: ProfileKind,
    pub profile_target_n: bool,
    pub profile_amp: f64,
    pub profile_center: f64,
    pub profile_width: f64,
    pub profile_v0: f64,
    pub profile_r0: f64,
    pub profile_depth: f64,
    pub profile_rate: f64,
    pub profile_blend: f64,
    pub profile_r_inner: f64,
    pub profile_r_outer: f64,
    pub profile_csv: String,
    pub annuli_radii: Vec<f64>,
    pub annuli_n: Vec<f64>,
    pub annuli_a: Vec<f64>,

    // single-run and sweep physics
    pub k: f64,
    pub theta: f64,
    pub h0: f64,
    pub ppw: f64,
    pub k_list: Vec<f64>,
    pub k_cap: f64,
    pub safety_factor: f64,
    pub sweep_mode: SweepMode,

    // rays
    pub ray_dimension: usize,
    pub ray_radius: f64,
    pub ray_ensemble: usize,
    pub ray_s_budget: f64,
    pub ray_ds: f64,
    pub ray_record_stride: usize,
    pub ray_equilibrium_launch: bool,

    // morawetz
    pub morawetz_dimension: usize,
    pub morawetz_samples: usize,
    pub morawetz_tolerance: f64,
    pub morawetz_fd_h: f64,

    // mollify
    pub mollify_deltas: Vec<f64>,
    pub mollify_r_max: f64,

    // infsup
    pub infsup_max_iterations: usize,

    // explicit constants inputs
    pub dim: usize,
    pub radius_r: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    pub a_min: f64,
    pub n_min: f64,
    pub a_max: f64,
    pub n_max: f64,
    pub n_max_gamma_i: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub l_i: f64,
    pub l_d: f64,
    pub a_ball: f64,
    pub a_i_ball: f64,
    pub a_d_ball: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Constants,
            seed: 1,
            workers: 0,
            out_dir: "out".into(),
            outer_shape: ShapeKind::Square,
            outer_half_width: 1.5,
            outer_radius: 1.5,
            outer_vertices: 256,
            obstacle_shape: ShapeKind::None,
            obstacle_half_width: 0.5,
            obstacle_radius: 0.5,
            obstacle_vertices: 64,
            family: FamilyKind::Constant,
            a_value: 1.0,
            n_value: 1.0,
            a_i: 2.0,
            n_i: 0.5,
            interface_shape: ShapeKind::Square,
            interface_half_width: 0.5,
            interface_radius: 0.5,
            profile: ProfileKind::GaussianBump,
            profile_target_n: true,
            profile_amp: 2.0,
            profile_center: 3.0,
            profile_width: 1.0,
            profile_v0: 2.0,
            profile_r0: 1.0,
            profile_depth: 0.5,
            profile_rate: 2.0,
            profile_blend: 0.5,
            profile_r_inner: 0.5,
            profile_r_outer: 2.0,
            profile_csv: String::new(),
            annuli_radii: vec![0.4, 0.7, 1.0],
            annuli_n: vec![0.3, 0.6, 0.9],
            annuli_a: vec![1.0, 1.0, 1.0],
            k: 1.0,
            theta: 1.0,
            h0: 0.1,
            ppw: 20.0,
            k_list: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            k_cap: 32.0,
            safety_factor: 0.10,
            sweep_mode: SweepMode::Assert,
            ray_dimension: 2,
            ray_radius: 2.0,
            ray_ensemble: 100,
            ray_s_budget: 0.0,
            ray_ds: 0.01,
            ray_record_stride: 100,
            ray_equilibrium_launch: true,
            morawetz_dimension: 2,
            morawetz_samples: 100,
            morawetz_tolerance: 1e-10,
            morawetz_fd_h: 0.01,
            mollify_deltas: vec![0.2, 0.1, 0.05],
            mollify_r_max: 2.0,
            infsup_max_iterations: 500,
            dim: 2,
            radius_r: 1.0,
            mu1: 1.0,
            mu2: 1.0,
            mu3: 1.0,
            mu4: 1.0,
            a_min: 1.0,
            n_min: 1.0,
            a_max: 1.0,
            n_max: 1.0,
            n_max_gamma_i: 1.0,
            theta_min: 1.0,
            theta_max: 1.0,
            l_i: 1.0,
            l_d: 0.5,
            a_ball: 1.0,
            a_i_ball: 1.0,
            a_d_ball: 0.5,
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .map_err(|_| err(line, format!("key `{key}`: `{value}` is not a number")))
}

fn parse_positive(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    let v = parse_f64(line, key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(err(line, format!("key `{key}` must be a positive number, got {value}")))
    }
}

fn parse_nonnegative(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    let v = parse_f64(line, key, value)?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(err(line, format!("key `{key}` must be nonnegative, got {value}")))
    }
}

fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize, ConfigError> {
    value
        .parse::<usize>()
        .map_err(|_| err(line, format!("key `{key}`: `{value}` is not a nonnegative integer")))
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(parse_f64(line, key, part)?);
    }
    if out.is_empty() {
        return Err(err(line, format!("key `{key}`: empty list")));
    }
    Ok(out)
}

fn parse_positive_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    let list = parse_list(line, key, value)?;
    if list.iter().any(|&v| v <= 0.0) {
        return Err(err(line, format!("key `{key}`: every entry must be positive")));
    }
    Ok(list)
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "on" | "yes" | "auto" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(err(line, format!("key `{key}`: expected true/false, got `{value}`"))),
    }
}

/// Parses the config text. Key semantics are positional-free; `[section]`
/// lines are accepted for readability and `#` starts a comment.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut schema_seen = false;
    let mut command_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(err(lineno, "unterminated section header"));
            }
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(err(lineno, format!("expected key=value, got `{line}`")));
        };
        let key = line[..eq].trim();
        let value = line[eq + 1..].trim();
        if key.is_empty() {
            return Err(err(lineno, "empty key"));
        }
        if let Some(first) = seen.get(key) {
            return Err(err(lineno, format!("duplicate key `{key}` (first set on line {first})")));
        }
        match key {
            "schema" => {
                if value != "1" {
                    return Err(err(lineno, format!("unsupported schema `{value}` (expected 1)")));
                }
                schema_seen = true;
            }
            "command" => {
                cfg.command = match value {
                    "check-coeffs" => Command::CheckCoeffs,
                    "constants" => Command::Constants,
                    "solve" => Command::Solve,
                    "sweep" => Command::Sweep,
                    "rays" => Command::Rays,
                    "morawetz-check" => Command::MorawetzCheck,
                    "mollify-study" => Command::MollifyStudy,
                    "infsup" => Command::Infsup,
                    _ => return Err(err(lineno, format!("unknown command `{value}`"))),
                };
                command_seen = true;
            }
            "seed" => {
                cfg.seed = value
                    .parse::<u64>()
                    .map_err(|_| err(lineno, format!("key `seed`: `{value}` is not an integer")))?;
            }
            "workers" => cfg.workers = parse_usize(lineno, key, value)?,
            "out" => cfg.out_dir = value.to_string(),

            "outer" => cfg.outer_shape = parse_shape(lineno, key, value, false)?,
            "outer_half_width" => cfg.outer_half_width = parse_positive(lineno, key, value)?,
            "outer_radius" => cfg.outer_radius = parse_positive(lineno, key, value)?,
            "outer_vertices" => cfg.outer_vertices = parse_usize(lineno, key, value)?,
            "obstacle" => cfg.obstacle_shape = parse_shape(lineno, key, value, true)?,
            "obstacle_half_width" => cfg.obstacle_half_width = parse_positive(lineno, key, value)?,
            "obstacle_radius" => cfg.obstacle_radius = parse_positive(lineno, key, value)?,
            "obstacle_vertices" => cfg.obstacle_vertices = parse_usize(lineno, key, value)?,

            "family" => {
                cfg.family = match value {
                    "constant" => FamilyKind::Constant,
                    "radial" => FamilyKind::Radial,
                    "transmission" => FamilyKind::Transmission,
                    "annuli" => FamilyKind::Annuli,
                    _ => return Err(err(lineno, format!("unknown coefficient family `{value}`"))),
                }
            }
            "a_value" => cfg.a_value = parse_positive(lineno, key, value)?,
            "n_value" => cfg.n_value = parse_positive(lineno, key, value)?,
            "a_i" => cfg.a_i = parse_positive(lineno, key, value)?,
            "n_i" => cfg.n_i = parse_positive(lineno, key, value)?,
            "interface" => {
                cfg.interface_shape = parse_shape(lineno, key, value, false)?;
            }
            "interface_half_width" => {
                cfg.interface_half_width = parse_positive(lineno, key, value)?
            }
            "interface_radius" => cfg.interface_radius = parse_positive(lineno, key, value)?,
            "profile" => {
                cfg.profile = match value {
                    "gaussian_bump" => ProfileKind::GaussianBump,
                    "ramp" => ProfileKind::Ramp,
                    "smooth_well" => ProfileKind::SmoothWell,
                    "inverse_square" => ProfileKind::InverseSquare,
                    "exp_cut" => ProfileKind::ExpCut,
                    "table" => ProfileKind::Table,
                    _ => return Err(err(lineno, format!("unknown radial profile `{value}`"))),
                }
            }
            "profile_target" => {
                cfg.profile_target_n = match value {
                    "n" => true,
                    "a" => false,
                    _ => return Err(err(lineno, "profile_target must be `n` or `a`".to_string())),
                }
            }
            "profile_amp" => cfg.profile_amp = parse_f64(lineno, key, value)?,
            "profile_center" => cfg.profile_center = parse_positive(lineno, key, value)?,
            "profile_width" => cfg.profile_width = parse_positive(lineno, key, value)?,
            "profile_v0" => cfg.profile_v0 = parse_positive(lineno, key, value)?,
            "profile_r0" => cfg.profile_r0 = parse_positive(lineno, key, value)?,
            "profile_depth" => cfg.profile_depth = parse_f64(lineno, key, value)?,
            "profile_rate" => cfg.profile_rate = parse_f64(lineno, key, value)?,
            "profile_blend" => cfg.profile_blend = parse_positive(lineno, key, value)?,
            "profile_r_inner" => cfg.profile_r_inner = parse_positive(lineno, key, value)?,
            "profile_r_outer" => cfg.profile_r_outer = parse_positive(lineno, key, value)?,
            "profile_csv" => cfg.profile_csv = value.to_string(),
            "annuli_radii" => cfg.annuli_radii = parse_positive_list(lineno, key, value)?,
            "annuli_n" => cfg.annuli_n = parse_positive_list(lineno, key, value)?,
            "annuli_a" => cfg.annuli_a = parse_positive_list(lineno, key, value)?,

            "k" => cfg.k = parse_positive(lineno, key, value)?,
            "theta" => cfg.theta = parse_positive(lineno, key, value)?,
            "h0" => cfg.h0 = parse_positive(lineno, key, value)?,
            "ppw" => cfg.ppw = parse_positive(lineno, key, value)?,
            "k_list" => cfg.k_list = parse_positive_list(lineno, key, value)?,
            "k_cap" => cfg.k_cap = parse_positive(lineno, key, value)?,
            "safety_factor" => cfg.safety_factor = parse_nonnegative(lineno, key, value)?,
            "mode" => {
                cfg.sweep_mode = match value {
                    "assert" => SweepMode::Assert,
                    "report-only" => SweepMode::ReportOnly,
                    _ => return Err(err(lineno, format!("unknown sweep mode `{value}`"))),
                }
            }

            "dimension" => {
                let d = parse_usize(lineno, key, value)?;
                if d != 2 && d != 3 {
                    return Err(err(lineno, "dimension must be 2 or 3".to_string()));
                }
                cfg.ray_dimension = d;
                cfg.morawetz_dimension = d;
            }
            "radius" => cfg.ray_radius = parse_positive(lineno, key, value)?,
            "ensemble" => cfg.ray_ensemble = parse_usize(lineno, key, value)?,
            "s_budget" => cfg.ray_s_budget = parse_nonnegative(lineno, key, value)?,
            "ds" => cfg.ray_ds = parse_positive(lineno, key, value)?,
            "record_stride" => cfg.ray_record_stride = parse_usize(lineno, key, value)?.max(1),
            "equilibrium_launch" => cfg.ray_equilibrium_launch = parse_bool(lineno, key, value)?,

            "samples" => cfg.morawetz_samples = parse_usize(lineno, key, value)?,
            "tolerance" => cfg.morawetz_tolerance = parse_positive(lineno, key, value)?,
            "fd_h" => cfg.morawetz_fd_h = parse_positive(lineno, key, value)?,

            "deltas" => cfg.mollify_deltas = parse_positive_list(lineno, key, value)?,
            "r_max" => cfg.mollify_r_max = parse_positive(lineno, key, value)?,

            "max_iterations" => cfg.infsup_max_iterations = parse_usize(lineno, key, value)?,

            "d" => {
                let d = parse_usize(lineno, key, value)?;
                if d != 2 && d != 3 {
                    return Err(err(lineno, "d must be 2 or 3".to_string()));
                }
                cfg.dim = d;
            }
            "R" => cfg.radius_r = parse_positive(lineno, key, value)?,
            "mu1" => cfg.mu1 = parse_positive(lineno, key, value)?,
            "mu2" => cfg.mu2 = parse_positive(lineno, key, value)?,
            "mu3" => cfg.mu3 = parse_positive(lineno, key, value)?,
            "mu4" => cfg.mu4 = parse_positive(lineno, key, value)?,
            "A_min" => cfg.a_min = parse_positive(lineno, key, value)?,
            "n_min" => cfg.n_min = parse_positive(lineno, key, value)?,
            "A_max" => cfg.a_max = parse_positive(lineno, key, value)?,
            "n_max" => cfg.n_max = parse_positive(lineno, key, value)?,
            "n_max_gamma_i" => cfg.n_max_gamma_i = parse_positive(lineno, key, value)?,
            "theta_min" => cfg.theta_min = parse_positive(lineno, key, value)?,
            "theta_max" => cfg.theta_max = parse_positive(lineno, key, value)?,
            "L_I" => cfg.l_i = parse_positive(lineno, key, value)?,
            "L_D" => cfg.l_d = parse_positive(lineno, key, value)?,
            "a" => cfg.a_ball = parse_positive(lineno, key, value)?,
            "a_I" => cfg.a_i_ball = parse_positive(lineno, key, value)?,
            "a_D" => cfg.a_d_ball = parse_positive(lineno, key, value)?,

            _ => return Err(err(lineno, format!("unknown key `{key}`"))),
        }
        seen.insert(key.to_string(), lineno);
    }
    if !schema_seen {
        return Err(err(0, "missing required key `schema` (expected schema=1)"));
    }
    if !command_seen {
        return Err(err(0, "missing required key `command`"));
    }
    Ok(cfg)
}

fn parse_shape(
    line: usize,
    key: &str,
    value: &str,
    none_allowed: bool,
) -> Result<ShapeKind, ConfigError> {
    match value {
        "square" => Ok(ShapeKind::Square),
        "regular_polygon" | "disk" => Ok(ShapeKind::RegularPolygon),
        "none" if none_allowed => Ok(ShapeKind::None),
        _ => Err(err(line, format!("key `{key}`: unknown shape `{value}`"))),
    }
}
