//! Maps a parsed configuration to artifacts on disk and an exit status:
//! 0 when everything asserted passed, 1 when an asserted check failed, 2 for
//! configuration errors and refusals (reported through `RunError`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use helmbound_core::coeff::{CoefficientField, RadialProfile};

use crate::config::{Command, FamilyKind, RunConfig};
use crate::families::{build_domain, build_family, radial_profile_from};
use crate::harness::{self, HarnessError};
use crate::io;

/// Errors that terminate a run before any assertion is evaluated (exit 2).
#[derive(Debug)]
pub enum RunError {
    Family(crate::families::FamilyError),
    Harness(HarnessError),
    Io(std::io::Error),
    MeshIo(io::IoError),
    Invalid(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Family(e) => write!(f, "{e}"),
            RunError::Harness(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "io: {e}"),
            RunError::MeshIo(e) => write!(f, "{e}"),
            RunError::Invalid(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<crate::families::FamilyError> for RunError {
    fn from(e: crate::families::FamilyError) -> Self {
        RunError::Family(e)
    }
}

impl From<HarnessError> for RunError {
    fn from(e: HarnessError) -> Self {
        RunError::Harness(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, RunError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Executes the configured command; returns the process exit code (0 or 1).
/// Refusals and configuration problems surface as `Err` (exit 2).
pub fn run(cfg: &RunConfig, quiet: bool) -> Result<i32, RunError> {
    let out_dir = PathBuf::from(&cfg.out_dir);
    let say = |msg: &str| {
        if !quiet {
            println!("{msg}");
        }
    };
    match cfg.command {
        Command::Constants => {
            let report = harness::constants_report(cfg);
            write_artifact(&out_dir, "constants.txt", &report)?;
            say(&report);
            Ok(0)
        }
        Command::CheckCoeffs => {
            let family = build_family(cfg)?;
            let outcome = harness::coefficient_checks(&family)?;
            write_artifact(&out_dir, "conditions.txt", &outcome.report_text)?;
            say(&outcome.report_text);
            Ok(0)
        }
        Command::Solve => {
            let family = build_family(cfg)?;
            let domain = build_domain(cfg)?;
            let (mesh, solution, norms) = harness::single_solve(cfg, &family, &domain)?;
            io::write_mesh(&prepared(&out_dir)?.join("mesh.txt"), &mesh)
                .map_err(RunError::MeshIo)?;
            write_artifact(
                &out_dir,
                "solution.csv",
                &io::solution_csv(&mesh, &solution.nodal_values),
            )?;
            let mut report = String::new();
            let _ = writeln!(report, "k = {}", cfg.k);
            let _ = writeln!(report, "vertices = {}", mesh.vertices.len());
            let _ = writeln!(report, "triangles = {}", mesh.triangles.len());
            let _ = writeln!(report, "h_max = {}", mesh.h_max);
            let _ = writeln!(report, "solver_relative_residual = {:e}", solution.relative_residual);
            let _ = writeln!(report, "grad_l2 = {}", norms.grad_l2);
            let _ = writeln!(report, "l2 = {}", norms.l2);
            let _ = writeln!(report, "h1k = {}", norms.h1k);
            let _ = writeln!(report, "trace_gamma_i = {}", norms.trace_gamma_i);
            let _ = writeln!(report, "trace_gamma_d = {}", norms.trace_gamma_d);
            let _ = writeln!(report, "conormal_gamma_d = {}", norms.conormal_gamma_d);
            write_artifact(&out_dir, "norms.txt", &report)?;
            say(&report);
            Ok(0)
        }
        Command::Sweep => {
            let family = build_family(cfg)?;
            let domain = build_domain(cfg)?;
            let outcome = harness::k_sweep_bound_check(cfg, &family, &domain)?;
            write_artifact(&out_dir, "sweep.csv", &outcome.csv)?;
            write_artifact(&out_dir, "sweep_summary.txt", &outcome.summary)?;
            say(&outcome.summary);
            Ok(if outcome.all_pass { 0 } else { 1 })
        }
        Command::Rays => {
            let outcome = match cfg.ray_dimension {
                2 => harness::rays_study(cfg, &scalar_field_for_rays::<2>(cfg)?)?,
                3 => harness::rays_study(cfg, &scalar_field_for_rays::<3>(cfg)?)?,
                d => return Err(RunError::Invalid(format!("ray dimension {d} not supported"))),
            };
            write_artifact(&out_dir, "trajectories.csv", &outcome.trajectories_csv)?;
            write_artifact(&out_dir, "rays_verdict.txt", &outcome.report_text)?;
            say(&outcome.report_text);
            Ok(0)
        }
        Command::MorawetzCheck => {
            let outcome = harness::morawetz_suite(cfg)?;
            write_artifact(&out_dir, "morawetz.txt", &outcome.report_text)?;
            say(&outcome.report_text);
            Ok(if outcome.pass { 0 } else { 1 })
        }
        Command::MollifyStudy => {
            let family = build_family(cfg)?;
            let outcome = harness::mollification_study(cfg, &family.n)?;
            write_artifact(&out_dir, "mollify.csv", &outcome.csv)?;
            let mut text = String::new();
            let _ = writeln!(text, "mollification study; L2-distance slope in delta: {}", outcome.slope);
            write_artifact(&out_dir, "mollify_summary.txt", &text)?;
            say(&text);
            Ok(0)
        }
        Command::Infsup => {
            let family = build_family(cfg)?;
            let domain = build_domain(cfg)?;
            let outcome = harness::infsup_study(cfg, &family, &domain)?;
            write_artifact(&out_dir, "infsup.csv", &outcome.csv)?;
            write_artifact(&out_dir, "infsup_summary.txt", &outcome.summary)?;
            say(&outcome.summary);
            Ok(0)
        }
    }
}

fn prepared(dir: &Path) -> Result<PathBuf, RunError> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

/// The rays command works on a scalar profile; transmission/annuli families
/// have no pointwise gradient and are rejected.
fn scalar_field_for_rays<const D: usize>(cfg: &RunConfig) -> Result<CoefficientField<D>, RunError> {
    match cfg.family {
        FamilyKind::Constant => Ok(CoefficientField::constant(cfg.n_value)),
        FamilyKind::Radial => {
            if !cfg.profile_target_n {
                return Err(RunError::Invalid(
                    "rays need a scalar n profile (profile_target=n)".into(),
                ));
            }
            let profile: RadialProfile = radial_profile_from(cfg)?;
            Ok(CoefficientField::radial(profile))
        }
        _ => Err(RunError::Invalid(
            "rays require a smooth n (family=constant or family=radial); piecewise families \
             have no pointwise gradient"
                .into(),
        )),
    }
}
