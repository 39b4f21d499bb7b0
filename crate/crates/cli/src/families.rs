//! Builds core geometry and coefficient objects from a parsed configuration,
//! including tabulated radial profiles read from two-column CSV.

use std::fmt;
use std::sync::Arc;

use helmbound_core::coeff::{
    transmission_pair, CoeffError, CoefficientField, MatrixCoefficientField, RadialProfile,
    Region,
};
use helmbound_core::fem::{BoundaryScalar, HelmholtzProblem, VolumeData};
use helmbound_core::geom::{DomainSpec, GeomError, Polygon};
use helmbound_core::{c64, la};

use crate::config::{FamilyKind, ProfileKind, RunConfig, ShapeKind};

#[derive(Debug)]
pub enum FamilyError {
    Geometry(GeomError),
    Coefficient(CoeffError),
    Io(std::io::Error),
    Invalid(String),
}

impl fmt::Display for FamilyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyError::Geometry(e) => write!(f, "geometry: {e}"),
            FamilyError::Coefficient(e) => write!(f, "coefficient: {e}"),
            FamilyError::Io(e) => write!(f, "io: {e}"),
            FamilyError::Invalid(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for FamilyError {}

impl From<GeomError> for FamilyError {
    fn from(e: GeomError) -> Self {
        FamilyError::Geometry(e)
    }
}

impl From<CoeffError> for FamilyError {
    fn from(e: CoeffError) -> Self {
        FamilyError::Coefficient(e)
    }
}

/// Coefficient pair plus a short description for the reports.
pub struct ProblemFamily {
    pub a: MatrixCoefficientField<2>,
    pub n: CoefficientField<2>,
    pub description: String,
}

fn polygon_from(
    shape: ShapeKind,
    half_width: f64,
    radius: f64,
    vertices: usize,
) -> Result<Option<Polygon>, FamilyError> {
    match shape {
        ShapeKind::None => Ok(None),
        ShapeKind::Square => Ok(Some(Polygon::square(half_width)?)),
        ShapeKind::RegularPolygon => Ok(Some(Polygon::regular(vertices.max(3), radius)?)),
    }
}

pub fn build_domain(cfg: &RunConfig) -> Result<DomainSpec, FamilyError> {
    let outer = polygon_from(
        cfg.outer_shape,
        cfg.outer_half_width,
        cfg.outer_radius,
        cfg.outer_vertices,
    )?
    .ok_or_else(|| FamilyError::Invalid("outer shape cannot be `none`".into()))?;
    let obstacle = polygon_from(
        cfg.obstacle_shape,
        cfg.obstacle_half_width,
        cfg.obstacle_radius,
        cfg.obstacle_vertices,
    )?;
    Ok(DomainSpec::new(outer, obstacle)?)
}

pub fn radial_profile_from(cfg: &RunConfig) -> Result<RadialProfile, FamilyError> {
    Ok(match cfg.profile {
        ProfileKind::GaussianBump => RadialProfile::GaussianBump {
            amp: cfg.profile_amp,
            center: cfg.profile_center,
            width: cfg.profile_width,
        },
        ProfileKind::Ramp => RadialProfile::Ramp { v0: cfg.profile_v0, r0: cfg.profile_r0 },
        ProfileKind::SmoothWell => {
            RadialProfile::SmoothWell { depth: cfg.profile_depth, r0: cfg.profile_r0 }
        }
        ProfileKind::InverseSquare => RadialProfile::InverseSquare {
            r_ref: cfg.profile_r0,
            r_inner: cfg.profile_r_inner,
            r_outer: cfg.profile_r_outer,
            blend: cfg.profile_blend,
        },
        ProfileKind::ExpCut => RadialProfile::ExpCut {
            rate: cfg.profile_rate,
            r0: cfg.profile_r0,
            blend: cfg.profile_blend,
        },
        ProfileKind::Table => {
            if cfg.profile_csv.is_empty() {
                return Err(FamilyError::Invalid(
                    "profile=table requires profile_csv=<path>".into(),
                ));
            }
            let text = std::fs::read_to_string(&cfg.profile_csv).map_err(FamilyError::Io)?;
            RadialProfile::from_table(parse_radial_csv(&text)?)?
        }
    })
}

/// Two-column CSV `r,value` with optional header; rows sorted by r.
pub fn parse_radial_csv(text: &str) -> Result<Vec<(f64, f64)>, FamilyError> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let a = parts.next().unwrap_or("").trim();
        let b = parts
            .next()
            .ok_or_else(|| FamilyError::Invalid(format!("csv line {}: expected r,value", idx + 1)))?
            .trim();
        if idx == 0 && (a.parse::<f64>().is_err() || b.parse::<f64>().is_err()) {
            continue; // header row
        }
        let r = a
            .parse::<f64>()
            .map_err(|_| FamilyError::Invalid(format!("csv line {}: bad radius `{a}`", idx + 1)))?;
        let v = b
            .parse::<f64>()
            .map_err(|_| FamilyError::Invalid(format!("csv line {}: bad value `{b}`", idx + 1)))?;
        rows.push((r, v));
    }
    rows.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    Ok(rows)
}

fn interface_region(cfg: &RunConfig) -> Result<Region, FamilyError> {
    Ok(match cfg.interface_shape {
        ShapeKind::Square => Region::Polygon(Polygon::square(cfg.interface_half_width)?),
        ShapeKind::RegularPolygon => Region::Ball { radius: cfg.interface_radius },
        ShapeKind::None => {
            return Err(FamilyError::Invalid("interface shape cannot be `none`".into()))
        }
    })
}

pub fn build_family(cfg: &RunConfig) -> Result<ProblemFamily, FamilyError> {
    match cfg.family {
        FamilyKind::Constant => Ok(ProblemFamily {
            a: MatrixCoefficientField::constant_scalar(cfg.a_value),
            n: CoefficientField::constant(cfg.n_value),
            description: format!("constant A = {} I, n = {}", cfg.a_value, cfg.n_value),
        }),
        FamilyKind::Radial => {
            let profile = radial_profile_from(cfg)?;
            if cfg.profile_target_n {
                Ok(ProblemFamily {
                    a: MatrixCoefficientField::identity(),
                    n: CoefficientField::radial(profile),
                    description: format!("radial n ({:?}), A = I", cfg.profile),
                })
            } else {
                Ok(ProblemFamily {
                    a: MatrixCoefficientField::radial(profile),
                    n: CoefficientField::constant(1.0),
                    description: format!("radial A ({:?}), n = 1", cfg.profile),
                })
            }
        }
        FamilyKind::Transmission => {
            let region = interface_region(cfg)?;
            let (a, n) = transmission_pair(cfg.a_i, cfg.n_i, region)?;
            Ok(ProblemFamily {
                a,
                n,
                description: format!(
                    "transmission a_i = {}, n_i = {} across a star-shaped interface",
                    cfg.a_i, cfg.n_i
                ),
            })
        }
        FamilyKind::Annuli => {
            if cfg.annuli_radii.len() != cfg.annuli_n.len()
                || cfg.annuli_radii.len() != cfg.annuli_a.len()
            {
                return Err(FamilyError::Invalid(
                    "annuli_radii, annuli_n, annuli_a must have equal lengths".into(),
                ));
            }
            let n_parts: Vec<(Region, f64)> = cfg
                .annuli_radii
                .iter()
                .zip(&cfg.annuli_n)
                .map(|(&r, &v)| (Region::Ball { radius: r }, v))
                .collect();
            let a_parts: Vec<(Region, f64)> = cfg
                .annuli_radii
                .iter()
                .zip(&cfg.annuli_a)
                .map(|(&r, &v)| (Region::Ball { radius: r }, v))
                .collect();
            Ok(ProblemFamily {
                a: MatrixCoefficientField::piecewise(1.0, a_parts)?,
                n: CoefficientField::piecewise(1.0, n_parts)?,
                description: format!("nested annuli, {} shells", cfg.annuli_radii.len()),
            })
        }
    }
}

/// Default source: a normalized Gaussian bump of width diameter/10, centered
/// on the origin side of the obstacle and smoothly truncated so its support
/// stays away from the truncation boundary.
pub fn default_source(domain: &DomainSpec) -> VolumeData {
    let origin = [0.0, 0.0];
    let mut min_boundary = f64::INFINITY;
    for i in 0..domain.outer.edge_count() {
        let (a, b) = domain.outer.edge(i);
        let ab = la::sub(&b, &a);
        let t = (la::dot(&la::sub(&origin, &a), &ab) / la::dot(&ab, &ab)).clamp(0.0, 1.0);
        let proj = la::axpy(&a, t, &ab);
        min_boundary = min_boundary.min(la::norm(&la::sub(&origin, &proj)));
    }
    let l_i = domain.outer.max_vertex_distance(&origin);
    let sigma = 2.0 * l_i / 10.0;
    let center = match &domain.obstacle {
        Some(obs) => {
            let l_d = obs.max_vertex_distance(&origin);
            [0.5 * (l_d + min_boundary), 0.0]
        }
        None => origin,
    };
    // smooth radial cutoff between 70% and 85% of the inradius
    let r0 = 0.70 * min_boundary;
    let r1 = 0.85 * min_boundary;
    Arc::new(move |x: &[f64; 2]| {
        let r = la::norm(x);
        if r >= r1 {
            return c64(0.0, 0.0);
        }
        let d2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
        let bump = (-d2 / (2.0 * sigma * sigma)).exp();
        let cut = if r <= r0 {
            1.0
        } else {
            let t = (r - r0) / (r1 - r0);
            1.0 - t * t * (3.0 - 2.0 * t)
        };
        c64(bump * cut, 0.0)
    })
}

/// Assembles a full problem instance for one wavenumber.
pub fn build_problem(
    cfg: &RunConfig,
    family: &ProblemFamily,
    domain: &DomainSpec,
    k: f64,
) -> HelmholtzProblem {
    HelmholtzProblem {
        k,
        a_field: family.a.clone(),
        n_field: family.n.clone(),
        theta: BoundaryScalar::constant(cfg.theta),
        source: Some(default_source(domain)),
        dirichlet_data: None,
        impedance_data: None,
        domain: domain.clone(),
    }
}
