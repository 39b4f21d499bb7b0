//! End-to-end experiment orchestration: k-sweep bound verification against
//! the explicit constants, discrete inf-sup estimation, mollification
//! convergence studies, ray-ensemble classification, and the randomized
//! identity checks. Per-k jobs and ray integrations run on a small thread
//! pool; results are merged by index so reports are deterministic.

use std::fmt::Write as _;
use std::sync::Mutex;

use helmbound_core::coeff::{
    check_condition_a1, check_condition_n3, check_radial_monotone_n, CoefficientField,
    ConditionReport, GradientRoute, MatrixCoefficientField, SamplingSpec,
};
use helmbound_core::consts::{self, TedpBoundary, TedpCase};
use helmbound_core::fem::{
    self, assemble, compute_norms, h1k_gram, mesh_width_rule, solve, HelmholtzProblem,
};
use helmbound_core::geom::{build_mesh, geometric_params, BoundaryTag, DomainSpec};
use helmbound_core::la;
use helmbound_core::morawetz::{
    self, random_instance, tangential_split, DivergenceRoute,
};
use helmbound_core::quad::{bary_to_xy, tri_order5};
use helmbound_core::rand::SplitMix64;
use helmbound_core::rays::{
    self, classify_trapping, equilibrium_radius, integrate_ray, RayState, StepControl,
    Verdict,
};
use helmbound_core::sparse::generalized_sigma_min;

use crate::config::{RunConfig, SweepMode};
use crate::families::ProblemFamily;

#[derive(Debug)]
pub enum HarnessError {
    /// Condition check failed: the nontrapping constants are inapplicable,
    /// assert-mode sweeps refuse to run.
    Refused(String),
    Invalid(String),
    Core(String),
}

impl std::fmt::Display for HarnessError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HarnessError::Refused(m) => write!(f, "refused: {m}"),
            HarnessError::Invalid(m) => write!(f, "invalid: {m}"),
            HarnessError::Core(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for HarnessError {}

fn core_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Core(e.to_string())
}

/// Deterministic order-preserving parallel map.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = if workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        workers
    }
    .min(items.len().max(1));
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= items.len() {
                    break;
                }
                let r = f(&items[idx]);
                slots.lock().unwrap()[idx] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.unwrap()).collect()
}

/// One row of the bound-verification sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub k: f64,
    pub h: f64,
    pub grad_norm2: f64,
    pub k2_l2_norm2: f64,
    pub weighted_lhs: f64,
    pub f_norm2: f64,
    pub constant_used: f64,
    pub ratio: f64,
    /// None in report-only mode.
    pub pass: Option<bool>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub mu1: f64,
    pub mu2: f64,
    pub condition: ConditionReport<2>,
    pub all_pass: bool,
    pub csv: String,
    pub summary: String,
}

/// Verifies the weighted a priori bound over a wavenumber grid: for each k,
/// mesh by the resolution rule, solve the impedance-truncated problem with
/// the default source, and compare `mu1 |grad u|^2 + mu2 k^2 |u|^2` against
/// `C1 |f|^2` with the part (i) truncated-problem constant evaluated at
/// `mu1 = A_min`, `mu2 = n_min`.
pub fn k_sweep_bound_check(
    cfg: &RunConfig,
    family: &ProblemFamily,
    domain: &DomainSpec,
) -> Result<SweepOutcome, HarnessError> {
    let spec = SamplingSpec::for_support(
        family.a.support_radius.max(family.n.support_radius).max(0.5),
    );
    let condition =
        check_condition_a1(&family.a, &family.n, &spec, GradientRoute::Auto).map_err(core_err)?;
    let assert_mode = cfg.sweep_mode == SweepMode::Assert;
    if assert_mode && !condition.holds {
        return Err(HarnessError::Refused(format!(
            "coefficient condition failed (margins {:?}); the nontrapping constant does not \
             apply. Re-run with mode=report-only to record ratios without assertions.",
            condition.margins
        )));
    }
    let params = geometric_params(domain);
    if !params.outer_star_shaped {
        return Err(HarnessError::Refused(
            "truncation boundary is not star-shaped w.r.t. a ball at the origin".into(),
        ));
    }
    // P1 pollution grows like k^3 h^2; beyond the cap the discrete solution
    // is no longer bound-faithful at this resolution rule
    if let Some(&k_over) = cfg.k_list.iter().find(|&&k| k > cfg.k_cap) {
        return Err(HarnessError::Invalid(format!(
            "k = {k_over} exceeds the sweep cap k_cap = {} (raise k_cap and ppw together if you              really want this)",
            cfg.k_cap
        )));
    }
    let mu1 = family.a.a_min;
    let mu2 = family.n.n_min;
    let n_max_gamma_i = max_n_on_outer_boundary(&family.n, domain);

    let jobs: Vec<f64> = cfg.k_list.clone();
    let results = parallel_map(&jobs, cfg.workers, |&k| -> Result<SweepRow, String> {
        let h = mesh_width_rule(k, cfg.h0, cfg.ppw);
        let mesh = build_mesh(domain, h).map_err(|e| e.to_string())?;
        let problem = crate::families::build_problem(cfg, family, domain, k);
        let system = assemble(&problem, &mesh).map_err(|e| e.to_string())?;
        let solution = solve(&system).map_err(|e| e.to_string())?;
        let norms = compute_norms(&solution.nodal_values, &mesh, k, &family.a);
        let f_norm2 = source_l2_squared(&problem, &mesh);
        let boundary = TedpBoundary {
            l_i: params.l_i,
            a_i: params.a_i,
            theta_min: cfg.theta,
            theta_max: cfg.theta,
            n_max_gamma_i,
        };
        let constants =
            consts::tedp_constants(TedpCase::PartA1 { mu1, mu2 }, boundary, 2, k)
                .map_err(|e| e.to_string())?;
        let c1 = constants.c1.unwrap();
        let grad2 = norms.grad_l2 * norms.grad_l2;
        let k2l2 = k * k * norms.l2 * norms.l2;
        let weighted = mu1 * grad2 + mu2 * k2l2;
        let ratio = weighted / (c1 * f_norm2);
        Ok(SweepRow {
            k,
            h,
            grad_norm2: grad2,
            k2_l2_norm2: k2l2,
            weighted_lhs: weighted,
            f_norm2,
            constant_used: c1,
            ratio,
            pass: assert_mode.then_some(ratio <= 1.0 + cfg.safety_factor),
        })
    });
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r.map_err(HarnessError::Core)?);
    }
    let all_pass = rows.iter().all(|r| r.pass.unwrap_or(true));

    let mut csv = String::from(
        "k,h,grad_norm2,k2_l2_norm2,weighted_lhs,f_norm2,constant_used,ratio,pass\n",
    );
    for r in &rows {
        let pass = match r.pass {
            Some(true) => "true",
            Some(false) => "false",
            None => "-",
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.k,
            r.h,
            r.grad_norm2,
            r.k2_l2_norm2,
            r.weighted_lhs,
            r.f_norm2,
            r.constant_used,
            r.ratio,
            pass
        );
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "bound verification sweep");
    let _ = writeln!(summary, "family: {}", family.description);
    let _ = writeln!(
        summary,
        "condition A1 (jump rule for piecewise pairs): holds = {}, margins = {:?}",
        condition.holds, condition.margins
    );
    let _ = writeln!(
        summary,
        "constant: part (i) truncated-problem C1 with mu1 = A_min = {mu1}, mu2 = n_min = {mu2}"
    );
    let _ = writeln!(
        summary,
        "boundary inputs: L_I = {}, a_I = {}, theta = {}, n_max on truncation boundary = {}",
        params.l_i, params.a_i, cfg.theta, n_max_gamma_i
    );
    let _ = writeln!(summary, "mesh rule: h = min({}, 2 pi / ({} k))", cfg.h0, cfg.ppw);
    let _ = writeln!(summary, "safety factor: {}", cfg.safety_factor);
    let _ = writeln!(
        summary,
        "mode: {}",
        if assert_mode { "assert" } else { "report-only" }
    );
    let _ = writeln!(summary, "all rows pass: {all_pass}");
    Ok(SweepOutcome { rows, mu1, mu2, condition, all_pass, csv, summary })
}

fn max_n_on_outer_boundary(n: &CoefficientField<2>, domain: &DomainSpec) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..domain.outer.edge_count() {
        let (a, b) = domain.outer.edge(i);
        for q in 0..=8 {
            let t = q as f64 / 8.0;
            let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            worst = worst.max(n.eval(&x));
        }
    }
    worst
}

/// L2 norm squared of the source over the mesh, order-5 quadrature.
pub fn source_l2_squared(problem: &HelmholtzProblem, mesh: &helmbound_core::geom::Mesh) -> f64 {
    let Some(f) = &problem.source else { return 0.0 };
    let rule = tri_order5();
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (p0, p1, p2) = (
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        );
        let area = mesh.triangle_area(t);
        for q in rule.iter() {
            let x = bary_to_xy(&q.bary, &p0, &p1, &p2);
            acc += area * q.weight * f(&x).norm_sqr();
        }
    }
    acc
}

#[derive(Debug, Clone)]
pub struct InfsupRow {
    pub k: f64,
    pub discrete_infsup: f64,
    pub analytic_lower_bound: f64,
    pub margin: f64,
    pub converged: bool,
}

#[derive(Debug)]
pub struct InfsupOutcome {
    pub rows: Vec<InfsupRow>,
    pub csv: String,
    pub summary: String,
}

/// Discrete inf-sup constants over a k grid: smallest generalized singular
/// value of the system matrix in the k-weighted H1 geometry, next to the
/// analytic lower bound (discrete and continuous inf-sup differ by
/// discretization effects; the margin is reported, not asserted).
pub fn infsup_study(
    cfg: &RunConfig,
    family: &ProblemFamily,
    domain: &DomainSpec,
) -> Result<InfsupOutcome, HarnessError> {
    let spec = SamplingSpec::for_support(
        family.a.support_radius.max(family.n.support_radius).max(0.5),
    );
    let condition =
        check_condition_a1(&family.a, &family.n, &spec, GradientRoute::Auto).map_err(core_err)?;
    let params = geometric_params(domain);
    let n_max_gamma_i = max_n_on_outer_boundary(&family.n, domain);
    let (mu1, mu2) = if condition.holds {
        (condition.margins[0], condition.margins[1])
    } else {
        (family.a.a_min, family.n.n_min)
    };
    let jobs = cfg.k_list.clone();
    let results = parallel_map(&jobs, cfg.workers, |&k| -> Result<InfsupRow, String> {
        let h = mesh_width_rule(k, cfg.h0, cfg.ppw);
        let mesh = build_mesh(domain, h).map_err(|e| e.to_string())?;
        let mut problem = crate::families::build_problem(cfg, family, domain, k);
        problem.source = None;
        let system = assemble(&problem, &mesh).map_err(|e| e.to_string())?;
        let gram = h1k_gram(&mesh, k, &system.dof_map);
        let result =
            generalized_sigma_min(&system.matrix, &gram, cfg.infsup_max_iterations, 1e-10)
                .map_err(|e| e.to_string())?;
        let boundary = TedpBoundary {
            l_i: params.l_i,
            a_i: params.a_i,
            theta_min: cfg.theta,
            theta_max: cfg.theta,
            n_max_gamma_i,
        };
        let c1 = consts::tedp_constants(TedpCase::PartA1 { mu1, mu2 }, boundary, 2, k)
            .map_err(|e| e.to_string())?
            .c1
            .unwrap();
        let bound = consts::infsup_lower_bound(
            family.a.a_min,
            family.n.n_min,
            family.n.n_max,
            mu1.min(mu2),
            c1,
            k,
        )
        .map_err(|e| e.to_string())?;
        Ok(InfsupRow {
            k,
            discrete_infsup: result.sigma,
            analytic_lower_bound: bound,
            margin: result.sigma - bound,
            converged: result.converged,
        })
    });
    let mut rows = Vec::new();
    for r in results {
        rows.push(r.map_err(HarnessError::Core)?);
    }
    let mut csv = String::from("k,discrete_infsup,analytic_lower_bound,margin,converged\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.k, r.discrete_infsup, r.analytic_lower_bound, r.margin, r.converged
        );
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "discrete inf-sup study");
    let _ = writeln!(summary, "family: {}", family.description);
    let _ = writeln!(
        summary,
        "lower bound: min(A_min, n_min) / (1 + 2 sqrt(C1/mu_min) n_max k), C1 from the part (i) \
         truncated-problem constant"
    );
    let _ = writeln!(
        summary,
        "caveat: the discrete inf-sup differs from the continuous one by discretization effects"
    );
    Ok(InfsupOutcome { rows, csv, summary })
}

#[derive(Debug, Clone)]
pub struct MollifyRow {
    pub delta: f64,
    pub l2_distance: f64,
    pub mu2_margin: f64,
    pub monotone_margin: f64,
    pub min_value: f64,
}

#[derive(Debug)]
pub struct MollifyOutcome {
    pub rows: Vec<MollifyRow>,
    pub slope: f64,
    pub csv: String,
}

/// Mollification study of a rough scalar coefficient: L2 distance to the
/// original over the disk of radius `r_max`, plus the condition margins of
/// the mollified field (certified via the radial-difference route).
pub fn mollification_study(
    cfg: &RunConfig,
    n: &CoefficientField<2>,
) -> Result<MollifyOutcome, HarnessError> {
    let r_max = cfg.mollify_r_max;
    let rows: Vec<MollifyRow> = {
        let deltas = cfg.mollify_deltas.clone();
        let results = parallel_map(&deltas, cfg.workers, |&delta| -> Result<MollifyRow, String> {
            let nd = n.mollify(delta).map_err(|e| e.to_string())?;
            // L2 distance over the disk, midpoint rule; only the smoothing
            // layer contributes
            let cells = 256usize;
            let dx = 2.0 * r_max / cells as f64;
            let mut dist2 = 0.0;
            for i in 0..cells {
                for j in 0..cells {
                    let x = [
                        -r_max + (i as f64 + 0.5) * dx,
                        -r_max + (j as f64 + 0.5) * dx,
                    ];
                    if la::norm(&x) > r_max {
                        continue;
                    }
                    let diff = nd.eval(&x) - n.eval(&x);
                    dist2 += diff * diff * dx * dx;
                }
            }
            let spec = SamplingSpec::<2>::for_support(nd.support_radius).with_density(12.0, 256);
            let identity = MatrixCoefficientField::identity();
            let a1 = check_condition_a1(&identity, &nd, &spec, GradientRoute::DirectionalFd)
                .map_err(|e| e.to_string())?;
            let monotone = check_radial_monotone_n(&nd, &spec).map_err(|e| e.to_string())?;
            let mut min_value = f64::INFINITY;
            spec.for_each(|x| {
                min_value = min_value.min(nd.eval(x));
            });
            Ok(MollifyRow {
                delta,
                l2_distance: dist2.sqrt(),
                mu2_margin: a1.margins[1],
                monotone_margin: monotone.margins[0],
                min_value,
            })
        });
        let mut rows = Vec::new();
        for r in results {
            rows.push(r.map_err(HarnessError::Core)?);
        }
        rows
    };
    // log-log slope of the L2 distance in delta
    let slope = {
        let xs: Vec<f64> = rows.iter().map(|r| r.delta.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.l2_distance.max(1e-300).ln()).collect();
        let np = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        (np * sxy - sx * sy) / (np * sxx - sx * sx)
    };
    let mut csv = String::from("delta,l2_distance,mu2_margin,monotone_margin,min_value\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.delta, r.l2_distance, r.mu2_margin, r.monotone_margin, r.min_value
        );
    }
    Ok(MollifyOutcome { rows, slope, csv })
}

#[derive(Debug)]
pub struct RaysOutcome {
    pub verdict: Verdict,
    pub report_text: String,
    pub trajectories_csv: String,
    pub all_rays_escaped: bool,
}

/// Ray-ensemble classification; for radial profiles with a trapping margin
/// violation an extra deterministic tangential launch is placed at the
/// `2n + r n' = 0` radius, which is an exactly circular trapped orbit.
pub fn rays_study<const D: usize>(
    cfg: &RunConfig,
    n: &CoefficientField<D>,
) -> Result<RaysOutcome, HarnessError> {
    let ctrl = StepControl {
        ds: cfg.ray_ds,
        record_stride: cfg.ray_record_stride,
        ..Default::default()
    };
    let radius = cfg.ray_radius;
    let s_budget = if cfg.ray_s_budget > 0.0 { cfg.ray_s_budget } else { 1e3 * radius };
    // a positive margin from the condition checker feeds the escape bound
    let mu = {
        let spec = SamplingSpec::<D>::for_support(n.support_radius.max(0.5))
            .with_density(16.0, 512);
        match check_condition_n3(n, &spec, GradientRoute::Auto) {
            Ok(rep) if rep.holds => Some(rep.margins[0]),
            _ => None,
        }
    };
    let report = classify_trapping(n, radius, cfg.ray_ensemble, s_budget, &ctrl, mu)
        .map_err(core_err)?;

    let mut extra_trapped = false;
    let mut traces: Vec<(usize, rays::RayTraceResult<D>)> = Vec::new();
    // re-integrate recording for the export (classify keeps only summaries)
    let mut equilibrium_note = String::new();
    if cfg.ray_equilibrium_launch {
        if let Some(profile) = n.as_radial() {
            let scan = rays::ralston_check(profile, 1e-3, n.support_radius.max(1.0), 4000);
            if let Some(v) = scan.violating_r {
                if let Some(r_star) = equilibrium_radius(profile, 1e-3, scan.argmin_r) {
                    if r_star < radius {
                        let mut x0 = [0.0; D];
                        x0[0] = r_star;
                        let mut tangent = [0.0; D];
                        tangent[1] = 1.0;
                        let launch = RayState::on_null_shell(n, x0, tangent);
                        let trace = integrate_ray(n, &launch, s_budget, &ctrl, Some(1.01 * radius))
                            .map_err(core_err)?;
                        extra_trapped = !trace.escaped;
                        let _ = writeln!(
                            equilibrium_note,
                            "equilibrium launch at r = {r_star} (margin first negative at r = {v}): \
                             escaped = {}",
                            trace.escaped
                        );
                        traces.push((cfg.ray_ensemble, trace));
                    }
                }
            }
        }
    }
    // export a handful of ensemble trajectories (the full set would be large)
    let export = cfg.ray_ensemble.min(8);
    let mut dir_rng = SplitMix64::new(rays::LAUNCH_DIRECTION_SEED);
    for i in 0..cfg.ray_ensemble {
        // the direction stream must stay aligned with classify_trapping
        let dir: [f64; D] = dir_rng.unit_vector();
        if i < export {
            let launch = launch_like_classify(n, radius, i, dir);
            let trace = integrate_ray(n, &launch, s_budget, &ctrl, Some(1.01 * radius))
                .map_err(core_err)?;
            traces.push((i, trace));
        }
    }
    traces.sort_by_key(|(id, _)| *id);
    let verdict = if extra_trapped || report.verdict == Verdict::TrappingEvidence {
        Verdict::TrappingEvidence
    } else {
        Verdict::NontrappingEvidence
    };
    let all_escaped = report.rays.iter().all(|r| r.escaped) && !extra_trapped;

    let mut text = String::new();
    let _ = writeln!(text, "{{");
    let _ = writeln!(
        text,
        "  \"verdict\": \"{}\",",
        match verdict {
            Verdict::NontrappingEvidence => "NONTRAPPING_EVIDENCE",
            Verdict::TrappingEvidence => "TRAPPING_EVIDENCE",
        }
    );
    let _ = writeln!(text, "  \"radius\": {radius},");
    let _ = writeln!(text, "  \"ensemble\": {},", cfg.ray_ensemble);
    let _ = writeln!(text, "  \"s_budget\": {s_budget},");
    let _ = writeln!(text, "  \"max_null_drift\": {:e},", report.max_null_drift);
    match report.escape_bound {
        Some(b) => {
            let _ = writeln!(text, "  \"escape_bound\": {b},");
            let honored = report
                .rays
                .iter()
                .all(|r| r.escape_s.map(|s| s < b).unwrap_or(false));
            let _ = writeln!(text, "  \"escape_bound_honored\": {honored},");
        }
        None => {
            let _ = writeln!(text, "  \"escape_bound\": null,");
        }
    }
    let escaped_count = report.rays.iter().filter(|r| r.escaped).count();
    let _ = writeln!(text, "  \"escaped\": {escaped_count},");
    let _ = writeln!(text, "  \"trapped\": {},", report.rays.len() - escaped_count);
    let _ = writeln!(text, "  \"trajectories_exported\": {},", traces.len());
    if !equilibrium_note.is_empty() {
        let _ = writeln!(text, "  \"equilibrium\": \"{}\",", equilibrium_note.trim());
    }
    let _ = writeln!(
        text,
        "  \"note\": \"verdicts are evidence from a finite ensemble, not proof\""
    );
    let _ = writeln!(text, "}}");
    Ok(RaysOutcome {
        verdict,
        report_text: text,
        trajectories_csv: crate::io::trajectories_csv(&traces, n),
        all_rays_escaped: all_escaped,
    })
}

fn launch_like_classify<const D: usize>(
    n: &CoefficientField<D>,
    radius: f64,
    index: usize,
    dir: [f64; D],
) -> RayState<D> {
    let mut trial = index;
    let x = loop {
        let u: [f64; D] = helmbound_core::rand::halton_point(trial);
        let mut x = [0.0; D];
        for d in 0..D {
            x[d] = radius * (2.0 * u[d] - 1.0);
        }
        if la::norm(&x) < 0.999 * radius {
            break x;
        }
        trial += 1 << 16;
    };
    RayState::on_null_shell(n, x, dir)
}

#[derive(Debug)]
pub struct MorawetzOutcome {
    pub pass: bool,
    pub max_identity_residual: f64,
    pub max_tangentiality: f64,
    pub max_energy_split: f64,
    pub report_text: String,
}

/// Randomized identity suite: pointwise multiplier identity on seeded smooth
/// instances (analytic route), plus the tangential-operator checks.
pub fn morawetz_suite(cfg: &RunConfig) -> Result<MorawetzOutcome, HarnessError> {
    let mut rng = SplitMix64::new(cfg.seed);
    let tol = cfg.morawetz_tolerance;
    let mut max_residual: f64 = 0.0;
    let mut max_tan: f64 = 0.0;
    let mut max_split: f64 = 0.0;
    match cfg.morawetz_dimension {
        2 => run_dim::<2>(&mut rng, cfg, &mut max_residual, &mut max_tan, &mut max_split),
        3 => run_dim::<3>(&mut rng, cfg, &mut max_residual, &mut max_tan, &mut max_split),
        _ => return Err(HarnessError::Invalid("dimension must be 2 or 3".into())),
    }
    // finite-difference divergence route on a few instances certifies the
    // analytic path at O(fd_h^2); informational, not asserted
    let fd_residual = {
        let mut rng_fd = SplitMix64::new(cfg.seed ^ 0xfd);
        let mut worst: f64 = 0.0;
        for _ in 0..cfg.morawetz_samples.min(10) {
            let inst = random_instance::<2>(&mut rng_fd);
            let x = [rng_fd.range(-1.5, 1.5), rng_fd.range(-1.5, 1.5)];
            worst = worst.max(morawetz::pointwise_identity_residual(
                &inst.v,
                &inst.a,
                &inst.n,
                &inst.spec,
                &x,
                DivergenceRoute::FiniteDifference { h: cfg.morawetz_fd_h },
            ));
        }
        worst
    };
    let pass = max_residual <= tol && max_tan <= 1e-13 && max_split <= 1e-12;
    let mut text = String::new();
    let _ = writeln!(text, "randomized multiplier-identity suite");
    let _ = writeln!(text, "dimension: {}", cfg.morawetz_dimension);
    let _ = writeln!(text, "seed: {}", cfg.seed);
    let _ = writeln!(text, "samples: {}", cfg.morawetz_samples);
    let _ = writeln!(text, "max identity residual: {max_residual:e} (tolerance {tol:e})");
    let _ = writeln!(
        text,
        "finite-difference route (h = {}): max residual {fd_residual:e} (O(h^2) consistency, informational)",
        cfg.morawetz_fd_h
    );
    let _ = writeln!(text, "max |T.nu|: {max_tan:e} (tolerance 1e-13)");
    let _ = writeln!(text, "max energy-split residual: {max_split:e} (tolerance 1e-12)");
    let _ = writeln!(text, "result: {}", if pass { "PASS" } else { "FAIL" });
    Ok(MorawetzOutcome {
        pass,
        max_identity_residual: max_residual,
        max_tangentiality: max_tan,
        max_energy_split: max_split,
        report_text: text,
    })
}

fn run_dim<const D: usize>(
    rng: &mut SplitMix64,
    cfg: &RunConfig,
    max_residual: &mut f64,
    max_tan: &mut f64,
    max_split: &mut f64,
) {
    for _ in 0..cfg.morawetz_samples {
        let inst = random_instance::<D>(rng);
        let mut x = [0.0; D];
        for xd in x.iter_mut() {
            *xd = rng.range(-2.0, 2.0);
        }
        let r = morawetz::pointwise_identity_residual(
            &inst.v,
            &inst.a,
            &inst.n,
            &inst.spec,
            &x,
            DivergenceRoute::Analytic,
        );
        *max_residual = max_residual.max(r);

        let nu: [f64; D] = rng.unit_vector();
        let am = inst.a.eval(&x);
        let split = tangential_split(&inst.v.grad(&x), &am, &nu);
        let mut t_nu = helmbound_core::c64(0.0, 0.0);
        for d in 0..D {
            t_nu += split.t[d] * nu[d];
        }
        *max_tan = max_tan.max(t_nu.norm());
        // <A g, g> = <A^-1 T, T> + |conormal|^2/nu_quad
        let g = inst.v.grad(&x);
        let ag = la::mat_cvec(&am, &g);
        let mut lhs = 0.0;
        for d in 0..D {
            lhs += (ag[d] * g[d].conj()).re;
        }
        let ainv = la::inverse(&am).unwrap();
        let at = la::mat_cvec(&ainv, &split.t);
        let mut rhs = split.conormal.norm_sqr() / split.nu_quad;
        for d in 0..D {
            rhs += (at[d] * split.t[d].conj()).re;
        }
        *max_split = max_split.max((lhs - rhs).abs());
    }
}

#[derive(Debug)]
pub struct CoeffCheckOutcome {
    pub report_text: String,
    pub a1_holds: bool,
}

/// Runs every applicable condition checker on the family and formats the
/// report.
pub fn coefficient_checks(family: &ProblemFamily) -> Result<CoeffCheckOutcome, HarnessError> {
    let support = family.a.support_radius.max(family.n.support_radius).max(0.5);
    let spec = SamplingSpec::for_support(support);
    let mut text = String::new();
    let _ = writeln!(text, "coefficient condition report");
    let _ = writeln!(text, "family: {}", family.description);
    let _ = writeln!(
        text,
        "sampling: box half-width {}, {} points",
        spec.half_width,
        spec.count()
    );
    let a1 = check_condition_a1(&family.a, &family.n, &spec, GradientRoute::Auto)
        .map_err(core_err)?;
    let _ = writeln!(
        text,
        "A1 (A - (x.grad)A >= mu1, n + x.grad n >= mu2): holds = {}, mu1 = {}, mu2 = {}, worst \
         point = ({}, {})",
        a1.holds, a1.margins[0], a1.margins[1], a1.worst_point[0], a1.worst_point[1]
    );
    match helmbound_core::coeff::check_condition_a2(&family.a, &spec, GradientRoute::Auto) {
        Ok(a2) => {
            let _ = writeln!(
                text,
                "A2 (2A - (x.grad)A >= mu3): holds = {}, mu3 = {}",
                a2.holds, a2.margins[0]
            );
        }
        Err(e) => {
            let _ = writeln!(text, "A2: not applicable ({e})");
        }
    }
    match check_condition_n3(&family.n, &spec, GradientRoute::Auto) {
        Ok(n3) => {
            let _ = writeln!(
                text,
                "N3 (2n + x.grad n >= mu4): holds = {}, mu4 = {}",
                n3.holds, n3.margins[0]
            );
        }
        Err(e) => {
            let _ = writeln!(text, "N3: not applicable ({e})");
        }
    }
    let mono_n = check_radial_monotone_n(&family.n, &spec).map_err(core_err)?;
    let _ = writeln!(
        text,
        "radial monotone n (nondecreasing outward): holds = {}, margin = {}",
        mono_n.holds, mono_n.margins[0]
    );
    let mono_a =
        helmbound_core::coeff::check_radial_monotone_a(&family.a, &spec).map_err(core_err)?;
    let _ = writeln!(
        text,
        "radial monotone A (nonincreasing outward): holds = {}, margin = {}",
        mono_a.holds, mono_a.margins[0]
    );
    Ok(CoeffCheckOutcome { report_text: text, a1_holds: a1.holds })
}

/// Solves a single instance and returns (mesh, solution, norms).
pub fn single_solve(
    cfg: &RunConfig,
    family: &ProblemFamily,
    domain: &DomainSpec,
) -> Result<
    (helmbound_core::geom::Mesh, fem::SolutionField, fem::Norms),
    HarnessError,
> {
    let h = mesh_width_rule(cfg.k, cfg.h0, cfg.ppw);
    let mesh = build_mesh(domain, h).map_err(core_err)?;
    let problem = crate::families::build_problem(cfg, family, domain, cfg.k);
    let system = assemble(&problem, &mesh).map_err(core_err)?;
    let solution = solve(&system).map_err(core_err)?;
    let norms = compute_norms(&solution.nodal_values, &mesh, cfg.k, &family.a);
    Ok((mesh, solution, norms))
}

/// True when the mesh has any Dirichlet boundary.
pub fn has_dirichlet(mesh: &helmbound_core::geom::Mesh) -> bool {
    mesh.boundary_edges.iter().any(|e| e.2 == BoundaryTag::GammaD)
}

/// Gathers every constant computable from the configured explicit inputs
/// into the flat aggregate used by the report.
pub fn collect_constants(cfg: &RunConfig) -> consts::StabilityConstants {
    let mut sc = consts::StabilityConstants {
        mu: [Some(cfg.mu1), Some(cfg.mu2), Some(cfg.mu3), Some(cfg.mu4)],
        ..Default::default()
    };
    sc.c1 = consts::constant_c1(cfg.mu1, cfg.mu2, cfg.radius_r, cfg.dim, cfg.k).ok();
    if let Ok(c) = consts::constants_edp(consts::EdpCase::A2Case {
        mu3: cfg.mu3,
        a_max: cfg.a_max,
        radius: cfg.radius_r,
        dim: cfg.dim,
        k: cfg.k,
    }) {
        sc.c2 = c.c2;
    }
    if let Ok(c) = consts::constants_edp(consts::EdpCase::N3Case {
        mu4: cfg.mu4,
        n_max: cfg.n_max,
        radius: cfg.radius_r,
        l_d: cfg.l_d,
        a: cfg.a_ball,
        dim: cfg.dim,
        k: cfg.k,
    }) {
        sc.c3 = c.c3;
        sc.c4 = c.c4;
        sc.c5 = c.c5;
    }
    sc.beta = consts::tedp_beta(
        cfg.l_i,
        cfg.theta_min,
        cfg.theta_max,
        cfg.n_max_gamma_i,
        cfg.a_i_ball,
        cfg.k,
    )
    .ok();
    let boundary = TedpBoundary {
        l_i: cfg.l_i,
        a_i: cfg.a_i_ball,
        theta_min: cfg.theta_min,
        theta_max: cfg.theta_max,
        n_max_gamma_i: cfg.n_max_gamma_i,
    };
    sc.tedp = consts::tedp_constants(
        TedpCase::PartA1 { mu1: cfg.mu1, mu2: cfg.mu2 },
        boundary,
        cfg.dim,
        cfg.k,
    )
    .ok();
    sc.infsup_lower = sc.c1.and_then(|c1| {
        consts::infsup_lower_bound(
            cfg.a_min,
            cfg.n_min,
            cfg.n_max,
            cfg.mu1.min(cfg.mu2),
            c1,
            cfg.k,
        )
        .ok()
    });
    let inputs = [
        ("k", cfg.k),
        ("d", cfg.dim as f64),
        ("R", cfg.radius_r),
        ("mu1", cfg.mu1),
        ("mu2", cfg.mu2),
        ("mu3", cfg.mu3),
        ("mu4", cfg.mu4),
        ("A_min", cfg.a_min),
        ("A_max", cfg.a_max),
        ("n_min", cfg.n_min),
        ("n_max", cfg.n_max),
        ("n_max_gamma_i", cfg.n_max_gamma_i),
        ("theta_min", cfg.theta_min),
        ("theta_max", cfg.theta_max),
        ("L_I", cfg.l_i),
        ("L_D", cfg.l_d),
        ("a", cfg.a_ball),
        ("a_I", cfg.a_i_ball),
        ("a_D", cfg.a_d_ball),
    ];
    sc.inputs_echo = inputs.iter().map(|(n, v)| (n.to_string(), *v)).collect();
    sc
}

/// Flat JSON-like report of every constant computable from the configured
/// inputs, with the inputs echoed.
pub fn constants_report(cfg: &RunConfig) -> String {
    let sc = collect_constants(cfg);
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"inputs\": {{");
    for (i, (name, value)) in sc.inputs_echo.iter().enumerate() {
        let comma = if i + 1 == sc.inputs_echo.len() { "" } else { "," };
        let _ = writeln!(out, "    \"{name}\": {value}{comma}");
    }
    let _ = writeln!(out, "  }},");

    fn emit_into(out: &mut String, name: &str, value: Option<f64>) {
        match value {
            Some(v) => {
                let _ = writeln!(out, "  \"{name}\": {v},");
            }
            None => {
                let _ = writeln!(out, "  \"{name}\": null,");
            }
        }
    }
    emit_into(&mut out, "C1", sc.c1);
    emit_into(&mut out, "C2", sc.c2);
    emit_into(&mut out, "C3", sc.c3);
    emit_into(&mut out, "C4", sc.c4);
    emit_into(&mut out, "C5", sc.c5);
    emit_into(&mut out, "beta", sc.beta);
    if let Some(tedp) = &sc.tedp {
        emit_into(&mut out, "tedp_part_i_C1", tedp.c1);
        emit_into(&mut out, "tedp_C1_tilde", tedp.c1_tilde);
    } else {
        emit_into(&mut out, "tedp_part_i_C1", None);
        emit_into(&mut out, "tedp_C1_tilde", None);
    }
    let boundary = TedpBoundary {
        l_i: cfg.l_i,
        a_i: cfg.a_i_ball,
        theta_min: cfg.theta_min,
        theta_max: cfg.theta_max,
        n_max_gamma_i: cfg.n_max_gamma_i,
    };
    match consts::tedp_constants(
        TedpCase::PartA2 { mu3: cfg.mu3, a_max: cfg.a_max },
        boundary,
        cfg.dim,
        cfg.k,
    ) {
        Ok(c) => {
            emit_into(&mut out, "tedp_part_ii_C2", c.c2);
            emit_into(&mut out, "tedp_C2_tilde", c.c2_tilde);
        }
        Err(_) => {
            emit_into(&mut out, "tedp_part_ii_C2", None);
            emit_into(&mut out, "tedp_C2_tilde", None);
        }
    }
    match consts::tedp_constants(
        TedpCase::PartN3 {
            mu4: cfg.mu4,
            n_max: cfg.n_max,
            l_d: cfg.l_d,
            a_d: cfg.a_d_ball,
        },
        boundary,
        cfg.dim,
        cfg.k,
    ) {
        Ok(c) => {
            emit_into(&mut out, "tedp_part_n3_C3", c.c3);
            emit_into(&mut out, "tedp_C3_tilde", c.c3_tilde);
            emit_into(&mut out, "tedp_part_n3_C4", c.c4);
            emit_into(&mut out, "tedp_part_n3_C5", c.c5);
            if let Some(note) = c.label_note {
                let _ = writeln!(out, "  \"tedp_part_n3_note\": \"{note}\",");
            }
        }
        Err(_) => {
            emit_into(&mut out, "tedp_part_n3_C3", None);
            emit_into(&mut out, "tedp_C3_tilde", None);
            emit_into(&mut out, "tedp_part_n3_C4", None);
            emit_into(&mut out, "tedp_part_n3_C5", None);
        }
    }
    emit_into(&mut out, "infsup_lower_bound", sc.infsup_lower);
    let cutoff = consts::verify_cutoff_properties(100_001);
    let _ = writeln!(out, "  \"cutoff_sup_Fp2_over_F\": {},", cutoff.sup_fp2_over_f);
    let _ = writeln!(out, "  \"cutoff_sup_Fp2_over_F_2mF\": {}", cutoff.sup_fp2_over_f2mf);
    let _ = writeln!(out, "}}");
    out
}
