//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (visible with `cargo test -- --nocapture`).
//!
//! Run with `cargo test -p helmbound --test acceptance`.

use std::path::PathBuf;
use std::time::Instant;

use helmbound::config::parse_config;
use helmbound::families::{build_domain, build_family};
use helmbound::harness;
use helmbound::run::run;
use helmbound_core::coeff::{
    check_condition_n3, CoefficientField, GradientRoute, RadialProfile, SamplingSpec,
};
use helmbound_core::consts;
use helmbound_core::fem::manufactured_plane_wave_convergence;
use helmbound_core::geom::{DomainSpec, Polygon};
use helmbound_core::la;
use helmbound_core::morawetz::{
    integrated_identity_check, pointwise_identity_residual, random_instance, tangential_split,
    DivergenceRoute, MultiplierSpec, SmoothMatrix, SmoothScalar, TestField,
};
use helmbound_core::rand::SplitMix64;
use helmbound_core::rays::{
    classify_trapping, equilibrium_radius, escape_bound, integrate_ray,
    verify_convexity_identity, RayState, StepControl, Verdict,
};

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn temp_out(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("helmbound_acceptance_{}_{}", std::process::id(), tag))
}

#[test]
fn criterion_01_pointwise_identity_suite() {
    let t0 = Instant::now();
    let mut max_residual_2d: f64 = 0.0;
    let mut max_residual_3d: f64 = 0.0;
    let mut rng = SplitMix64::new(20_260_808);
    for _ in 0..100 {
        let inst = random_instance::<2>(&mut rng);
        let x = [rng.range(-2.0, 2.0), rng.range(-2.0, 2.0)];
        let r = pointwise_identity_residual(
            &inst.v,
            &inst.a,
            &inst.n,
            &inst.spec,
            &x,
            DivergenceRoute::Analytic,
        );
        max_residual_2d = max_residual_2d.max(r);
    }
    for _ in 0..100 {
        let inst = random_instance::<3>(&mut rng);
        let x = [rng.range(-2.0, 2.0), rng.range(-2.0, 2.0), rng.range(-2.0, 2.0)];
        let r = pointwise_identity_residual(
            &inst.v,
            &inst.a,
            &inst.n,
            &inst.spec,
            &x,
            DivergenceRoute::Analytic,
        );
        max_residual_3d = max_residual_3d.max(r);
    }
    assert!(max_residual_2d <= 1e-10, "2d max residual {max_residual_2d:e}");
    assert!(max_residual_3d <= 1e-10, "3d max residual {max_residual_3d:e}");

    // finite-difference divergence route: Richardson slope 2.0 +- 0.3
    let mut slopes = Vec::new();
    for _ in 0..5 {
        let inst = random_instance::<2>(&mut rng);
        let x = [rng.range(-1.5, 1.5), rng.range(-1.5, 1.5)];
        let res = |h: f64| {
            pointwise_identity_residual(
                &inst.v,
                &inst.a,
                &inst.n,
                &inst.spec,
                &x,
                DivergenceRoute::FiniteDifference { h },
            )
        };
        let (e1, e2, e3) = (res(1e-2), res(5e-3), res(2.5e-3));
        slopes.push((e1 / e2).log2());
        slopes.push((e2 / e3).log2());
    }
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    assert!((mean - 2.0).abs() <= 0.3, "FD Richardson slope {mean} (all {slopes:?})");
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 30, "criterion 1 runtime {dt:?} exceeds 30 s");
    println!(
        "ACCEPTANCE criterion 1: PASS - identity residuals 2d {max_residual_2d:.2e}, \
         3d {max_residual_3d:.2e} (tol 1e-10); FD slope {mean:.2}; runtime {dt:?}"
    );
}

#[test]
fn criterion_02_tangential_operator_suite() {
    let t0 = Instant::now();
    let mut rng = SplitMix64::new(7_777);
    let mut max_tan: f64 = 0.0;
    let mut max_split: f64 = 0.0;
    for trial in 0..100 {
        // random SPD A (diagonally dominant perturbation of I), random
        // complex gradient, random direction
        if trial % 2 == 0 {
            let (t, s) = random_split::<2>(&mut rng);
            max_tan = max_tan.max(t);
            max_split = max_split.max(s);
        } else {
            let (t, s) = random_split::<3>(&mut rng);
            max_tan = max_tan.max(t);
            max_split = max_split.max(s);
        }
    }
    assert!(max_tan <= 1e-13, "max |T.nu| = {max_tan:e}");
    assert!(max_split <= 1e-12, "max energy-split residual = {max_split:e}");
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 5, "criterion 2 runtime {dt:?} exceeds 5 s");
    println!(
        "ACCEPTANCE criterion 2: PASS - max |T.nu| {max_tan:.2e} (tol 1e-13), energy split \
         {max_split:.2e} (tol 1e-12); runtime {dt:?}"
    );
}

fn random_split<const D: usize>(rng: &mut SplitMix64) -> (f64, f64) {
    let mut a = la::identity::<D>();
    for i in 0..D {
        for j in i..D {
            let p = rng.range(-0.25, 0.25);
            a[i][j] += p;
            a[j][i] = a[i][j];
        }
    }
    let nu: [f64; D] = rng.unit_vector();
    let mut g = [helmbound_core::c64(0.0, 0.0); D];
    for gd in g.iter_mut() {
        *gd = helmbound_core::c64(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0));
    }
    let split = tangential_split(&g, &a, &nu);
    let mut t_nu = helmbound_core::c64(0.0, 0.0);
    for d in 0..D {
        t_nu += split.t[d] * nu[d];
    }
    // <A g, g> = <A^-1 T, T> + |conormal|^2 / nu_quad
    let ag = la::mat_cvec(&a, &g);
    let mut lhs = 0.0;
    for d in 0..D {
        lhs += (ag[d] * g[d].conj()).re;
    }
    let ainv = la::inverse(&a).unwrap();
    let at = la::mat_cvec(&ainv, &split.t);
    let mut rhs = split.conormal.norm_sqr() / split.nu_quad;
    for d in 0..D {
        rhs += (at[d] * split.t[d].conj()).re;
    }
    (t_nu.norm(), (lhs - rhs).abs())
}

#[test]
fn criterion_03_integrated_identity() {
    let t0 = Instant::now();
    let k = 1.3;
    let v = TestField::<2>::modulated_plane_wave(k, [0.8, 0.6], 0.25, [1.1, -0.5], 0.4);
    let a = SmoothMatrix::identity_plus_sinusoids(vec![(0.2, [1.2, 0.7], 0.3, [0.6, 0.8])]);
    let n = SmoothScalar::sinusoid(1.0, 0.25, [0.8, 1.0], 0.2);
    let spec = MultiplierSpec {
        alpha: SmoothScalar::constant(0.5),
        beta: SmoothScalar::sinusoid(1.0, 0.3, [0.5, 0.4], 0.1),
        k,
    };
    let domain = DomainSpec::new(
        Polygon::square(1.0).unwrap(),
        Some(Polygon::square(0.3).unwrap()),
    )
    .unwrap();
    // residual decays with quadrature refinement; finest level must beat 1e-6
    let mut last = f64::INFINITY;
    let mut decayed = true;
    for level in 2..=5 {
        let chk = integrated_identity_check(&v, &a, &n, &spec, &domain, level).unwrap();
        if level > 2 && chk.relative_residual > last {
            decayed = false;
        }
        last = chk.relative_residual;
    }
    assert!(last < 1e-6, "finest-level relative residual {last:e}");
    assert!(decayed || last < 1e-12, "residual did not decay under refinement");
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 60, "criterion 3 runtime {dt:?} exceeds 1 min");
    println!(
        "ACCEPTANCE criterion 3: PASS - integrated identity relative residual {last:.2e} \
         (tol 1e-6) on the square annulus; runtime {dt:?}"
    );
}

#[test]
fn criterion_04_constants() {
    let t0 = Instant::now();
    let c1 = consts::constant_c1(1.0, 1.0, 1.0, 3, 1.0).unwrap();
    assert_eq!(c1, 20.0, "C1(1,1,1,3,1) must be exactly 20");
    let beta = consts::tedp_beta(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    assert_eq!(beta, 9.0, "all-ones beta must be exactly 9");
    let cutoff = consts::verify_cutoff_properties(1_000_001);
    assert!((cutoff.sup_fp2_over_f - 12.0).abs() <= 1e-9, "sup (F')^2/F = {}", cutoff.sup_fp2_over_f);
    assert!(
        (cutoff.sup_fp2_over_f2mf - 6.0).abs() <= 1e-9,
        "sup (F')^2/(F(2-F)) = {}",
        cutoff.sup_fp2_over_f2mf
    );
    assert_eq!(cutoff.argmax_fp2_over_f, 0.0);
    assert_eq!(cutoff.argmax_fp2_over_f2mf, 0.0);
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 1, "criterion 4 runtime {dt:?} exceeds 1 s");
    println!(
        "ACCEPTANCE criterion 4: PASS - C1 = {c1}, beta = {beta}, cutoff sups = ({}, {}); \
         runtime {dt:?}",
        cutoff.sup_fp2_over_f, cutoff.sup_fp2_over_f2mf
    );
}

#[test]
fn criterion_05_manufactured_convergence() {
    let t0 = Instant::now();
    let report =
        manufactured_plane_wave_convergence(5.0, [1.0, 0.0], 0.5, &[0.1, 0.05, 0.025]).unwrap();
    assert!(
        (report.l2_slope - 2.0).abs() <= 0.2,
        "L2 slope {} (rows {:?})",
        report.l2_slope,
        report.rows
    );
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 120, "criterion 5 runtime {dt:?} exceeds 2 min");
    println!(
        "ACCEPTANCE criterion 5: PASS - manufactured plane wave at k=5: L2 slope {:.3}, \
         H1 slope {:.3}; runtime {dt:?}",
        report.l2_slope, report.h1_slope
    );
}

#[test]
fn criterion_06_headline_bound_sweep() {
    let t0 = Instant::now();
    let text = std::fs::read_to_string(config_path("acceptance_sweep.cfg")).unwrap();
    let cfg = parse_config(&text).unwrap();
    assert_eq!(cfg.k_list, vec![1.0, 2.0, 4.0, 8.0, 16.0]);
    let family = build_family(&cfg).unwrap();
    let domain = build_domain(&cfg).unwrap();
    let outcome = harness::k_sweep_bound_check(&cfg, &family, &domain).unwrap();
    assert!(outcome.condition.holds);
    assert_eq!(outcome.mu1, 1.0);
    assert_eq!(outcome.mu2, 0.5);
    for row in &outcome.rows {
        assert!(
            row.ratio <= 1.10,
            "k = {}: ratio {} exceeds 1.10 (lhs {}, C1 {}, |f|^2 {})",
            row.k,
            row.ratio,
            row.weighted_lhs,
            row.constant_used,
            row.f_norm2
        );
        assert_eq!(row.pass, Some(true));
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 600, "criterion 6 runtime {dt:?} exceeds 10 min");
    let worst = outcome.rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    println!(
        "ACCEPTANCE criterion 6: PASS - transmission sweep k in {{1,2,4,8,16}}, worst ratio \
         {worst:.3e} <= 1.10; runtime {dt:?}"
    );
}

#[test]
fn criterion_07_trapping_dichotomy() {
    let t0 = Instant::now();
    // trapping side: bump profile, tangential launch at the 2n + r n' = 0
    // radius, confined for the whole budget s = 1e3 * R with R = 6
    let profile = RadialProfile::GaussianBump { amp: 2.0, center: 3.0, width: 1.0 };
    let radius = 6.0;
    let s_budget = 1e3 * radius;
    let r_star = equilibrium_radius(&profile, 3.05, 4.0).unwrap();
    let n_bump = CoefficientField::<2>::radial(profile);
    let launch = RayState::on_null_shell(&n_bump, [r_star, 0.0], [0.0, 1.0]);
    let ctrl = StepControl { ds: 0.01, record_stride: 500, ..Default::default() };
    let trace = integrate_ray(&n_bump, &launch, s_budget, &ctrl, Some(1.01 * radius)).unwrap();
    assert!(!trace.escaped, "equilibrium orbit escaped");
    assert!(trace.max_null_drift < 1e-6, "drift {:e}", trace.max_null_drift);
    assert!(trace.max_radius < radius);

    // nontrapping side: a profile certified mu4 > 0 has every ray out before
    // the derived escape bound
    let n_well = CoefficientField::<2>::radial(RadialProfile::SmoothWell { depth: 0.5, r0: 2.0 });
    let spec = SamplingSpec::<2>::for_support(2.0).with_density(24.0, 1024);
    let n3 = check_condition_n3(&n_well, &spec, GradientRoute::Auto).unwrap();
    assert!(n3.holds, "smooth well must satisfy the 2n + x.grad n condition");
    let mu4 = n3.margins[0];
    let r_free = 2.5;
    let report = classify_trapping(
        &n_well,
        r_free,
        100,
        1e3 * r_free,
        &StepControl { ds: 0.005, record_stride: 100, ..Default::default() },
        Some(mu4),
    )
    .unwrap();
    assert_eq!(report.verdict, Verdict::NontrappingEvidence);
    let bound = report.escape_bound.unwrap();
    assert!((bound - escape_bound(mu4, r_free, n_well.n_max)).abs() < 1e-12);
    for ray in &report.rays {
        assert!(ray.escaped);
        let s = ray.escape_s.unwrap();
        assert!(s < bound, "escape at s = {s} bound {bound}");
    }
    assert!(report.max_null_drift < 1e-6, "ensemble drift {:e}", report.max_null_drift);
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 120, "criterion 7 runtime {dt:?} exceeds 2 min");
    println!(
        "ACCEPTANCE criterion 7: PASS - bump orbit trapped for s = {s_budget} (drift \
         {:.2e}); certified mu4 = {mu4:.3} profile: 100/100 rays out before S(R) = \
         {bound:.3}; runtime {dt:?}",
        trace.max_null_drift
    );
}

#[test]
fn criterion_08_convexity_identity_along_rays() {
    let t0 = Instant::now();
    // trapped arc on the bump profile: launch near (not at) the equilibrium
    // radius so the radial oscillation is nontrivial
    let profile = RadialProfile::GaussianBump { amp: 2.0, center: 3.0, width: 1.0 };
    let r_star = equilibrium_radius(&profile, 3.05, 4.0).unwrap();
    let n = CoefficientField::<2>::radial(profile);
    let launch = RayState::on_null_shell(&n, [r_star + 0.25, 0.0], [0.0, 1.0]);
    let deviation = |stride: usize| {
        let ctrl = StepControl { ds: 5e-4, record_stride: stride, ..Default::default() };
        let trace = integrate_ray(&n, &launch, 4.0, &ctrl, None).unwrap();
        verify_convexity_identity(&trace, &n).unwrap().max_deviation
    };
    let e1 = deviation(400);
    let e2 = deviation(200);
    let e3 = deviation(100);
    let s1 = (e1 / e2).log2();
    let s2 = (e2 / e3).log2();
    assert!((s1 - 2.0).abs() <= 0.3, "slope {s1} ({e1:e} -> {e2:e})");
    assert!((s2 - 2.0).abs() <= 0.3, "slope {s2} ({e2:e} -> {e3:e})");
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 60, "criterion 8 runtime {dt:?} exceeds 1 min");
    println!(
        "ACCEPTANCE criterion 8: PASS - second differences of |x|^2/2 match 2(2n + x.grad n) \
         with Richardson slopes {s1:.2}, {s2:.2}; runtime {dt:?}"
    );
}

#[test]
fn criterion_09_mollification() {
    let t0 = Instant::now();
    let text = std::fs::read_to_string(config_path("mollify_step.cfg")).unwrap();
    let cfg = parse_config(&text).unwrap();
    let family = build_family(&cfg).unwrap();
    let n_min = family.n.n_min;
    assert_eq!(n_min, 0.5);
    let outcome = harness::mollification_study(&cfg, &family.n).unwrap();
    assert!(
        (outcome.slope - 0.5).abs() <= 0.15,
        "L2 distance slope {} (rows {:?})",
        outcome.slope,
        outcome.rows
    );
    let mut prev = f64::INFINITY;
    for row in &outcome.rows {
        assert!(row.l2_distance < prev, "distance not decreasing in delta");
        prev = row.l2_distance;
        assert!(
            row.mu2_margin >= n_min - 1e-9,
            "delta {}: mu2 margin {} below n_min - 1e-9",
            row.delta,
            row.mu2_margin
        );
        assert!(row.monotone_margin >= -1e-9);
        assert!(row.min_value >= n_min - 1e-9);
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 60, "criterion 9 runtime {dt:?} exceeds 1 min");
    println!(
        "ACCEPTANCE criterion 9: PASS - step-field mollification: L2 slope {:.3} (0.5 +- \
         0.15), margins >= n_min - 1e-9; runtime {dt:?}",
        outcome.slope
    );
}

#[test]
fn criterion_10_determinism() {
    let t0 = Instant::now();
    // run the full acceptance pipeline twice into fresh directories and
    // byte-compare every artifact
    let artifacts = [
        ("acceptance_sweep.cfg", vec!["sweep.csv", "sweep_summary.txt"]),
        ("rays_free.cfg", vec!["trajectories.csv", "rays_verdict.txt"]),
        ("mollify_step.cfg", vec!["mollify.csv", "mollify_summary.txt"]),
    ];
    for (config_name, files) in &artifacts {
        let text = std::fs::read_to_string(config_path(config_name)).unwrap();
        let mut pass_bytes: Vec<Vec<u8>> = Vec::new();
        for round in 0..2 {
            let mut cfg = parse_config(&text).unwrap();
            let out = temp_out(&format!("det_{config_name}_{round}"));
            let _ = std::fs::remove_dir_all(&out);
            cfg.out_dir = out.to_string_lossy().into_owned();
            let code = run(&cfg, true).unwrap();
            assert_eq!(code, 0, "{config_name} round {round} exited {code}");
            let mut blob = Vec::new();
            for f in files {
                blob.extend_from_slice(&std::fs::read(out.join(f)).unwrap());
            }
            pass_bytes.push(blob);
            let _ = std::fs::remove_dir_all(&out);
        }
        assert_eq!(
            pass_bytes[0], pass_bytes[1],
            "{config_name}: artifacts differ between identical runs"
        );
    }
    let dt = t0.elapsed();
    println!(
        "ACCEPTANCE criterion 10: PASS - identical config + seed reproduces every artifact \
         byte-for-byte; runtime {dt:?}"
    );
}
