//! Explicit stability constants for the heterogeneous Helmholtz a priori
//! bounds, for both the exterior problem and its impedance-truncated
//! computational form, plus the cutoff-function properties the proofs rely on.

use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub enum ConstsError {
    /// An input that must be strictly positive was not.
    NonPositive { name: &'static str, value: f64 },
    /// Dimension outside {2, 3}.
    BadDimension(usize),
    /// k below the sqrt(3/8)/R threshold required by the N3-case bounds.
    WavenumberBelowThreshold { k: f64, threshold: f64 },
    /// Argument outside the domain of the cutoff function.
    OutOfRange { name: &'static str, value: f64 },
}

impl core::fmt::Display for ConstsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ConstsError::NonPositive { name, value } => {
                write!(f, "input `{name}` must be positive, got {value}")
            }
            ConstsError::BadDimension(d) => write!(f, "dimension must be 2 or 3, got {d}"),
            ConstsError::WavenumberBelowThreshold { k, threshold } => write!(
                f,
                "k = {k} is below the admissible threshold sqrt(3/8)/R = {threshold} for the N3-case bound"
            ),
            ConstsError::OutOfRange { name, value } => {
                write!(f, "`{name}` = {value} outside the admissible range")
            }
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<f64, ConstsError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ConstsError::NonPositive { name, value })
    }
}

fn check_dim(d: usize) -> Result<f64, ConstsError> {
    if d == 2 || d == 3 {
        Ok(d as f64)
    } else {
        Err(ConstsError::BadDimension(d))
    }
}

/// `C1 = 4 [ R^2/mu1 + (R + (d-1)/(2k))^2 / mu2 ]`, the constant of the
/// exterior bound `mu1 |grad u|^2 + mu2 k^2 |u|^2 <= C1 |f|^2`.
pub fn constant_c1(mu1: f64, mu2: f64, radius: f64, dim: usize, k: f64) -> Result<f64, ConstsError> {
    let mu1 = positive("mu1", mu1)?;
    let mu2 = positive("mu2", mu2)?;
    let r = positive("R", radius)?;
    let d = check_dim(dim)?;
    let k = positive("k", k)?;
    Ok(4.0 * (r * r / mu1 + (r + (d - 1.0) / (2.0 * k)).powi(2) / mu2))
}

/// Inputs for the exterior-problem constants under the two single-coefficient
/// conditions (2A - x.grad A >= mu3 with n = 1, or A = I with
/// 2n + x.grad n >= mu4).
#[derive(Debug, Clone, Copy)]
pub enum EdpCase {
    A2Case { mu3: f64, a_max: f64, radius: f64, dim: usize, k: f64 },
    N3Case { mu4: f64, n_max: f64, radius: f64, l_d: f64, a: f64, dim: usize, k: f64 },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EdpConstants {
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub c5: Option<f64>,
}

/// Constants of the exterior-problem bounds for the A2/N3 coefficient cases.
/// The N3 case requires `k >= sqrt(3/8)/R`.
pub fn constants_edp(case: EdpCase) -> Result<EdpConstants, ConstsError> {
    match case {
        EdpCase::A2Case { mu3, a_max, radius, dim, k } => {
            let mu3 = positive("mu3", mu3)?;
            let a_max = positive("A_max", a_max)?;
            let r = positive("R", radius)?;
            let d = check_dim(dim)?;
            let k = positive("k", k)?;
            let bracket = r * r + (r + 1.0 + d / (2.0 * k)).powi(2);
            let factor = 1.0 + 4.0 * a_max + 24.0 * a_max * a_max / (k * k);
            let c2 = 4.0 / mu3 * bracket * factor * factor + 4.0 * mu3 / (k * k);
            Ok(EdpConstants { c2: Some(c2), ..Default::default() })
        }
        EdpCase::N3Case { mu4, n_max, radius, l_d, a, dim, k } => {
            let mu4 = positive("mu4", mu4)?;
            let n_max = positive("n_max", n_max)?;
            let r = positive("R", radius)?;
            let l_d = positive("L_D", l_d)?;
            let a = positive("a", a)?;
            let d = check_dim(dim)?;
            let k = positive("k", k)?;
            let threshold = (3.0 / 8.0).sqrt() / r;
            if k < threshold {
                return Err(ConstsError::WavenumberBelowThreshold { k, threshold });
            }
            let reach = 2.0 * r + (d - 2.0) / (2.0 * k);
            let amp = 1.0 + 1.5 * n_max;
            let c3 = 4.0 / mu4 * (r * r + reach * reach) * amp * amp + 2.0 * mu4 / (k * k * n_max);
            let c4 = 2.0 * amp * l_d * (1.0 + 4.0 / a);
            let c5 = 2.0 * amp * 4.0 / (a * l_d) * reach * reach + 2.0 * mu4 * mu4 / (a * l_d * k * k);
            Ok(EdpConstants { c3: Some(c3), c4: Some(c4), c5: Some(c5), c2: None })
        }
    }
}

/// The impedance-boundary multiplier weight
/// `beta = (L_I/theta_min) (1 + n_max_on_Gamma_I + 1/(k L_I)^2 + 2 theta_max^2 (1 + 2/a))`.
pub fn tedp_beta(
    l_i: f64,
    theta_min: f64,
    theta_max: f64,
    n_max_gamma_i: f64,
    a: f64,
    k: f64,
) -> Result<f64, ConstsError> {
    let l_i = positive("L_I", l_i)?;
    let theta_min = positive("theta_min", theta_min)?;
    let theta_max = positive("theta_max", theta_max)?;
    let n_max_gamma_i = positive("n_max_Gamma_I", n_max_gamma_i)?;
    let a = positive("a", a)?;
    let k = positive("k", k)?;
    let kl = k * l_i;
    Ok(l_i / theta_min
        * (1.0 + n_max_gamma_i + 1.0 / (kl * kl) + 2.0 * theta_max * theta_max * (1.0 + 2.0 / a)))
}

/// Impedance-boundary data shared by every truncated-problem constant.
#[derive(Debug, Clone, Copy)]
pub struct TedpBoundary {
    pub l_i: f64,
    /// Star-shape ball fraction of the truncation boundary (a_I).
    pub a_i: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub n_max_gamma_i: f64,
}

/// Which part of the truncated-problem bound family to evaluate. The third
/// part is conventionally numbered "(iv)" rather than "(iii)"; it is exposed
/// here as `PartN3` and the numbering note is carried in the report.
#[derive(Debug, Clone, Copy)]
pub enum TedpCase {
    /// Both coefficients vary: needs mu1, mu2.
    PartA1 { mu1: f64, mu2: f64 },
    /// A varies, n = 1: needs mu3 and A_max.
    PartA2 { mu3: f64, a_max: f64 },
    /// A = I, n varies, Dirichlet data allowed: needs mu4, n_max and the
    /// obstacle's star-shape data.
    PartN3 { mu4: f64, n_max: f64, l_d: f64, a_d: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct TedpConstants {
    pub beta: f64,
    pub c1: Option<f64>,
    pub c1_tilde: Option<f64>,
    pub c2: Option<f64>,
    pub c2_tilde: Option<f64>,
    pub c3: Option<f64>,
    pub c3_tilde: Option<f64>,
    pub c4: Option<f64>,
    pub c5: Option<f64>,
    /// Set for `PartN3`; records the conventional "(iv)" numbering of that part.
    pub label_note: Option<&'static str>,
}

fn c1_tilde(l_i: f64, a: f64, beta: f64, theta_min: f64, d: f64) -> f64 {
    2.0 * (2.0 * (1.0 + 2.0 / a) + beta / (theta_min * l_i) + (d - 1.0) * (d - 1.0) / 4.0) * l_i
}

/// Constants of the truncated-problem bounds, exactly as printed, with
/// `beta` from [`tedp_beta`].
pub fn tedp_constants(
    case: TedpCase,
    boundary: TedpBoundary,
    dim: usize,
    k: f64,
) -> Result<TedpConstants, ConstsError> {
    let d = check_dim(dim)?;
    let k = positive("k", k)?;
    let l_i = positive("L_I", boundary.l_i)?;
    let a = positive("a_I", boundary.a_i)?;
    let beta = tedp_beta(
        l_i,
        boundary.theta_min,
        boundary.theta_max,
        boundary.n_max_gamma_i,
        a,
        k,
    )?;
    let ct1 = c1_tilde(l_i, a, beta, boundary.theta_min, d);
    let mut out = TedpConstants { beta, ..Default::default() };
    match case {
        TedpCase::PartA1 { mu1, mu2 } => {
            let mu1 = positive("mu1", mu1)?;
            let mu2 = positive("mu2", mu2)?;
            out.c1 =
                Some(4.0 * (l_i * l_i / mu1 + (beta + (d - 1.0) / (2.0 * k)).powi(2) / mu2));
            out.c1_tilde = Some(ct1);
        }
        TedpCase::PartA2 { mu3, a_max } => {
            let mu3 = positive("mu3", mu3)?;
            let a_max = positive("A_max", a_max)?;
            let amp = 1.0 + 2.0 * a_max;
            out.c2 = Some(
                2.0 * (2.0 / mu3 * amp * amp * (l_i * l_i + (beta + d / (2.0 * k)).powi(2))
                    + mu3 / (k * k)),
            );
            out.c2_tilde = Some(amp * ct1 + 4.0 * mu3 * mu3 / (l_i * k * k));
            out.c1_tilde = Some(ct1);
        }
        TedpCase::PartN3 { mu4, n_max, l_d, a_d } => {
            let mu4 = positive("mu4", mu4)?;
            let n_max = positive("n_max", n_max)?;
            let l_d = positive("L_D", l_d)?;
            let a_d = positive("a_D", a_d)?;
            let amp = 1.0 + 1.5 * n_max;
            let reach = beta + (d - 2.0) / (2.0 * k);
            out.c3 = Some(
                2.0 * (2.0 / mu4 * amp * amp * (l_i * l_i + reach * reach)
                    + mu4 / (2.0 * k * k * n_max)),
            );
            out.c3_tilde = Some(amp * ct1 + 2.0 * mu4 * mu4 / (l_i * k * k));
            out.c4 = Some(2.0 * amp * l_d * (1.0 + 4.0 / a_d));
            out.c5 = Some(
                2.0 * (amp * 4.0 / (a_d * l_d) * reach * reach
                    + 2.0 * mu4 * mu4 / (a_d * l_d)),
            );
            out.c1_tilde = Some(ct1);
            out.label_note = Some("conventionally numbered part (iv)");
        }
    }
    Ok(out)
}

/// Lower bound on the inf-sup constant of the sesquilinear form:
/// `min(A_min, n_min) / (1 + 2 sqrt(C1/mu_min) n_max k)`.
pub fn infsup_lower_bound(
    a_min: f64,
    n_min: f64,
    n_max: f64,
    mu_min: f64,
    c1: f64,
    k: f64,
) -> Result<f64, ConstsError> {
    let a_min = positive("A_min", a_min)?;
    let n_min = positive("n_min", n_min)?;
    let n_max = positive("n_max", n_max)?;
    let mu_min = positive("mu_min", mu_min)?;
    let c1 = positive("C1", c1)?;
    let k = positive("k", k)?;
    Ok(a_min.min(n_min) / (1.0 + 2.0 * (c1 / mu_min).sqrt() * n_max * k))
}

/// The cutoff `F(t) = t^2 (3 - 2t)` and its derivative, on `[0, 1]`.
pub fn cutoff_f(t: f64) -> Result<(f64, f64), ConstsError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(ConstsError::OutOfRange { name: "t", value: t });
    }
    Ok((t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t)))
}

#[derive(Debug, Clone)]
pub struct CutoffReport {
    /// sup of `(F')^2 / F` over `[0, 1]`; equals 12, attained in the t -> 0 limit.
    pub sup_fp2_over_f: f64,
    pub argmax_fp2_over_f: f64,
    /// sup of (F')^2 / (F (2 - F)); equals 6, attained in the t -> 0 limit.
    pub sup_fp2_over_f2mf: f64,
    pub argmax_fp2_over_f2mf: f64,
    pub grid_points: usize,
}

/// Scans both cutoff ratios on a dense grid. The removable 0/0 at t = 0 is
/// handled through the simplified forms 36(1-t)^2/(3-2t) and
/// 36(1-t)^2/((3-2t)(2-F)), so the analytic limit points are included.
pub fn verify_cutoff_properties(grid_points: usize) -> CutoffReport {
    let n = grid_points.max(2);
    let mut report = CutoffReport {
        sup_fp2_over_f: f64::NEG_INFINITY,
        argmax_fp2_over_f: 0.0,
        sup_fp2_over_f2mf: f64::NEG_INFINITY,
        argmax_fp2_over_f2mf: 0.0,
        grid_points: n,
    };
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let omt = 1.0 - t;
        let f = t * t * (3.0 - 2.0 * t);
        let ratio1 = 36.0 * omt * omt / (3.0 - 2.0 * t);
        let ratio2 = 36.0 * omt * omt / ((3.0 - 2.0 * t) * (2.0 - f));
        if ratio1 > report.sup_fp2_over_f {
            report.sup_fp2_over_f = ratio1;
            report.argmax_fp2_over_f = t;
        }
        if ratio2 > report.sup_fp2_over_f2mf {
            report.sup_fp2_over_f2mf = ratio2;
            report.argmax_fp2_over_f2mf = t;
        }
    }
    report
}

/// Flat report of every constant computed for one configuration; consumed by
/// the CLI `constants` subcommand.
#[derive(Debug, Clone, Default)]
pub struct StabilityConstants {
    pub mu: [Option<f64>; 4],
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub c5: Option<f64>,
    pub tedp: Option<TedpConstants>,
    pub beta: Option<f64>,
    pub infsup_lower: Option<f64>,
    /// (name, value) input echo, in printing order.
    pub inputs_echo: Vec<(String, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c1_direct_values() {
        // 4 [1 + (1+1)^2] = 20
        assert_eq!(constant_c1(1.0, 1.0, 1.0, 3, 1.0).unwrap(), 20.0);
        // 4 [1 + 1.05^2] = 8.41
        assert!((constant_c1(1.0, 1.0, 1.0, 2, 10.0).unwrap() - 8.41).abs() < 1e-12);
    }

    #[test]
    fn c1_large_k_limit() {
        let limit = 4.0 * 1.0 * (1.0 / 1.0 + 1.0 / 1.0);
        let val = constant_c1(1.0, 1.0, 1.0, 2, 1e12).unwrap();
        assert!((val - limit).abs() < 1e-6);
    }

    #[test]
    fn c1_rejects_bad_inputs() {
        assert!(constant_c1(0.0, 1.0, 1.0, 2, 1.0).is_err());
        assert!(constant_c1(1.0, 1.0, -1.0, 2, 1.0).is_err());
        assert!(constant_c1(1.0, 1.0, 1.0, 4, 1.0).is_err());
    }

    #[test]
    fn edp_a2_value() {
        let c = constants_edp(EdpCase::A2Case { mu3: 1.0, a_max: 1.0, radius: 1.0, dim: 2, k: 10.0 })
            .unwrap();
        let expect = 4.0 * (1.0 + 2.1f64 * 2.1) * (5.24f64 * 5.24) + 0.04;
        assert!((c.c2.unwrap() - expect).abs() < 1e-9);
        assert!((expect - 594.222464).abs() < 1e-6);
    }

    #[test]
    fn edp_n3_values_match_hand_computation() {
        let c = constants_edp(EdpCase::N3Case {
            mu4: 1.0,
            n_max: 1.0,
            radius: 1.0,
            l_d: 0.5,
            a: 0.5,
            dim: 2,
            k: 1.0,
        })
        .unwrap();
        assert!((c.c3.unwrap() - 127.0).abs() < 1e-12);
        assert!((c.c4.unwrap() - 22.5).abs() < 1e-12);
        assert!((c.c5.unwrap() - 328.0).abs() < 1e-12);
    }

    #[test]
    fn edp_n3_rejects_small_k() {
        let err = constants_edp(EdpCase::N3Case {
            mu4: 1.0,
            n_max: 1.0,
            radius: 1.0,
            l_d: 0.5,
            a: 0.5,
            dim: 2,
            k: 0.1,
        })
        .unwrap_err();
        assert!(matches!(err, ConstsError::WavenumberBelowThreshold { .. }));
    }

    #[test]
    fn beta_values() {
        assert_eq!(tedp_beta(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap(), 9.0);
        // theta = 1, n = 1, a = 2, k -> inf: 1 + 1 + 0 + 2*2 = 6
        let b = tedp_beta(1.0, 1.0, 1.0, 1.0, 2.0, 1e12).unwrap();
        assert!((b - 6.0).abs() < 1e-10);
    }

    #[test]
    fn beta_homogeneous_in_l_i_at_fixed_kl() {
        let b1 = tedp_beta(1.0, 1.0, 1.0, 1.0, 1.0, 3.0).unwrap();
        let b2 = tedp_beta(2.0, 1.0, 1.0, 1.0, 1.0, 1.5).unwrap();
        assert!((b2 - 2.0 * b1).abs() < 1e-12);
    }

    fn all_ones_boundary() -> TedpBoundary {
        TedpBoundary { l_i: 1.0, a_i: 1.0, theta_min: 1.0, theta_max: 1.0, n_max_gamma_i: 1.0 }
    }

    #[test]
    fn tedp_part_a1_values() {
        let c = tedp_constants(
            TedpCase::PartA1 { mu1: 1.0, mu2: 1.0 },
            all_ones_boundary(),
            2,
            1.0,
        )
        .unwrap();
        assert_eq!(c.beta, 9.0);
        assert!((c.c1.unwrap() - 365.0).abs() < 1e-12);
        assert!((c.c1_tilde.unwrap() - 30.5).abs() < 1e-12);
    }

    #[test]
    fn tedp_part_a1_large_k_limit() {
        let c = tedp_constants(
            TedpCase::PartA1 { mu1: 1.0, mu2: 1.0 },
            all_ones_boundary(),
            2,
            1e10,
        )
        .unwrap();
        let beta_inf = 1.0 * (1.0 + 1.0 + 2.0 * (1.0 + 2.0));
        let limit = 4.0 * (1.0 + beta_inf * beta_inf);
        assert!((c.c1.unwrap() - limit).abs() < 1e-5);
    }

    #[test]
    fn tedp_part_a2_values_match_hand_computation() {
        let c = tedp_constants(
            TedpCase::PartA2 { mu3: 1.0, a_max: 1.0 },
            all_ones_boundary(),
            2,
            1.0,
        )
        .unwrap();
        // beta = 9; C2 = 2[2*9*(1 + 10^2) + 1] = 3638; C2~ = 3*30.5 + 4 = 95.5
        assert!((c.c2.unwrap() - 3638.0).abs() < 1e-11);
        assert!((c.c2_tilde.unwrap() - 95.5).abs() < 1e-12);
    }

    #[test]
    fn tedp_part_n3_values_match_hand_computation() {
        let c = tedp_constants(
            TedpCase::PartN3 { mu4: 1.0, n_max: 1.0, l_d: 0.5, a_d: 0.5 },
            all_ones_boundary(),
            2,
            1.0,
        )
        .unwrap();
        assert!((c.c3.unwrap() - 2051.0).abs() < 1e-11);
        assert!((c.c3_tilde.unwrap() - 78.25).abs() < 1e-12);
        assert!((c.c4.unwrap() - 22.5).abs() < 1e-12);
        assert!((c.c5.unwrap() - 6496.0).abs() < 1e-11);
        assert!(c.label_note.is_some());
    }

    #[test]
    fn infsup_bound_values() {
        let v = infsup_lower_bound(1.0, 1.0, 1.0, 1.0, 20.0, 1.0).unwrap();
        assert!((v - 1.0 / (1.0 + 2.0 * 20.0f64.sqrt())).abs() < 1e-15);
        // k -> 0 limit
        let v0 = infsup_lower_bound(0.7, 0.9, 1.0, 1.0, 20.0, 1e-14).unwrap();
        assert!((v0 - 0.7).abs() < 1e-10);
        // doubling n_max: bound(2 n_max) > bound(n_max)/2
        let v1 = infsup_lower_bound(1.0, 1.0, 1.0, 1.0, 20.0, 1.0).unwrap();
        let v2 = infsup_lower_bound(1.0, 1.0, 2.0, 1.0, 20.0, 1.0).unwrap();
        assert!(v2 > v1 / 2.0);
    }

    #[test]
    fn cutoff_values_and_sups() {
        let (f0, _) = cutoff_f(0.0).unwrap();
        let (f1, _) = cutoff_f(1.0).unwrap();
        let (fh, _) = cutoff_f(0.5).unwrap();
        assert_eq!(f0, 0.0);
        assert_eq!(f1, 1.0);
        assert_eq!(fh, 0.5);
        assert!(cutoff_f(-0.1).is_err());
        assert!(cutoff_f(1.1).is_err());

        let report = verify_cutoff_properties(100_001);
        assert!((report.sup_fp2_over_f - 12.0).abs() < 1e-9);
        assert!(report.argmax_fp2_over_f.abs() < 1e-12);
        assert!((report.sup_fp2_over_f2mf - 6.0).abs() < 1e-9);
        assert!(report.argmax_fp2_over_f2mf.abs() < 1e-12);
    }

    #[test]
    fn cutoff_ratios_match_definition_away_from_zero() {
        // the simplified ratios used by the verifier equal (F')^2/F and
        // (F')^2/(F(2-F)) pointwise for t > 0
        for i in 1..100 {
            let t = i as f64 / 100.0;
            let (f, fp) = cutoff_f(t).unwrap();
            let r1 = fp * fp / f;
            let r2 = fp * fp / (f * (2.0 - f));
            let s1 = 36.0 * (1.0 - t) * (1.0 - t) / (3.0 - 2.0 * t);
            let s2 = s1 / (2.0 - f);
            assert!((r1 - s1).abs() < 1e-10 * (1.0 + r1.abs()));
            assert!((r2 - s2).abs() < 1e-10 * (1.0 + r2.abs()));
        }
    }

    #[test]
    fn constants_monotone_in_k_and_r() {
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let k = 0.1 * (100.0f64 / 0.1).powf(i as f64 / 59.0);
            let c = constant_c1(1.0, 2.0, 1.5, 2, k).unwrap();
            assert!(c <= prev + 1e-12, "C1 not nonincreasing in k");
            prev = c;
        }
        let mut prev_r = 0.0;
        for i in 0..40 {
            let r = 0.5 + (10.0 - 0.5) * i as f64 / 39.0;
            let c = constant_c1(1.0, 2.0, r, 2, 3.0).unwrap();
            assert!(c >= prev_r - 1e-12, "C1 not nondecreasing in R");
            prev_r = c;
        }
    }

    #[test]
    fn k0_gives_uniform_upper_bound() {
        // every constant evaluated at k >= k0 is dominated by its k0 value
        let k0 = 0.8;
        let boundary = all_ones_boundary();
        let at = |k: f64| {
            let a = constant_c1(1.0, 1.0, 2.0, 3, k).unwrap();
            let b = constants_edp(EdpCase::A2Case { mu3: 0.5, a_max: 2.0, radius: 2.0, dim: 3, k })
                .unwrap()
                .c2
                .unwrap();
            let c = constants_edp(EdpCase::N3Case {
                mu4: 0.5,
                n_max: 2.0,
                radius: 2.0,
                l_d: 1.0,
                a: 0.5,
                dim: 3,
                k,
            })
            .unwrap();
            let t = tedp_constants(TedpCase::PartA1 { mu1: 1.0, mu2: 1.0 }, boundary, 3, k).unwrap();
            [a, b, c.c3.unwrap(), c.c5.unwrap(), t.c1.unwrap(), t.c1_tilde.unwrap()]
        };
        let cap = at(k0);
        for i in 1..=40 {
            let k = k0 * (1.0 + i as f64);
            for (v, c) in at(k).iter().zip(cap.iter()) {
                assert!(*v <= c + 1e-10 * c.abs());
            }
        }
    }

    #[test]
    fn perturbation_continuity() {
        // 1% input perturbation changes each constant by < 10%
        let base = constant_c1(1.0, 2.0, 1.5, 2, 3.0).unwrap();
        for (i, _) in [0; 4].iter().enumerate() {
            let mut args = [1.0, 2.0, 1.5, 3.0];
            args[i] *= 1.01;
            let v = constant_c1(args[0], args[1], args[2], 2, args[3]).unwrap();
            assert!((v - base).abs() / base < 0.1);
        }
        let b0 = tedp_beta(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        for i in 0..6 {
            let mut a = [1.0; 6];
            a[i] *= 1.01;
            let b = tedp_beta(a[0], a[1], a[2], a[3], a[4], a[5]).unwrap();
            assert!((b - b0).abs() / b0 < 0.1);
        }
    }
}
