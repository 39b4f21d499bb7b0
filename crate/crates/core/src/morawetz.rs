//! Machine-precision verification of the multiplier identities behind the
//! stability bounds: the pointwise identity for `2 Re(conj(Mv) L v)` with the
//! multiplier `Mv = x.grad v - i k beta v + alpha v`, its alpha/beta
//! sub-identities, the integrated form over a polygonal domain with the
//! tangential boundary decomposition, and the Morawetz-Ludwig identity for
//! the constant-coefficient operator.
//!
//! Every identity has two evaluation routes for the divergence term: an
//! analytic expansion (needs second derivatives of the test field) and
//! central finite differences of the flux vector. The FD route certifies the
//! analytic one at O(h^2).

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::geom::{build_mesh, DomainSpec, GeomError};
use crate::la::{self, CVector, Matrix, Vector};
use crate::quad::{bary_to_xy, gauss_legendre, tri_order5};
use crate::rand::SplitMix64;
use crate::{c64, C64};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub enum MorawetzError {
    /// Supplied derivatives disagree with finite differences at construction.
    DerivativeSelfCheckFailed { which: &'static str, relative_error: f64 },
    BadParameter(&'static str),
    Geometry(GeomError),
}

impl core::fmt::Display for MorawetzError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MorawetzError::DerivativeSelfCheckFailed { which, relative_error } => write!(
                f,
                "supplied {which} disagrees with finite differences (relative error {relative_error:e})"
            ),
            MorawetzError::BadParameter(w) => write!(f, "bad parameter: {w}"),
            MorawetzError::Geometry(e) => write!(f, "geometry error: {e}"),
        }
    }
}

impl From<GeomError> for MorawetzError {
    fn from(e: GeomError) -> Self {
        MorawetzError::Geometry(e)
    }
}

type CEval<const D: usize> = Arc<dyn Fn(&Vector<D>) -> C64 + Send + Sync>;
type CGrad<const D: usize> = Arc<dyn Fn(&Vector<D>) -> CVector<D> + Send + Sync>;
type CHess<const D: usize> = Arc<dyn Fn(&Vector<D>) -> [[C64; D]; D] + Send + Sync>;

/// A complex test field with analytic first and second derivatives; the
/// checked constructor cross-checks them against finite differences.
pub struct TestField<const D: usize> {
    value: CEval<D>,
    gradient: CGrad<D>,
    hessian: CHess<D>,
    pub description: String,
}

impl<const D: usize> Clone for TestField<D> {
    fn clone(&self) -> Self {
        TestField {
            value: self.value.clone(),
            gradient: self.gradient.clone(),
            hessian: self.hessian.clone(),
            description: self.description.clone(),
        }
    }
}

impl<const D: usize> TestField<D> {
    pub fn new(
        value: CEval<D>,
        gradient: CGrad<D>,
        hessian: CHess<D>,
        description: String,
        probes: &[Vector<D>],
    ) -> Result<Self, MorawetzError> {
        let field = TestField { value, gradient, hessian, description };
        field.self_check(probes)?;
        Ok(field)
    }

    fn self_check(&self, probes: &[Vector<D>]) -> Result<(), MorawetzError> {
        let h = 1e-4;
        for x in probes {
            let g = (self.gradient)(x);
            let hess = (self.hessian)(x);
            let mut scale: f64 = (self.value)(x).norm();
            for gd in g.iter() {
                scale = scale.max(gd.norm());
            }
            let scale = scale.max(1.0);
            for d in 0..D {
                let mut xp = *x;
                let mut xm = *x;
                xp[d] += h;
                xm[d] -= h;
                let fd = ((self.value)(&xp) - (self.value)(&xm)) / (2.0 * h);
                if (fd - g[d]).norm() > 1e-5 * scale {
                    return Err(MorawetzError::DerivativeSelfCheckFailed {
                        which: "gradient",
                        relative_error: (fd - g[d]).norm() / scale,
                    });
                }
                let gp = (self.gradient)(&xp);
                let gm = (self.gradient)(&xm);
                for e in 0..D {
                    let fd2 = (gp[e] - gm[e]) / (2.0 * h);
                    if (fd2 - hess[d][e]).norm() > 1e-4 * scale {
                        return Err(MorawetzError::DerivativeSelfCheckFailed {
                            which: "hessian",
                            relative_error: (fd2 - hess[d][e]).norm() / scale,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &Vector<D>) -> C64 {
        (self.value)(x)
    }

    pub fn grad(&self, x: &Vector<D>) -> CVector<D> {
        (self.gradient)(x)
    }

    pub fn hess(&self, x: &Vector<D>) -> [[C64; D]; D] {
        (self.hessian)(x)
    }

    pub fn constant(c: C64) -> Self {
        TestField {
            value: Arc::new(move |_| c),
            gradient: Arc::new(|_| [c64(0.0, 0.0); D]),
            hessian: Arc::new(|_| [[c64(0.0, 0.0); D]; D]),
            description: String::from("constant"),
        }
    }

    /// `v = x_axis`.
    pub fn coordinate(axis: usize) -> Self {
        TestField {
            value: Arc::new(move |x| c64(x[axis], 0.0)),
            gradient: Arc::new(move |_| {
                let mut g = [c64(0.0, 0.0); D];
                g[axis] = c64(1.0, 0.0);
                g
            }),
            hessian: Arc::new(|_| [[c64(0.0, 0.0); D]; D]),
            description: String::from("coordinate"),
        }
    }

    /// Plane wave `exp(i k d.x)` for a unit direction `d`.
    pub fn plane_wave(k: f64, dir: Vector<D>) -> Self {
        TestField {
            value: Arc::new(move |x| c64(0.0, k * la::dot(&dir, x)).exp()),
            gradient: Arc::new(move |x| {
                let e = c64(0.0, k * la::dot(&dir, x)).exp();
                let mut g = [c64(0.0, 0.0); D];
                for d in 0..D {
                    g[d] = e * c64(0.0, k * dir[d]);
                }
                g
            }),
            hessian: Arc::new(move |x| {
                let e = c64(0.0, k * la::dot(&dir, x)).exp();
                let mut h = [[c64(0.0, 0.0); D]; D];
                for i in 0..D {
                    for j in 0..D {
                        h[i][j] = e * c64(0.0, k * dir[i]) * c64(0.0, k * dir[j]);
                    }
                }
                h
            }),
            description: String::from("plane wave"),
        }
    }

    /// `exp(i k d.x) (1 + amp sin(w.x + phase))`.
    pub fn modulated_plane_wave(
        k: f64,
        dir: Vector<D>,
        amp: f64,
        w: Vector<D>,
        phase: f64,
    ) -> Self {
        let value = move |x: &Vector<D>| {
            c64(0.0, k * la::dot(&dir, x)).exp() * (1.0 + amp * (la::dot(&w, x) + phase).sin())
        };
        TestField {
            value: Arc::new(value),
            gradient: Arc::new(move |x| {
                let e = c64(0.0, k * la::dot(&dir, x)).exp();
                let arg = la::dot(&w, x) + phase;
                let (s, c) = (arg.sin(), arg.cos());
                let mut g = [c64(0.0, 0.0); D];
                for d in 0..D {
                    g[d] = e * (c64(0.0, k * dir[d]) * (1.0 + amp * s) + amp * c * w[d]);
                }
                g
            }),
            hessian: Arc::new(move |x| {
                let e = c64(0.0, k * la::dot(&dir, x)).exp();
                let arg = la::dot(&w, x) + phase;
                let (s, c) = (arg.sin(), arg.cos());
                let mut h = [[c64(0.0, 0.0); D]; D];
                for i in 0..D {
                    for j in 0..D {
                        let ikdi = c64(0.0, k * dir[i]);
                        let ikdj = c64(0.0, k * dir[j]);
                        h[i][j] = e
                            * (ikdi * ikdj * (1.0 + amp * s)
                                + ikdi * (amp * c * w[j])
                                + ikdj * (amp * c * w[i])
                                - amp * s * w[i] * w[j]);
                    }
                }
                h
            }),
            description: String::from("modulated plane wave"),
        }
    }

    /// Quadratic polynomial with complex coefficients: `c0 + cl.x + x^T Q x`.
    pub fn quadratic(c0: C64, cl: [C64; D], q: [[C64; D]; D]) -> Self {
        TestField {
            value: Arc::new(move |x| {
                let mut v = c0;
                for i in 0..D {
                    v += cl[i] * x[i];
                    for j in 0..D {
                        v += q[i][j] * x[i] * x[j];
                    }
                }
                v
            }),
            gradient: Arc::new(move |x| {
                let mut g = [c64(0.0, 0.0); D];
                for i in 0..D {
                    g[i] = cl[i];
                    for j in 0..D {
                        g[i] += (q[i][j] + q[j][i]) * x[j];
                    }
                }
                g
            }),
            hessian: Arc::new(move |_| {
                let mut h = [[c64(0.0, 0.0); D]; D];
                for i in 0..D {
                    for j in 0..D {
                        h[i][j] = q[i][j] + q[j][i];
                    }
                }
                h
            }),
            description: String::from("quadratic polynomial"),
        }
    }

    /// Outgoing cylindrical factor `exp(i k r) / sqrt(r)` (2-d far field).
    pub fn outgoing_cylindrical(k: f64) -> Self {
        let phi = move |r: f64| c64(0.0, k * r).exp() / r.sqrt();
        let dphi = move |r: f64| phi(r) * c64(-0.5 / r, k);
        let ddphi = move |r: f64| {
            let a = c64(-0.5 / r, k);
            phi(r) * (a * a + 0.5 / (r * r))
        };
        TestField {
            value: Arc::new(move |x| phi(la::norm(x))),
            gradient: Arc::new(move |x| {
                let r = la::norm(x);
                let d = dphi(r);
                let mut g = [c64(0.0, 0.0); D];
                for i in 0..D {
                    g[i] = d * (x[i] / r);
                }
                g
            }),
            hessian: Arc::new(move |x| {
                let r = la::norm(x);
                let d1 = dphi(r);
                let d2 = ddphi(r);
                let mut h = [[c64(0.0, 0.0); D]; D];
                for i in 0..D {
                    for j in 0..D {
                        let kron = if i == j { 1.0 } else { 0.0 };
                        h[i][j] = d2 * (x[i] * x[j] / (r * r))
                            + d1 * (kron / r - x[i] * x[j] / (r * r * r));
                    }
                }
                h
            }),
            description: String::from("outgoing cylindrical"),
        }
    }
}

type SEval<const D: usize> = Arc<dyn Fn(&Vector<D>) -> f64 + Send + Sync>;
type SGrad<const D: usize> = Arc<dyn Fn(&Vector<D>) -> Vector<D> + Send + Sync>;
type MEval<const D: usize> = Arc<dyn Fn(&Vector<D>) -> Matrix<D> + Send + Sync>;
type MGrad<const D: usize> = Arc<dyn Fn(&Vector<D>) -> [Matrix<D>; D] + Send + Sync>;

/// Real scalar field with analytic gradient (used for `n`, `alpha`, `beta`).
pub struct SmoothScalar<const D: usize> {
    value: SEval<D>,
    gradient: SGrad<D>,
}

impl<const D: usize> Clone for SmoothScalar<D> {
    fn clone(&self) -> Self {
        SmoothScalar { value: self.value.clone(), gradient: self.gradient.clone() }
    }
}

impl<const D: usize> SmoothScalar<D> {
    pub fn new(value: SEval<D>, gradient: SGrad<D>) -> Self {
        SmoothScalar { value, gradient }
    }

    pub fn constant(c: f64) -> Self {
        SmoothScalar { value: Arc::new(move |_| c), gradient: Arc::new(|_| [0.0; D]) }
    }

    /// `c0 + amp sin(w.x + phase)`.
    pub fn sinusoid(c0: f64, amp: f64, w: Vector<D>, phase: f64) -> Self {
        SmoothScalar {
            value: Arc::new(move |x| c0 + amp * (la::dot(&w, x) + phase).sin()),
            gradient: Arc::new(move |x| la::scale(&w, amp * (la::dot(&w, x) + phase).cos())),
        }
    }

    /// `beta(x) = |x|` with gradient `x/|x|` (Morawetz-Ludwig weight).
    pub fn radius() -> Self {
        SmoothScalar {
            value: Arc::new(|x| la::norm(x)),
            gradient: Arc::new(|x| la::scale(x, 1.0 / la::norm(x))),
        }
    }

    pub fn eval(&self, x: &Vector<D>) -> f64 {
        (self.value)(x)
    }

    pub fn grad(&self, x: &Vector<D>) -> Vector<D> {
        (self.gradient)(x)
    }
}

/// Real symmetric matrix field with analytic partial derivatives.
pub struct SmoothMatrix<const D: usize> {
    value: MEval<D>,
    gradient: MGrad<D>,
}

impl<const D: usize> Clone for SmoothMatrix<D> {
    fn clone(&self) -> Self {
        SmoothMatrix { value: self.value.clone(), gradient: self.gradient.clone() }
    }
}

impl<const D: usize> SmoothMatrix<D> {
    pub fn new(value: MEval<D>, gradient: MGrad<D>) -> Self {
        SmoothMatrix { value, gradient }
    }

    pub fn identity() -> Self {
        SmoothMatrix {
            value: Arc::new(|_| la::identity()),
            gradient: Arc::new(|_| [[[0.0; D]; D]; D]),
        }
    }

    /// `I + sum_m c_m sin(w_m.x + phase_m) (u_m u_m^T)`; SPD as long as
    /// `sum |c_m| < 1`.
    pub fn identity_plus_sinusoids(terms: Vec<(f64, Vector<D>, f64, Vector<D>)>) -> Self {
        let t2 = terms.clone();
        SmoothMatrix {
            value: Arc::new(move |x| {
                let mut m = la::identity::<D>();
                for (c, w, phase, u) in &terms {
                    let s = c * (la::dot(w, x) + phase).sin();
                    for i in 0..D {
                        for j in 0..D {
                            m[i][j] += s * u[i] * u[j];
                        }
                    }
                }
                m
            }),
            gradient: Arc::new(move |x| {
                let mut g = [[[0.0; D]; D]; D];
                for (c, w, phase, u) in &t2 {
                    let cc = c * (la::dot(w, x) + phase).cos();
                    for d in 0..D {
                        for i in 0..D {
                            for j in 0..D {
                                g[d][i][j] += cc * w[d] * u[i] * u[j];
                            }
                        }
                    }
                }
                g
            }),
        }
    }

    pub fn eval(&self, x: &Vector<D>) -> Matrix<D> {
        (self.value)(x)
    }

    /// `dA/dx_d` for each axis `d`.
    pub fn grad(&self, x: &Vector<D>) -> [Matrix<D>; D] {
        (self.gradient)(x)
    }

    /// `(x.grad)A`.
    pub fn x_dot_grad(&self, x: &Vector<D>) -> Matrix<D> {
        let g = self.grad(x);
        let mut out = [[0.0; D]; D];
        for d in 0..D {
            for i in 0..D {
                for j in 0..D {
                    out[i][j] += x[d] * g[d][i][j];
                }
            }
        }
        out
    }
}

/// The multiplier data: `Mv = x.grad v - i k beta v + alpha v`.
pub struct MultiplierSpec<const D: usize> {
    pub alpha: SmoothScalar<D>,
    pub beta: SmoothScalar<D>,
    pub k: f64,
}

/// Evaluates `Mv` at `x`.
pub fn multiplier_m<const D: usize>(
    v: &TestField<D>,
    spec: &MultiplierSpec<D>,
    x: &Vector<D>,
) -> C64 {
    let g = v.grad(x);
    let val = v.eval(x);
    let mut xg = c64(0.0, 0.0);
    for d in 0..D {
        xg += g[d] * x[d];
    }
    xg - c64(0.0, spec.k) * spec.beta.eval(x) * val + spec.alpha.eval(x) * val
}

/// Which route evaluates the divergence of the flux vector.
#[derive(Debug, Clone, Copy)]
pub enum DivergenceRoute {
    Analytic,
    FiniteDifference { h: f64 },
}

/// `sum_j a_j conj(b_j)`.
fn cdot<const D: usize>(a: &CVector<D>, b: &CVector<D>) -> C64 {
    let mut s = c64(0.0, 0.0);
    for j in 0..D {
        s += a[j] * b[j].conj();
    }
    s
}

/// `<M g, g>`, real for real symmetric `M`.
fn quad_form<const D: usize>(m: &Matrix<D>, g: &CVector<D>) -> f64 {
    let mg = la::mat_cvec(m, g);
    cdot(&mg, g).re
}

/// `L v = div(A grad v) + k^2 n v` from analytic derivatives.
pub fn helmholtz_apply<const D: usize>(
    v: &TestField<D>,
    a: &SmoothMatrix<D>,
    n: &SmoothScalar<D>,
    k: f64,
    x: &Vector<D>,
) -> C64 {
    let g = v.grad(x);
    let h = v.hess(x);
    let am = a.eval(x);
    let ag = a.grad(x);
    let mut div = c64(0.0, 0.0);
    for i in 0..D {
        for j in 0..D {
            div += ag[i][i][j] * g[j] + am[i][j] * h[i][j];
        }
    }
    div + k * k * n.eval(x) * v.eval(x)
}

struct PointData<const D: usize> {
    val: C64,
    g: CVector<D>,
    am: Matrix<D>,
    nv: f64,
    alpha: f64,
    beta: f64,
}

fn gather<const D: usize>(
    v: &TestField<D>,
    a: &SmoothMatrix<D>,
    n: &SmoothScalar<D>,
    spec: &MultiplierSpec<D>,
    x: &Vector<D>,
) -> PointData<D> {
    PointData {
        val: v.eval(x),
        g: v.grad(x),
        am: a.eval(x),
        nv: n.eval(x),
        alpha: spec.alpha.eval(x),
        beta: spec.beta.eval(x),
    }
}

/// Flux vector `Q(v) = 2 Re(conj(Mv) A grad v) + x (k^2 n |v|^2 - <A grad v, grad v>)`.
fn flux<const D: usize>(
    v: &TestField<D>,
    a: &SmoothMatrix<D>,
    n: &SmoothScalar<D>,
    spec: &MultiplierSpec<D>,
    x: &Vector<D>,
) -> Vector<D> {
    let p = gather(v, a, n, spec, x);
    let k = spec.k;
    let mut xg = c64(0.0, 0.0);
    for d in 0..D {
        xg += p.g[d] * x[d];
    }
    let mv = xg - c64(0.0, k) * p.beta * p.val + p.alpha * p.val;
    let ag = la::mat_cvec(&p.am, &p.g);
    let scalar = k * k * p.nv * p.val.norm_sqr() - quad_form(&p.am, &p.g);
    let mut q = [0.0; D];
    for i in 0..D {
        q[i] = 2.0 * (mv.conj() * ag[i]).re + x[i] * scalar;
    }
    q
}

fn divergence_of_flux<const D: usize>(
    v: &TestField<D>,
    a: &SmoothMatrix<D>,
    n: &SmoothScalar<D>,
    spec: &MultiplierSpec<D>,
    x: &Vector<D>,
    route: DivergenceRoute,
) -> f64 {
    match route {
        DivergenceRoute::FiniteDifference { h } => {
            let mut div = 0.0;
            for i in 0..D {
                let mut xp = *x;
                let mut xm = *x;
                xp[i] += h;
                xm[i] -= h;
                div += (flux(v, a, n, spec, &xp)[i] - flux(v, a, n, spec, &xm)[i]) / (2.0 * h);
            }
            div
        }
        DivergenceRoute::Analytic => {
            let k = spec.k;
            let p = gather(v, a, n, spec, x);
            let hess = v.hess(x);
            let agrad = a.grad(x);
            let ngrad = n.grad(x);
            let agrad_v = la::mat_cvec(&p.am, &p.g);
            // second-order part of L v
            let mut div_ag = c64(0.0, 0.0);
            for i in 0..D {
                for j in 0..D {
                    div_ag += agrad[i][i][j] * p.g[j] + p.am[i][j] * hess[i][j];
                }
            }
            let mut xg = c64(0.0, 0.0);
            for d in 0..D {
                xg += p.g[d] * x[d];
            }
            let mv = xg - c64(0.0, k) * p.beta * p.val + p.alpha * p.val;
            let beta_grad = spec.beta.grad(x);
            let alpha_grad = spec.alpha.grad(x);
            let mut hx = [c64(0.0, 0.0); D];
            for i in 0..D {
                for j in 0..D {
                    hx[i] += hess[i][j] * x[j];
                }
            }
            // grad(Mv)_i = g_i + (Hx)_i - ik (beta g_i + dbeta_i v) + alpha g_i + dalpha_i v
            let mut term1 = c64(0.0, 0.0);
            for i in 0..D {
                let grad_mv_i = p.g[i] + hx[i]
                    - c64(0.0, k) * (p.beta * p.g[i] + beta_grad[i] * p.val)
                    + p.alpha * p.g[i]
                    + alpha_grad[i] * p.val;
                term1 += grad_mv_i.conj() * agrad_v[i];
            }
            let xda = a.x_dot_grad(x);
            let a_hx = la::mat_cvec(&p.am, &hx);
            let scalar = k * k * p.nv * p.val.norm_sqr() - quad_form(&p.am, &p.g);
            let mut x_dot_n = 0.0;
            for d in 0..D {
                x_dot_n += x[d] * ngrad[d];
            }
            2.0 * term1.re
                + 2.0 * (mv.conj() * div_ag).re
                + D as f64 * scalar
                + k * k * x_dot_n * p.val.norm_sqr()
                + 2.0 * k * k * p.nv * (p.val.conj() * xg).re
                - quad_form(&xda, &p.g)
                - 2.0 * cdot(&a_hx, &p.g).re
        }
    }
}

/// Residual of the pointwise multiplier identity at `x`: the absolute gap
/// between `2 Re(conj(Mv) L v)` and its divergence-plus-lower-order
/// expansion. Rounding-level for the analytic route, O(h^2) for FD.
pub fn pointwise_identity_residual<const D: usize>(
    v: &TestField<D>,
    a: &SmoothMatrix<D>,
    n: &SmoothScalar<D>,
    spec: &MultiplierSpec<D>,
    x: &Vector<D>,
    route: DivergenceRoute,
) -> f64 {
    let k = spec.k;
    let p = gather(v, a, n, spec, x);
    let mut xg = c64(0.0, 0.0);
    for d in 0..D {
        xg += p.g[d] * x[d];
    }
    let mv = xg - c64(0.0, k) * p.beta * p.val + p.alpha * p.val;
    let lv = helmholtz_apply(v, a, n, k, x);
    let lhs = 2.0 * (mv.conj() * lv).re;

    let div_q = divergence_of_flux(v, a, n, spec, x, route);
    let agv = quad_form(&p.am, &p.g);
    let xda = a.x_dot_grad(x);
    let ngrad = n.grad(x);
    let betag = spec.beta.grad(x);
    let alphag = spec.alpha.grad(x);
    let a_g = la::mat_cvec(&p.am, &p.g);
    let mut ag_dbeta = c64(0.0, 0.0);
    let mut ag_dalpha = c64(0.0, 0.0);
    let mut x_dot_n = 0.0;
    for d in 0..D {
        ag_dbeta += a_g[d] * betag[d];
        ag_dalpha += a_g[d] * alphag[d];
        x_dot_n += x[d] * ngrad[d];
    }
    let dd = D as f64;
    let rhs = div_q - (2.0 * p.alpha - dd + 2.0) * agv + quad_form(&xda, &p.g)
        - ((dd - 2.0 * p.alpha) * p.nv + x_dot_n) * k * k * p.val.norm_sqr()
        - 2.0 * (c64(0.0, k) * p.val.conj() * ag_dbeta).re
        - 2.0 * (p.val.conj() * ag_dalpha).re;
    (lhs - rhs).abs()
}

/// Residual of the beta sub-identity
/// `2 Re(i k beta conj(v) L v) = div[2 Re(i k beta conj(v) A grad v)]
///  - 2 Re(i k conj(v) <A grad v, grad beta>)`.
pub fn beta_identity_residual<const D: usize>(
    v: &TestField<D>,
    a: &SmoothMatrix<D>,
    n: &SmoothScalar<D>,
    k: f64,
    beta: &SmoothScalar<D>,
    x: &Vector<D>,
    route: DivergenceRoute,
) -> f64 {
    let val = v.eval(x);
    let lv = helmholtz_apply(v, a, n, k, x);
    let b = beta.eval(x);
    let lhs = 2.0 * (c64(0.0, k) * b * val.conj() * lv).re;
    let flux_b = |y: &Vector<D>| -> Vector<D> {
        let gv = v.grad(y);
        let ag = la::mat_cvec(&a.eval(y), &gv);
        let vv = v.eval(y);
        let bb = beta.eval(y);
        let mut q = [0.0; D];
        for i in 0..D {
            q[i] = 2.0 * (c64(0.0, k) * bb * vv.conj() * ag[i]).re;
        }
        q
    };
    let div = match route {
        DivergenceRoute::FiniteDifference { h } => {
            let mut s = 0.0;
            for i in 0..D {
                let mut xp = *x;
                let mut xm = *x;
                xp[i] += h;
                xm[i] -= h;
                s += (flux_b(&xp)[i] - flux_b(&xm)[i]) / (2.0 * h);
            }
            s
        }
        DivergenceRoute::Analytic => {
            let gv = v.grad(x);
            let hess = v.hess(x);
            let am = a.eval(x);
            let ag = a.grad(x);
            let agv = la::mat_cvec(&am, &gv);
            let bgrad = beta.grad(x);
            let mut div_ag = c64(0.0, 0.0);
            for i in 0..D {
                for j in 0..D {
                    div_ag += ag[i][i][j] * gv[j] + am[i][j] * hess[i][j];
                }
            }
            let mut s = 0.0;
            for i in 0..D {
                let term =
                    c64(0.0, k) * (bgrad[i] * val.conj() * agv[i] + b * gv[i].conj() * agv[i]);
                s += 2.0 * term.re;
            }
            s + 2.0 * (c64(0.0, k) * b * val.conj() * div_ag).re
        }
    };
    let gv = v.grad(x);
    let agv = la::mat_cvec(&a.eval(x), &gv);
    let bgrad = beta.grad(x);
    let mut ag_db = c64(0.0, 0.0);
    for d in 0..D {
        ag_db += agv[d] * bgrad[d];
    }
    let rhs = div - 2.0 * (c64(0.0, k) * val.conj() * ag_db).re;
    (lhs - rhs).abs()
}

/// Residual of the alpha sub-identity
/// `2 Re(alpha conj(v) L v) = div[2 Re(alpha conj(v) A grad v)]
///  + 2 alpha k^2 n |v|^2 - 2 alpha <A grad v, grad v>
///  - 2 Re(conj(v) <A grad v, grad alpha>)`.
pub fn alpha_identity_residual<const D: usize>(
    v: &TestField<D>,
    a: &SmoothMatrix<D>,
    n: &SmoothScalar<D>,
    k: f64,
    alpha: &SmoothScalar<D>,
    x: &Vector<D>,
    route: DivergenceRoute,
) -> f64 {
    let val = v.eval(x);
    let lv = helmholtz_apply(v, a, n, k, x);
    let al = alpha.eval(x);
    let lhs = 2.0 * (al * val.conj() * lv).re;
    let flux_a = |y: &Vector<D>| -> Vector<D> {
        let gv = v.grad(y);
        let ag = la::mat_cvec(&a.eval(y), &gv);
        let vv = v.eval(y);
        let aa = alpha.eval(y);
        let mut q = [0.0; D];
        for i in 0..D {
            q[i] = 2.0 * (aa * vv.conj() * ag[i]).re;
        }
        q
    };
    let div = match route {
        DivergenceRoute::FiniteDifference { h } => {
            let mut s = 0.0;
            for i in 0..D {
                let mut xp = *x;
                let mut xm = *x;
                xp[i] += h;
                xm[i] -= h;
                s += (flux_a(&xp)[i] - flux_a(&xm)[i]) / (2.0 * h);
            }
            s
        }
        DivergenceRoute::Analytic => {
            let gv = v.grad(x);
            let hess = v.hess(x);
            let am = a.eval(x);
            let ag = a.grad(x);
            let agv = la::mat_cvec(&am, &gv);
            let agrad = alpha.grad(x);
            let mut div_ag = c64(0.0, 0.0);
            for i in 0..D {
                for j in 0..D {
                    div_ag += ag[i][i][j] * gv[j] + am[i][j] * hess[i][j];
                }
            }
            let mut s = 0.0;
            for i in 0..D {
                let term = agrad[i] * val.conj() * agv[i] + al * gv[i].conj() * agv[i];
                s += 2.0 * term.re;
            }
            s + 2.0 * (al * val.conj() * div_ag).re
        }
    };
    let gv = v.grad(x);
    let am = a.eval(x);
    let agv = la::mat_cvec(&am, &gv);
    let agrad = alpha.grad(x);
    let mut ag_da = c64(0.0, 0.0);
    for d in 0..D {
        ag_da += agv[d] * agrad[d];
    }
    let rhs = div + 2.0 * al * k * k * n.eval(x) * val.norm_sqr()
        - 2.0 * al * quad_form(&am, &gv)
        - 2.0 * (val.conj() * ag_da).re;
    (lhs - rhs).abs()
}

/// Residual and sign data for the Morawetz-Ludwig identity for
/// `L v = (Delta + k^2) v` with multiplier `r(v_r - i k v + (alpha/r) v)`.
#[derive(Debug, Clone, Copy)]
pub struct MlCheck {
    /// |identity residual| at the point.
    pub residual: f64,
    /// The non-divergence side `P(v)`; nonnegative when `Lv = 0` and
    /// `2 alpha = d - 1`.
    pub p_value: f64,
}

pub fn ml_identity_residual<const D: usize>(
    v: &TestField<D>,
    alpha: f64,
    k: f64,
    x: &Vector<D>,
    route: DivergenceRoute,
) -> MlCheck {
    let val = v.eval(x);
    let g = v.grad(x);
    let hess = v.hess(x);
    let r = la::norm(x);
    let mut xg = c64(0.0, 0.0);
    let mut g2 = 0.0;
    for d in 0..D {
        xg += g[d] * x[d];
        g2 += g[d].norm_sqr();
    }
    let v_r = xg / r;
    let mut lap = c64(0.0, 0.0);
    for d in 0..D {
        lap += hess[d][d];
    }
    let lv = lap + k * k * val;
    let mv = xg - c64(0.0, k * r) * val + alpha * val;
    let lhs = 2.0 * (mv.conj() * lv).re;

    let flux_ml = |y: &Vector<D>| -> Vector<D> {
        let gv = v.grad(y);
        let vv = v.eval(y);
        let rr = la::norm(y);
        let mut yg = c64(0.0, 0.0);
        let mut gg = 0.0;
        for d in 0..D {
            yg += gv[d] * y[d];
            gg += gv[d].norm_sqr();
        }
        let m = yg - c64(0.0, k * rr) * vv + alpha * vv;
        let scalar = k * k * vv.norm_sqr() - gg;
        let mut q = [0.0; D];
        for i in 0..D {
            q[i] = 2.0 * (m.conj() * gv[i]).re + y[i] * scalar;
        }
        q
    };
    let div = match route {
        DivergenceRoute::FiniteDifference { h } => {
            let mut s = 0.0;
            for i in 0..D {
                let mut xp = *x;
                let mut xm = *x;
                xp[i] += h;
                xm[i] -= h;
                s += (flux_ml(&xp)[i] - flux_ml(&xm)[i]) / (2.0 * h);
            }
            s
        }
        DivergenceRoute::Analytic => {
            let mut hx = [c64(0.0, 0.0); D];
            for i in 0..D {
                for j in 0..D {
                    hx[i] += hess[i][j] * x[j];
                }
            }
            let mut term1 = c64(0.0, 0.0);
            let mut hx_dot_g = c64(0.0, 0.0);
            for i in 0..D {
                let grad_mv_i =
                    g[i] + hx[i] - c64(0.0, k) * ((x[i] / r) * val + r * g[i]) + alpha * g[i];
                term1 += grad_mv_i.conj() * g[i];
                hx_dot_g += hx[i] * g[i].conj();
            }
            let scalar = k * k * val.norm_sqr() - g2;
            2.0 * term1.re + 2.0 * (mv.conj() * lap).re
                + D as f64 * scalar
                + 2.0 * k * k * (val.conj() * xg).re
                - 2.0 * hx_dot_g.re
        }
    };
    let dd = D as f64;
    let lower_order = (2.0 * alpha - (dd - 1.0)) * (k * k * val.norm_sqr() - g2)
        - (g2 - v_r.norm_sqr())
        - (v_r - c64(0.0, k) * val).norm_sqr();
    let rhs = div + lower_order;
    // P(v) := div Q(v) = lhs - lower-order terms; >= 0 when Lv = 0 and
    // 2 alpha = d - 1
    MlCheck { residual: (lhs - rhs).abs(), p_value: lhs - lower_order }
}

/// Tangential decomposition at a boundary point: the operator
/// `T_j(u) = A_ij (d_i u - (du/dnu_A) nu_i / nu)` with `nu = <A nu, nu>`,
/// plus the conormal derivative.
#[derive(Debug, Clone, Copy)]
pub struct TangentialSplit<const D: usize> {
    pub t: CVector<D>,
    pub conormal: C64,
    pub nu_quad: f64,
}

pub fn tangential_split<const D: usize>(
    grad: &CVector<D>,
    a: &Matrix<D>,
    nu: &Vector<D>,
) -> TangentialSplit<D> {
    let a_nu = la::mat_vec(a, nu);
    let mut conormal = c64(0.0, 0.0);
    for i in 0..D {
        conormal += grad[i] * a_nu[i];
    }
    let nu_quad = la::dot(&a_nu, nu);
    let mut shifted = [c64(0.0, 0.0); D];
    for i in 0..D {
        shifted[i] = grad[i] - conormal * (nu[i] / nu_quad);
    }
    let t = la::mat_cvec(a, &shifted);
    TangentialSplit { t, conormal, nu_quad }
}

/// Spec-level wrapper: the tangential operator of a test field at a boundary
/// point with unit normal `nu`.
pub fn tangential_t<const D: usize>(
    u: &TestField<D>,
    a: &SmoothMatrix<D>,
    x: &Vector<D>,
    nu: &Vector<D>,
) -> TangentialSplit<D> {
    tangential_split(&u.grad(x), &a.eval(x), nu)
}

/// Result of the integrated identity check: both sides and their gap.
#[derive(Debug, Clone, Copy)]
pub struct IntegratedCheck {
    pub volume: f64,
    pub boundary: f64,
    pub residual: f64,
    pub relative_residual: f64,
    pub triangles: usize,
}

/// Integrates the identity over a polygonal domain: volume side by
/// triangulated order-5 quadrature of the non-divergence terms, boundary side
/// through the tangential decomposition. `level` halves the mesh width per
/// increment. Piecewise-constant coefficients are not admissible here (the
/// interior interface terms are undefined); the smooth field types enforce
/// that at the signature.
pub fn integrated_identity_check(
    v: &TestField<2>,
    a: &SmoothMatrix<2>,
    n: &SmoothScalar<2>,
    spec: &MultiplierSpec<2>,
    domain: &DomainSpec,
    level: u32,
) -> Result<IntegratedCheck, MorawetzError> {
    if level == 0 {
        return Err(MorawetzError::BadParameter("quadrature level must be >= 1"));
    }
    let params = crate::geom::geometric_params(domain);
    let h0 = params.l_i.max(1e-12);
    let h = h0 / (1u64 << level.min(40)) as f64;
    let mesh = build_mesh(domain, h)?;
    let k = spec.k;

    // volume side: non-divergence terms of the identity
    let rule = tri_order5();
    let mut volume = 0.0;
    for t in 0..mesh.triangles.len() {
        let [i, j, l] = mesh.triangles[t];
        let (p0, p1, p2) = (mesh.vertices[i], mesh.vertices[j], mesh.vertices[l]);
        let area = mesh.triangle_area(t);
        for q in rule.iter() {
            let x = bary_to_xy(&q.bary, &p0, &p1, &p2);
            let p = gather(v, a, n, spec, &x);
            let lv = helmholtz_apply(v, a, n, k, &x);
            let mut xg = c64(0.0, 0.0);
            for d in 0..2 {
                xg += p.g[d] * x[d];
            }
            let mv = xg - c64(0.0, k) * p.beta * p.val + p.alpha * p.val;
            let agv = quad_form(&p.am, &p.g);
            let xda = a.x_dot_grad(&x);
            let ngrad = n.grad(&x);
            let a_g = la::mat_cvec(&p.am, &p.g);
            let bgrad = spec.beta.grad(&x);
            let agr = spec.alpha.grad(&x);
            let mut ag_db = c64(0.0, 0.0);
            let mut ag_da = c64(0.0, 0.0);
            let mut x_dot_n = 0.0;
            for d in 0..2 {
                ag_db += a_g[d] * bgrad[d];
                ag_da += a_g[d] * agr[d];
                x_dot_n += x[d] * ngrad[d];
            }
            let dd = 2.0;
            let integrand = 2.0 * (mv.conj() * lv).re + (2.0 * p.alpha - dd + 2.0) * agv
                - quad_form(&xda, &p.g)
                + ((dd - 2.0 * p.alpha) * p.nv + x_dot_n) * k * k * p.val.norm_sqr()
                + 2.0 * (c64(0.0, k) * p.val.conj() * ag_db).re
                + 2.0 * (p.val.conj() * ag_da).re;
            volume += area * q.weight * integrand;
        }
    }

    // boundary side via the tangential decomposition; outward normal found
    // from the adjacent triangle
    let mut edge_owner: alloc::collections::BTreeMap<(usize, usize), usize> =
        alloc::collections::BTreeMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for e in 0..3 {
            let (ea, eb) = (tri[e], tri[(e + 1) % 3]);
            edge_owner.insert((ea.min(eb), ea.max(eb)), t);
        }
    }
    let (gx, gw) = gauss_legendre(5);
    let mut boundary = 0.0;
    for &(ea, eb, _tag) in &mesh.boundary_edges {
        let pa = mesh.vertices[ea];
        let pb = mesh.vertices[eb];
        let tri = mesh.triangles[edge_owner[&(ea.min(eb), ea.max(eb))]];
        let opposite = tri.iter().copied().find(|&vtx| vtx != ea && vtx != eb).unwrap();
        let po = mesh.vertices[opposite];
        let tangent = la::sub(&pb, &pa);
        let len = la::norm(&tangent);
        let mut nu = [tangent[1] / len, -tangent[0] / len];
        let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        if la::dot(&nu, &la::sub(&mid, &po)) < 0.0 {
            nu = [-nu[0], -nu[1]];
        }
        for (xi, wi) in gx.iter().zip(&gw) {
            let t01 = 0.5 * (xi + 1.0);
            let x = [pa[0] + t01 * tangent[0], pa[1] + t01 * tangent[1]];
            let w = wi * 0.5 * len;
            let am = a.eval(&x);
            let split = tangential_split(&v.grad(&x), &am, &nu);
            let a_inv = la::inverse(&am).expect("coefficient matrix is SPD");
            let a_inv_t = la::mat_cvec(&a_inv, &split.t);
            let t_quad = cdot(&a_inv_t, &split.t).re;
            let x_dot_nu = la::dot(&x, &nu);
            let val = v.eval(&x);
            let mut x_ainvt = c64(0.0, 0.0);
            for dd in 0..2 {
                x_ainvt += a_inv_t[dd].conj() * x[dd];
            }
            let al = spec.alpha.eval(&x);
            let be = spec.beta.eval(&x);
            let integrand = x_dot_nu
                * (split.conormal.norm_sqr() / split.nu_quad - t_quad
                    + k * k * n.eval(&x) * val.norm_sqr())
                + 2.0
                    * ((x_ainvt + c64(0.0, k) * be * val.conj() + al * val.conj())
                        * split.conormal)
                        .re;
            boundary += w * integrand;
        }
    }
    let residual = (volume - boundary).abs();
    let scale = volume.abs().max(boundary.abs()).max(1e-300);
    Ok(IntegratedCheck {
        volume,
        boundary,
        residual,
        relative_residual: residual / scale,
        triangles: mesh.triangles.len(),
    })
}

/// One randomized smooth instance `(v, A, n, alpha, beta, k)` for the
/// identity suites; the fields stay admissible (A SPD, n positive) on the
/// sampling box.
pub struct RandomInstance<const D: usize> {
    pub v: TestField<D>,
    pub a: SmoothMatrix<D>,
    pub n: SmoothScalar<D>,
    pub spec: MultiplierSpec<D>,
}

pub fn random_instance<const D: usize>(rng: &mut SplitMix64) -> RandomInstance<D> {
    let k = rng.range(0.6, 1.8);
    let dir: Vector<D> = rng.unit_vector();
    let amp = rng.range(0.1, 0.35);
    let mut w: Vector<D> = rng.unit_vector();
    let wscale = rng.range(0.5, 1.8);
    for wd in w.iter_mut() {
        *wd *= wscale;
    }
    let v = TestField::modulated_plane_wave(k, dir, amp, w, rng.range(0.0, 6.28));

    let mut terms = Vec::new();
    for _ in 0..2 {
        let c = rng.range(-0.18, 0.18);
        let mut wm: Vector<D> = rng.unit_vector();
        let ws = rng.range(0.5, 1.5);
        for wd in wm.iter_mut() {
            *wd *= ws;
        }
        let u: Vector<D> = rng.unit_vector();
        terms.push((c, wm, rng.range(0.0, 6.28), u));
    }
    let a = SmoothMatrix::identity_plus_sinusoids(terms);
    let n =
        SmoothScalar::sinusoid(1.0, rng.range(-0.35, 0.35), rng.unit_vector(), rng.range(0.0, 6.28));
    let alpha = SmoothScalar::sinusoid(
        rng.range(-0.5, 0.5),
        rng.range(-0.3, 0.3),
        rng.unit_vector(),
        rng.range(0.0, 6.28),
    );
    let beta = SmoothScalar::sinusoid(
        rng.range(-0.5, 0.5),
        rng.range(-0.3, 0.3),
        rng.unit_vector(),
        rng.range(0.0, 6.28),
    );
    RandomInstance { v, a, n, spec: MultiplierSpec { alpha, beta, k } }
}
