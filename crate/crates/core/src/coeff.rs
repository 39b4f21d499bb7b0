//! Coefficient pair `(A, n)` of the operator `div(A grad u) + k^2 n u`:
//! representation of the built-in families, the nontrapping condition
//! checkers, and mollification of rough coefficients into admissible smooth
//! ones.
//!
//! The almost-everywhere conditions are certified by sampling (tensor grid
//! plus low-discrepancy points) with the margin reported at the worst sample;
//! `holds` means every margin exceeds 1e-9. Piecewise-constant fields with
//! the nested monotone structure are handled by the jump-sign rule instead of
//! pointwise gradients.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::geom::Polygon;
use crate::la::{self, Matrix, Vector};
use crate::quad::gauss_legendre;
use crate::rand::halton_point;
#[allow(unused_imports)]
use num_traits::Float;

/// Margins above this count as "strictly positive".
pub const HOLD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum CoeffError {
    /// Evaluator produced a non-finite value; carries the position.
    NonFiniteValue { position: Vec<f64> },
    MissingGradient(&'static str),
    /// The checker does not support this regularity/structure combination.
    UnsupportedRegularity(&'static str),
    BadParameter(&'static str),
    /// Mollifier kernel mass differs from 1 by more than 1e-10.
    NormalizationDrift(f64),
}

impl core::fmt::Display for CoeffError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CoeffError::NonFiniteValue { position } => {
                write!(f, "coefficient evaluator returned a non-finite value at {position:?}")
            }
            CoeffError::MissingGradient(what) => write!(f, "missing gradient: {what}"),
            CoeffError::UnsupportedRegularity(what) => write!(f, "unsupported regularity: {what}"),
            CoeffError::BadParameter(what) => write!(f, "bad parameter: {what}"),
            CoeffError::NormalizationDrift(d) => {
                write!(f, "mollifier normalization drift {d:e} exceeds 1e-10")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularity {
    Smooth,
    Lipschitz,
    PiecewiseConstant,
}

/// Subdomain of a piecewise-constant field. Polygon regions are 2-d.
#[derive(Debug, Clone)]
pub enum Region {
    Ball { radius: f64 },
    Polygon(Polygon),
}

impl Region {
    fn contains<const D: usize>(&self, x: &Vector<D>) -> bool {
        match self {
            Region::Ball { radius } => la::norm(x) <= *radius,
            Region::Polygon(poly) => poly.contains(&[x[0], x[1]]),
        }
    }

    fn outer_radius(&self) -> f64 {
        match self {
            Region::Ball { radius } => *radius,
            Region::Polygon(poly) => poly.max_vertex_distance(&[0.0, 0.0]),
        }
    }

    fn star_shaped_wrt_origin(&self) -> bool {
        match self {
            Region::Ball { .. } => true,
            Region::Polygon(poly) => crate::geom::star_shaped_wrt_point(poly, &[0.0, 0.0]).0,
        }
    }
}

/// Built-in radial profiles; `value(r) = 1` beyond the support radius.
#[derive(Debug, Clone)]
pub enum RadialProfile {
    Constant(f64),
    /// `v0` at the origin, linear to 1 at `r0`, 1 beyond.
    Ramp { v0: f64, r0: f64 },
    /// `1 + amp exp(-((r - center)/width)^2)`.
    GaussianBump { amp: f64, center: f64, width: f64 },
    /// `exp(rate r)` up to `r0`, blended smoothly down to 1 over `[r0, r0+blend]`.
    ExpCut { rate: f64, r0: f64, blend: f64 },
    /// `(r_ref/r)^2` on `[r_inner, r_outer]`, constant inside, blended to 1
    /// over `[r_outer, r_outer + blend]`.
    InverseSquare { r_ref: f64, r_inner: f64, r_outer: f64, blend: f64 },
    /// `1 - depth (1 - (r/r0)^2)^3` inside `r0`, 1 beyond.
    SmoothWell { depth: f64, r0: f64 },
    /// Piecewise-linear interpolation of a sorted `(r, value)` table, clamped
    /// at both ends.
    Table { rs: Vec<f64>, vs: Vec<f64> },
}

/// `F(t) = t^2 (3 - 2t)` smoothstep used for the blended profiles.
fn smoothstep(t: f64) -> (f64, f64) {
    let t = t.clamp(0.0, 1.0);
    (t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t))
}

impl RadialProfile {
    pub fn from_table(pairs: Vec<(f64, f64)>) -> Result<Self, CoeffError> {
        if pairs.len() < 2 {
            return Err(CoeffError::BadParameter("radial table needs at least two rows"));
        }
        for w in pairs.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(CoeffError::BadParameter("radial table radii must increase strictly"));
            }
        }
        if pairs.iter().any(|p| !p.0.is_finite() || !p.1.is_finite() || p.0 < 0.0) {
            return Err(CoeffError::BadParameter("radial table entries must be finite, r >= 0"));
        }
        let (rs, vs) = pairs.into_iter().unzip();
        Ok(RadialProfile::Table { rs, vs })
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Constant(c) => *c,
            RadialProfile::Ramp { v0, r0 } => {
                if r >= *r0 {
                    1.0
                } else {
                    v0 + (1.0 - v0) * r / r0
                }
            }
            RadialProfile::GaussianBump { amp, center, width } => {
                let t = (r - center) / width;
                1.0 + amp * (-t * t).exp()
            }
            RadialProfile::ExpCut { rate, r0, blend } => {
                if r <= *r0 {
                    (rate * r).exp()
                } else if r >= r0 + blend {
                    1.0
                } else {
                    let (s, _) = smoothstep((r - r0) / blend);
                    1.0 + ((rate * r0).exp() - 1.0) * (1.0 - s)
                }
            }
            RadialProfile::InverseSquare { r_ref, r_inner, r_outer, blend } => {
                if r <= *r_inner {
                    (r_ref / r_inner) * (r_ref / r_inner)
                } else if r <= *r_outer {
                    (r_ref / r) * (r_ref / r)
                } else if r >= r_outer + blend {
                    1.0
                } else {
                    let v_out = (r_ref / r_outer) * (r_ref / r_outer);
                    let (s, _) = smoothstep((r - r_outer) / blend);
                    v_out + (1.0 - v_out) * s
                }
            }
            RadialProfile::SmoothWell { depth, r0 } => {
                if r >= *r0 {
                    1.0
                } else {
                    let u = 1.0 - (r / r0) * (r / r0);
                    1.0 - depth * u * u * u
                }
            }
            RadialProfile::Table { rs, vs } => {
                if r <= rs[0] {
                    return vs[0];
                }
                if r >= *rs.last().unwrap() {
                    return *vs.last().unwrap();
                }
                let idx = rs.partition_point(|&t| t <= r) - 1;
                let t = (r - rs[idx]) / (rs[idx + 1] - rs[idx]);
                vs[idx] + t * (vs[idx + 1] - vs[idx])
            }
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Constant(_) => 0.0,
            RadialProfile::Ramp { v0, r0 } => {
                if r >= *r0 {
                    0.0
                } else {
                    (1.0 - v0) / r0
                }
            }
            RadialProfile::GaussianBump { amp, center, width } => {
                let t = (r - center) / width;
                amp * (-t * t).exp() * (-2.0 * t / width)
            }
            RadialProfile::ExpCut { rate, r0, blend } => {
                if r <= *r0 {
                    rate * (rate * r).exp()
                } else if r >= r0 + blend {
                    0.0
                } else {
                    let (_, ds) = smoothstep((r - r0) / blend);
                    -((rate * r0).exp() - 1.0) * ds / blend
                }
            }
            RadialProfile::InverseSquare { r_ref, r_inner, r_outer, blend } => {
                if r <= *r_inner {
                    0.0
                } else if r <= *r_outer {
                    -2.0 * r_ref * r_ref / (r * r * r)
                } else if r >= r_outer + blend {
                    0.0
                } else {
                    let v_out = (r_ref / r_outer) * (r_ref / r_outer);
                    let (_, ds) = smoothstep((r - r_outer) / blend);
                    (1.0 - v_out) * ds / blend
                }
            }
            RadialProfile::SmoothWell { depth, r0 } => {
                if r >= *r0 {
                    0.0
                } else {
                    let u = 1.0 - (r / r0) * (r / r0);
                    depth * 3.0 * u * u * 2.0 * r / (r0 * r0)
                }
            }
            RadialProfile::Table { rs, vs } => {
                if r <= rs[0] || r >= *rs.last().unwrap() {
                    return 0.0;
                }
                let idx = rs.partition_point(|&t| t <= r) - 1;
                (vs[idx + 1] - vs[idx]) / (rs[idx + 1] - rs[idx])
            }
        }
    }

    pub fn regularity(&self) -> Regularity {
        match self {
            RadialProfile::Constant(_) | RadialProfile::GaussianBump { .. } => Regularity::Smooth,
            RadialProfile::SmoothWell { .. } | RadialProfile::InverseSquare { .. } => {
                Regularity::Lipschitz
            }
            _ => Regularity::Lipschitz,
        }
    }

    /// Radius beyond which the profile is 1 (up to rounding for the bump).
    pub fn support_radius(&self) -> f64 {
        match self {
            RadialProfile::Constant(_) => 0.0,
            RadialProfile::Ramp { r0, .. } => *r0,
            RadialProfile::GaussianBump { center, width, .. } => center + 7.0 * width.abs(),
            RadialProfile::ExpCut { r0, blend, .. } => r0 + blend,
            RadialProfile::InverseSquare { r_outer, blend, .. } => r_outer + blend,
            RadialProfile::SmoothWell { r0, .. } => *r0,
            RadialProfile::Table { rs, .. } => *rs.last().unwrap(),
        }
    }

    /// (min, max) over a dense radius scan of `[0, support]`.
    fn bounds(&self) -> (f64, f64) {
        let sup = self.support_radius().max(1e-9);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=4096 {
            let r = sup * i as f64 / 4096.0;
            let v = self.value(r);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo.min(1.0), hi.max(1.0))
    }
}

/// Tensor quadrature of the standard mollifier bump on its support,
/// normalized so the discrete kernel mass is exactly 1.
#[derive(Clone)]
pub struct MollifierKernel<const D: usize> {
    nodes: Vec<Vector<D>>,
    weights: Vec<f64>,
    grad_weights: Vec<Vector<D>>,
    mass: f64,
}

impl<const D: usize> MollifierKernel<D> {
    /// Gauss-Legendre tensor rule with `points_per_axis` nodes per axis (the
    /// verification suite uses 16).
    pub fn build(points_per_axis: usize) -> Result<Self, CoeffError> {
        let (gx, gw) = gauss_legendre(points_per_axis);
        let total = points_per_axis.pow(D as u32);
        let mut nodes = Vec::new();
        let mut raw = Vec::new();
        let mut grads: Vec<Vector<D>> = Vec::new();
        for flat in 0..total {
            let mut idx = flat;
            let mut z = [0.0; D];
            let mut w = 1.0;
            for d in 0..D {
                let i = idx % points_per_axis;
                idx /= points_per_axis;
                z[d] = gx[i];
                w *= gw[i];
            }
            let r2 = la::dot(&z, &z);
            if r2 >= 1.0 {
                continue;
            }
            let psi = (1.0 / (r2 - 1.0)).exp();
            if psi == 0.0 {
                continue;
            }
            // grad psi = psi * (-2 z / (r^2 - 1)^2)
            let denom = (r2 - 1.0) * (r2 - 1.0);
            let mut g = [0.0; D];
            for d in 0..D {
                g[d] = psi * (-2.0 * z[d] / denom);
            }
            nodes.push(z);
            raw.push(w * psi);
            grads.push(la::scale(&g, w));
        }
        let mass: f64 = raw.iter().sum();
        if !(mass > 0.0) {
            return Err(CoeffError::BadParameter("mollifier quadrature has empty support"));
        }
        let weights: Vec<f64> = raw.iter().map(|w| w / mass).collect();
        let grad_weights: Vec<Vector<D>> = grads.iter().map(|g| la::scale(g, 1.0 / mass)).collect();
        let drift = (weights.iter().sum::<f64>() - 1.0).abs();
        if drift > 1e-10 {
            return Err(CoeffError::NormalizationDrift(drift));
        }
        Ok(MollifierKernel { nodes, weights, grad_weights, mass })
    }

    /// Discrete kernel mass after normalization (exactly 1 up to rounding).
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Unnormalized quadrature mass of the raw bump (fixes the constant `C`).
    pub fn raw_mass(&self) -> f64 {
        self.mass
    }
}

type ScalarEval<const D: usize> = Arc<dyn Fn(&Vector<D>) -> f64 + Send + Sync>;
type ScalarGrad<const D: usize> = Arc<dyn Fn(&Vector<D>) -> Vector<D> + Send + Sync>;
type MatrixEval<const D: usize> = Arc<dyn Fn(&Vector<D>) -> Matrix<D> + Send + Sync>;
type MatrixGrad<const D: usize> = Arc<dyn Fn(&Vector<D>) -> [Matrix<D>; D] + Send + Sync>;

enum ScalarKind<const D: usize> {
    Constant(f64),
    Radial(RadialProfile),
    /// Innermost region first; points on an interface take the inner value.
    Piecewise { background: f64, parts: Vec<(Region, f64)> },
    Mollified { inner: Arc<CoefficientField<D>>, delta: f64, kernel: MollifierKernel<D> },
    Custom { eval: ScalarEval<D>, grad: Option<ScalarGrad<D>> },
}

/// Scalar coefficient `n(x)`, equal to 1 outside its support radius.
pub struct CoefficientField<const D: usize> {
    kind: ScalarKind<D>,
    pub regularity: Regularity,
    pub n_min: f64,
    pub n_max: f64,
    pub support_radius: f64,
}

impl<const D: usize> core::fmt::Debug for CoefficientField<D> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let tag = match &self.kind {
            ScalarKind::Constant(c) => return write!(f, "CoefficientField(constant {c})"),
            ScalarKind::Radial(_) => "radial",
            ScalarKind::Piecewise { .. } => "piecewise",
            ScalarKind::Mollified { .. } => "mollified",
            ScalarKind::Custom { .. } => "custom",
        };
        write!(
            f,
            "CoefficientField({tag}, [{}, {}], supp {})",
            self.n_min, self.n_max, self.support_radius
        )
    }
}

impl<const D: usize> CoefficientField<D> {
    pub fn constant(c: f64) -> Self {
        CoefficientField {
            kind: ScalarKind::Constant(c),
            regularity: Regularity::Smooth,
            n_min: c,
            n_max: c,
            support_radius: 0.0,
        }
    }

    pub fn radial(profile: RadialProfile) -> Self {
        let (lo, hi) = profile.bounds();
        let support = profile.support_radius();
        let reg = profile.regularity();
        CoefficientField {
            kind: ScalarKind::Radial(profile),
            regularity: reg,
            n_min: lo,
            n_max: hi,
            support_radius: support,
        }
    }

    /// Piecewise-constant field; `parts` are checked to be innermost-first.
    pub fn piecewise(background: f64, parts: Vec<(Region, f64)>) -> Result<Self, CoeffError> {
        validate_piecewise::<D>(&parts)?;
        let mut lo = background;
        let mut hi = background;
        let mut support: f64 = 0.0;
        for (region, v) in &parts {
            lo = lo.min(*v);
            hi = hi.max(*v);
            support = support.max(region.outer_radius());
        }
        if background != 1.0 {
            return Err(CoeffError::BadParameter("piecewise background must be 1"));
        }
        Ok(CoefficientField {
            kind: ScalarKind::Piecewise { background, parts },
            regularity: Regularity::PiecewiseConstant,
            n_min: lo,
            n_max: hi,
            support_radius: support,
        })
    }

    /// Step field: `v_inside` in the ball of radius `r0`, 1 outside.
    pub fn step(v_inside: f64, r0: f64) -> Result<Self, CoeffError> {
        Self::piecewise(1.0, vec![(Region::Ball { radius: r0 }, v_inside)])
    }

    pub fn custom(
        eval: ScalarEval<D>,
        grad: Option<ScalarGrad<D>>,
        regularity: Regularity,
        n_min: f64,
        n_max: f64,
        support_radius: f64,
    ) -> Self {
        CoefficientField { kind: ScalarKind::Custom { eval, grad }, regularity, n_min, n_max, support_radius }
    }

    pub fn eval(&self, x: &Vector<D>) -> f64 {
        match &self.kind {
            ScalarKind::Constant(c) => *c,
            ScalarKind::Radial(p) => p.value(la::norm(x)),
            ScalarKind::Piecewise { background, parts } => {
                for (region, v) in parts {
                    if region.contains(x) {
                        return *v;
                    }
                }
                *background
            }
            ScalarKind::Mollified { inner, delta, kernel } => {
                let mut s = 0.0;
                for (z, w) in kernel.nodes.iter().zip(&kernel.weights) {
                    let y = la::axpy(x, -*delta, z);
                    s += w * inner.eval(&y);
                }
                s
            }
            ScalarKind::Custom { eval, .. } => eval(x),
        }
    }

    pub fn try_eval(&self, x: &Vector<D>) -> Result<f64, CoeffError> {
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CoeffError::NonFiniteValue { position: x.to_vec() })
        }
    }

    pub fn has_analytic_gradient(&self) -> bool {
        match &self.kind {
            ScalarKind::Constant(_) | ScalarKind::Radial(_) => true,
            ScalarKind::Mollified { .. } => true,
            ScalarKind::Custom { grad, .. } => grad.is_some(),
            ScalarKind::Piecewise { .. } => false,
        }
    }

    /// Analytic gradient when the field carries one. Mollified fields use the
    /// differentiated kernel quadrature.
    pub fn gradient(&self, x: &Vector<D>) -> Option<Vector<D>> {
        match &self.kind {
            ScalarKind::Constant(_) => Some([0.0; D]),
            ScalarKind::Radial(p) => {
                let r = la::norm(x);
                if r < 1e-14 {
                    return Some([0.0; D]);
                }
                Some(la::scale(x, p.derivative(r) / r))
            }
            ScalarKind::Piecewise { .. } => None,
            ScalarKind::Mollified { inner, delta, kernel } => {
                let mut g = [0.0; D];
                for (z, gw) in kernel.nodes.iter().zip(&kernel.grad_weights) {
                    let y = la::axpy(x, -*delta, z);
                    let v = inner.eval(&y);
                    for d in 0..D {
                        g[d] += gw[d] * v / delta;
                    }
                }
                Some(g)
            }
            ScalarKind::Custom { grad, .. } => grad.as_ref().map(|g| g(x)),
        }
    }

    /// Central finite-difference gradient, step `1e-5 max(1, |x|)`.
    pub fn fd_gradient(&self, x: &Vector<D>) -> Vector<D> {
        let h = 1e-5 * la::norm(x).max(1.0);
        let mut g = [0.0; D];
        for d in 0..D {
            let mut xp = *x;
            let mut xm = *x;
            xp[d] += h;
            xm[d] -= h;
            g[d] = (self.eval(&xp) - self.eval(&xm)) / (2.0 * h);
        }
        g
    }

    /// `x . grad n` by the requested route; the directional route differences
    /// along the radial direction only, which keeps the sign exact for
    /// radially monotone fields.
    pub fn x_dot_grad(&self, x: &Vector<D>, route: GradientRoute) -> Result<f64, CoeffError> {
        match self.resolve_route(route)? {
            ResolvedRoute::Analytic => {
                let g = self
                    .gradient(x)
                    .ok_or(CoeffError::MissingGradient("scalar field has no gradient"))?;
                Ok(la::dot(x, &g))
            }
            ResolvedRoute::DirectionalFd => {
                let r = la::norm(x);
                if r < 1e-12 {
                    return Ok(0.0);
                }
                let h = 1e-5 * r.max(1.0);
                let e = la::scale(x, 1.0 / r);
                let vp = self.eval(&la::axpy(x, h, &e));
                let vm = self.eval(&la::axpy(x, -h, &e));
                Ok(r * (vp - vm) / (2.0 * h))
            }
        }
    }

    fn resolve_route(&self, route: GradientRoute) -> Result<ResolvedRoute, CoeffError> {
        resolve_route_common(
            route,
            self.has_analytic_gradient(),
            self.regularity,
            matches!(&self.kind, ScalarKind::Mollified { inner, .. }
                if inner.regularity == Regularity::PiecewiseConstant),
        )
    }

    pub fn as_radial(&self) -> Option<&RadialProfile> {
        match &self.kind {
            ScalarKind::Radial(p) => Some(p),
            _ => None,
        }
    }

    fn piecewise_parts(&self) -> Option<(f64, &[(Region, f64)])> {
        match &self.kind {
            ScalarKind::Piecewise { background, parts } => Some((*background, parts)),
            ScalarKind::Constant(_) => None,
            _ => None,
        }
    }

    /// Mollified field `n_min + (pi * psi_delta)`: smooth, same bounds, the
    /// radial monotone structure is preserved exactly by positivity of the
    /// kernel weights.
    pub fn mollify(&self, delta: f64) -> Result<Self, CoeffError> {
        if !(delta > 0.0) {
            return Err(CoeffError::BadParameter("delta must be positive"));
        }
        let kernel = MollifierKernel::build(16)?;
        Ok(CoefficientField {
            kind: ScalarKind::Mollified {
                inner: Arc::new(self.clone_shallow()),
                delta,
                kernel,
            },
            regularity: Regularity::Smooth,
            n_min: self.n_min,
            n_max: self.n_max,
            support_radius: self.support_radius + delta,
        })
    }

    fn clone_shallow(&self) -> Self {
        CoefficientField {
            kind: match &self.kind {
                ScalarKind::Constant(c) => ScalarKind::Constant(*c),
                ScalarKind::Radial(p) => ScalarKind::Radial(p.clone()),
                ScalarKind::Piecewise { background, parts } => ScalarKind::Piecewise {
                    background: *background,
                    parts: parts.clone(),
                },
                ScalarKind::Mollified { inner, delta, kernel } => ScalarKind::Mollified {
                    inner: inner.clone(),
                    delta: *delta,
                    kernel: kernel.clone(),
                },
                ScalarKind::Custom { eval, grad } => {
                    ScalarKind::Custom { eval: eval.clone(), grad: grad.clone() }
                }
            },
            regularity: self.regularity,
            n_min: self.n_min,
            n_max: self.n_max,
            support_radius: self.support_radius,
        }
    }
}

impl<const D: usize> Clone for CoefficientField<D> {
    fn clone(&self) -> Self {
        self.clone_shallow()
    }
}

enum MatrixKind<const D: usize> {
    /// `c I`.
    ConstantScalar(f64),
    ConstantDiag(Vector<D>),
    /// `a(r) I`.
    Radial(RadialProfile),
    /// Piecewise-constant scalar multiples of the identity.
    Piecewise { background: f64, parts: Vec<(Region, f64)> },
    Mollified { inner: Arc<MatrixCoefficientField<D>>, delta: f64, kernel: MollifierKernel<D> },
    Custom { eval: MatrixEval<D>, grad: Option<MatrixGrad<D>> },
}

/// Matrix coefficient `A(x)`, symmetric positive definite, identity outside
/// its support radius.
pub struct MatrixCoefficientField<const D: usize> {
    kind: MatrixKind<D>,
    pub regularity: Regularity,
    pub a_min: f64,
    pub a_max: f64,
    pub support_radius: f64,
}

impl<const D: usize> core::fmt::Debug for MatrixCoefficientField<D> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let tag = match &self.kind {
            MatrixKind::ConstantScalar(c) => {
                return write!(f, "MatrixCoefficientField(constant {c} I)")
            }
            MatrixKind::ConstantDiag(_) => "diag",
            MatrixKind::Radial(_) => "radial",
            MatrixKind::Piecewise { .. } => "piecewise",
            MatrixKind::Mollified { .. } => "mollified",
            MatrixKind::Custom { .. } => "custom",
        };
        write!(
            f,
            "MatrixCoefficientField({tag}, [{}, {}], supp {})",
            self.a_min, self.a_max, self.support_radius
        )
    }
}

impl<const D: usize> MatrixCoefficientField<D> {
    pub fn identity() -> Self {
        Self::constant_scalar(1.0)
    }

    pub fn constant_scalar(c: f64) -> Self {
        MatrixCoefficientField {
            kind: MatrixKind::ConstantScalar(c),
            regularity: Regularity::Smooth,
            a_min: c,
            a_max: c,
            support_radius: 0.0,
        }
    }

    pub fn constant_diag(d: Vector<D>) -> Self {
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        MatrixCoefficientField {
            kind: MatrixKind::ConstantDiag(d),
            regularity: Regularity::Smooth,
            a_min: lo,
            a_max: hi,
            // diag != I does not settle to I at infinity; callers that need a
            // compactly supported perturbation should not use this family
            support_radius: f64::INFINITY,
        }
    }

    pub fn radial(profile: RadialProfile) -> Self {
        let (lo, hi) = profile.bounds();
        let support = profile.support_radius();
        let reg = profile.regularity();
        MatrixCoefficientField {
            kind: MatrixKind::Radial(profile),
            regularity: reg,
            a_min: lo,
            a_max: hi,
            support_radius: support,
        }
    }

    pub fn piecewise(background: f64, parts: Vec<(Region, f64)>) -> Result<Self, CoeffError> {
        validate_piecewise::<D>(&parts)?;
        if background != 1.0 {
            return Err(CoeffError::BadParameter("piecewise background must be 1"));
        }
        let mut lo = background;
        let mut hi = background;
        let mut support: f64 = 0.0;
        for (region, v) in &parts {
            if *v <= 0.0 {
                return Err(CoeffError::BadParameter("matrix coefficient values must be positive"));
            }
            lo = lo.min(*v);
            hi = hi.max(*v);
            support = support.max(region.outer_radius());
        }
        Ok(MatrixCoefficientField {
            kind: MatrixKind::Piecewise { background, parts },
            regularity: Regularity::PiecewiseConstant,
            a_min: lo,
            a_max: hi,
            support_radius: support,
        })
    }

    pub fn custom(
        eval: MatrixEval<D>,
        grad: Option<MatrixGrad<D>>,
        regularity: Regularity,
        a_min: f64,
        a_max: f64,
        support_radius: f64,
    ) -> Self {
        MatrixCoefficientField { kind: MatrixKind::Custom { eval, grad }, regularity, a_min, a_max, support_radius }
    }

    pub fn eval(&self, x: &Vector<D>) -> Matrix<D> {
        match &self.kind {
            MatrixKind::ConstantScalar(c) => la::mat_scale(&la::identity(), *c),
            MatrixKind::ConstantDiag(d) => {
                let mut m = [[0.0; D]; D];
                for i in 0..D {
                    m[i][i] = d[i];
                }
                m
            }
            MatrixKind::Radial(p) => la::mat_scale(&la::identity(), p.value(la::norm(x))),
            MatrixKind::Piecewise { background, parts } => {
                let mut v = *background;
                for (region, pv) in parts {
                    if region.contains(x) {
                        v = *pv;
                        break;
                    }
                }
                la::mat_scale(&la::identity(), v)
            }
            MatrixKind::Mollified { inner, delta, kernel } => {
                let mut m = [[0.0; D]; D];
                for (z, w) in kernel.nodes.iter().zip(&kernel.weights) {
                    let y = la::axpy(x, -*delta, z);
                    let a = inner.eval(&y);
                    for i in 0..D {
                        for j in 0..D {
                            m[i][j] += w * a[i][j];
                        }
                    }
                }
                m
            }
            MatrixKind::Custom { eval, .. } => eval(x),
        }
    }

    pub fn try_eval(&self, x: &Vector<D>) -> Result<Matrix<D>, CoeffError> {
        let m = self.eval(x);
        if m.iter().flatten().all(|v| v.is_finite()) {
            Ok(m)
        } else {
            Err(CoeffError::NonFiniteValue { position: x.to_vec() })
        }
    }

    pub fn has_analytic_gradient(&self) -> bool {
        match &self.kind {
            MatrixKind::ConstantScalar(_) | MatrixKind::ConstantDiag(_) | MatrixKind::Radial(_) => {
                true
            }
            MatrixKind::Mollified { .. } => true,
            MatrixKind::Custom { grad, .. } => grad.is_some(),
            MatrixKind::Piecewise { .. } => false,
        }
    }

    /// Partial derivatives `dA/dx_i` when available.
    pub fn gradient(&self, x: &Vector<D>) -> Option<[Matrix<D>; D]> {
        match &self.kind {
            MatrixKind::ConstantScalar(_) | MatrixKind::ConstantDiag(_) => {
                Some([[[0.0; D]; D]; D])
            }
            MatrixKind::Radial(p) => {
                let r = la::norm(x);
                let mut out = [[[0.0; D]; D]; D];
                if r < 1e-14 {
                    return Some(out);
                }
                let dv = p.derivative(r);
                for d in 0..D {
                    out[d] = la::mat_scale(&la::identity(), dv * x[d] / r);
                }
                Some(out)
            }
            MatrixKind::Piecewise { .. } => None,
            MatrixKind::Mollified { inner, delta, kernel } => {
                let mut out = [[[0.0; D]; D]; D];
                for (z, gw) in kernel.nodes.iter().zip(&kernel.grad_weights) {
                    let y = la::axpy(x, -*delta, z);
                    let a = inner.eval(&y);
                    for d in 0..D {
                        for i in 0..D {
                            for j in 0..D {
                                out[d][i][j] += gw[d] * a[i][j] / delta;
                            }
                        }
                    }
                }
                Some(out)
            }
            MatrixKind::Custom { grad, .. } => grad.as_ref().map(|g| g(x)),
        }
    }

    /// `(x . grad) A`, the matrix with entries `sum_i x_i dA_jl/dx_i`.
    pub fn x_dot_grad(&self, x: &Vector<D>, route: GradientRoute) -> Result<Matrix<D>, CoeffError> {
        match self.resolve_route(route)? {
            ResolvedRoute::Analytic => {
                let g = self
                    .gradient(x)
                    .ok_or(CoeffError::MissingGradient("matrix field has no gradient"))?;
                let mut out = [[0.0; D]; D];
                for d in 0..D {
                    for i in 0..D {
                        for j in 0..D {
                            out[i][j] += x[d] * g[d][i][j];
                        }
                    }
                }
                Ok(out)
            }
            ResolvedRoute::DirectionalFd => {
                let r = la::norm(x);
                if r < 1e-12 {
                    return Ok([[0.0; D]; D]);
                }
                let h = 1e-5 * r.max(1.0);
                let e = la::scale(x, 1.0 / r);
                let ap = self.eval(&la::axpy(x, h, &e));
                let am = self.eval(&la::axpy(x, -h, &e));
                Ok(la::mat_scale(&la::mat_sub(&ap, &am), r / (2.0 * h)))
            }
        }
    }

    fn resolve_route(&self, route: GradientRoute) -> Result<ResolvedRoute, CoeffError> {
        resolve_route_common(
            route,
            self.has_analytic_gradient(),
            self.regularity,
            matches!(&self.kind, MatrixKind::Mollified { inner, .. }
                if inner.regularity == Regularity::PiecewiseConstant),
        )
    }

    fn piecewise_parts(&self) -> Option<(f64, &[(Region, f64)])> {
        match &self.kind {
            MatrixKind::Piecewise { background, parts } => Some((*background, parts)),
            _ => None,
        }
    }

    pub fn mollify(&self, delta: f64) -> Result<Self, CoeffError> {
        if !(delta > 0.0) {
            return Err(CoeffError::BadParameter("delta must be positive"));
        }
        let kernel = MollifierKernel::build(16)?;
        Ok(MatrixCoefficientField {
            kind: MatrixKind::Mollified { inner: Arc::new(self.clone()), delta, kernel },
            regularity: Regularity::Smooth,
            a_min: self.a_min,
            a_max: self.a_max,
            support_radius: self.support_radius + delta,
        })
    }
}

impl<const D: usize> Clone for MatrixCoefficientField<D> {
    fn clone(&self) -> Self {
        MatrixCoefficientField {
            kind: match &self.kind {
                MatrixKind::ConstantScalar(c) => MatrixKind::ConstantScalar(*c),
                MatrixKind::ConstantDiag(d) => MatrixKind::ConstantDiag(*d),
                MatrixKind::Radial(p) => MatrixKind::Radial(p.clone()),
                MatrixKind::Piecewise { background, parts } => MatrixKind::Piecewise {
                    background: *background,
                    parts: parts.clone(),
                },
                MatrixKind::Mollified { inner, delta, kernel } => MatrixKind::Mollified {
                    inner: inner.clone(),
                    delta: *delta,
                    kernel: kernel.clone(),
                },
                MatrixKind::Custom { eval, grad } => {
                    MatrixKind::Custom { eval: eval.clone(), grad: grad.clone() }
                }
            },
            regularity: self.regularity,
            a_min: self.a_min,
            a_max: self.a_max,
            support_radius: self.support_radius,
        }
    }
}

fn validate_piecewise<const D: usize>(parts: &[(Region, f64)]) -> Result<(), CoeffError> {
    if D != 2 && parts.iter().any(|(r, _)| matches!(r, Region::Polygon(_))) {
        return Err(CoeffError::BadParameter("polygon regions are 2-d only"));
    }
    for (region, v) in parts {
        if !v.is_finite() {
            return Err(CoeffError::BadParameter("non-finite subdomain value"));
        }
        if !region.star_shaped_wrt_origin() {
            return Err(CoeffError::BadParameter(
                "subdomain region is not star-shaped w.r.t. the origin",
            ));
        }
    }
    // nested structure: every region must contain the previous one; for balls
    // that is increasing radii
    for w in parts.windows(2) {
        match (&w[0].0, &w[1].0) {
            (Region::Ball { radius: r0 }, Region::Ball { radius: r1 }) => {
                if r1 <= r0 {
                    return Err(CoeffError::BadParameter(
                        "piecewise ball regions must be nested innermost-first",
                    ));
                }
            }
            _ => {
                return Err(CoeffError::UnsupportedRegularity(
                    "piecewise structure must be nested balls or a single region",
                ))
            }
        }
    }
    Ok(())
}

/// The transmission pair: `A = a_i I` and `n = n_i` inside the interface,
/// identity/1 outside.
pub fn transmission_pair(
    a_i: f64,
    n_i: f64,
    interface: Region,
) -> Result<(MatrixCoefficientField<2>, CoefficientField<2>), CoeffError> {
    if a_i <= 0.0 || n_i <= 0.0 {
        return Err(CoeffError::BadParameter("transmission values must be positive"));
    }
    let a = MatrixCoefficientField::piecewise(1.0, vec![(clone_region(&interface), a_i)])?;
    let n = CoefficientField::piecewise(1.0, vec![(interface, n_i)])?;
    Ok((a, n))
}

fn clone_region(r: &Region) -> Region {
    match r {
        Region::Ball { radius } => Region::Ball { radius: *radius },
        Region::Polygon(p) => Region::Polygon(p.clone()),
    }
}

/// How the `x . grad` terms are evaluated by the checkers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientRoute {
    /// Analytic when available, otherwise directional finite differences;
    /// mollified-of-piecewise fields always take the FD route (their
    /// quadrature gradient is too noisy near the smoothed interface).
    Auto,
    Analytic,
    DirectionalFd,
}

enum ResolvedRoute {
    Analytic,
    DirectionalFd,
}

fn resolve_route_common(
    route: GradientRoute,
    has_analytic: bool,
    regularity: Regularity,
    mollified_of_rough: bool,
) -> Result<ResolvedRoute, CoeffError> {
    match route {
        GradientRoute::Analytic => {
            if has_analytic {
                Ok(ResolvedRoute::Analytic)
            } else {
                Err(CoeffError::MissingGradient("analytic gradient requested but not available"))
            }
        }
        GradientRoute::DirectionalFd => Ok(ResolvedRoute::DirectionalFd),
        GradientRoute::Auto => {
            if mollified_of_rough {
                Ok(ResolvedRoute::DirectionalFd)
            } else if has_analytic {
                Ok(ResolvedRoute::Analytic)
            } else if regularity != Regularity::PiecewiseConstant {
                Ok(ResolvedRoute::DirectionalFd)
            } else {
                Err(CoeffError::UnsupportedRegularity(
                    "piecewise-constant field has no pointwise x.grad",
                ))
            }
        }
    }
}

/// Sampling region for the almost-everywhere condition checks: a tensor grid
/// over `[-half_width, half_width]^D` plus Halton points.
#[derive(Debug, Clone, Copy)]
pub struct SamplingSpec<const D: usize> {
    pub half_width: f64,
    /// Grid density per unit length per axis (default 64).
    pub per_unit: f64,
    /// Number of additional low-discrepancy points (default 2048).
    pub quasi_points: usize,
    /// Cap on the total number of grid points.
    pub max_grid_points: usize,
}

impl<const D: usize> SamplingSpec<D> {
    /// Covers the support of a field with a 5% margin.
    pub fn for_support(support_radius: f64) -> Self {
        SamplingSpec {
            half_width: (support_radius * 1.05).max(1.0),
            per_unit: 64.0,
            quasi_points: 2048,
            max_grid_points: 200_000,
        }
    }

    pub fn with_density(mut self, per_unit: f64, quasi: usize) -> Self {
        self.per_unit = per_unit;
        self.quasi_points = quasi;
        self
    }

    fn grid_per_axis(&self) -> usize {
        let want = (2.0 * self.half_width * self.per_unit).ceil() as usize;
        let cap = (self.max_grid_points as f64).powf(1.0 / D as f64).floor() as usize;
        want.clamp(2, cap.max(2))
    }

    /// Visits every sample point.
    pub fn for_each(&self, mut f: impl FnMut(&Vector<D>)) {
        let n = self.grid_per_axis();
        let total = n.pow(D as u32);
        for flat in 0..total {
            let mut idx = flat;
            let mut x = [0.0; D];
            for slot in x.iter_mut() {
                let i = idx % n;
                idx /= n;
                *slot = -self.half_width + 2.0 * self.half_width * i as f64 / (n - 1) as f64;
            }
            f(&x);
        }
        for q in 0..self.quasi_points {
            let u: Vector<D> = halton_point(q);
            let mut x = [0.0; D];
            for d in 0..D {
                x[d] = -self.half_width + 2.0 * self.half_width * u[d];
            }
            f(&x);
        }
    }

    pub fn count(&self) -> usize {
        self.grid_per_axis().pow(D as u32) + self.quasi_points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionId {
    /// `A - (x.grad)A >= mu1` and `n + x.grad n >= mu2`.
    A1,
    /// `2A - (x.grad)A >= mu3` (with n = 1).
    A2,
    /// `2n + x.grad n >= mu4` (with A = I).
    N3,
    /// Radial monotone structure (n nondecreasing / A nonincreasing outward).
    RadialMonotone,
}

/// Outcome of a condition check; `holds` iff every margin exceeds
/// [`HOLD_TOLERANCE`].
#[derive(Debug, Clone)]
pub struct ConditionReport<const D: usize> {
    pub condition: ConditionId,
    pub holds: bool,
    /// `[mu1, mu2]` for A1, `[mu3]` for A2, `[mu4]` for N3, `[min margin]`
    /// for the monotonicity check.
    pub margins: Vec<f64>,
    pub worst_point: Vector<D>,
    pub samples: usize,
}

fn finish_report<const D: usize>(
    condition: ConditionId,
    margins: Vec<f64>,
    worst_point: Vector<D>,
    samples: usize,
) -> ConditionReport<D> {
    let holds = margins.iter().all(|&m| m > HOLD_TOLERANCE);
    ConditionReport { condition, holds, margins, worst_point, samples }
}

/// Checks `A - (x.grad)A >= mu1` and `n + x.grad n >= mu2` over the sampling
/// region; piecewise-constant pairs with the nested monotone structure are
/// dispatched to the jump-sign rule, which certifies `mu1 = A_min`,
/// `mu2 = n_min`.
pub fn check_condition_a1<const D: usize>(
    a: &MatrixCoefficientField<D>,
    n: &CoefficientField<D>,
    spec: &SamplingSpec<D>,
    route: GradientRoute,
) -> Result<ConditionReport<D>, CoeffError> {
    let a_rough = a.regularity == Regularity::PiecewiseConstant;
    let n_rough = n.regularity == Regularity::PiecewiseConstant;
    if a_rough || n_rough {
        return check_a1_jump_rule(a, n);
    }
    let mut mu1 = f64::INFINITY;
    let mut mu2 = f64::INFINITY;
    let mut worst = [0.0; D];
    let mut failure: Option<CoeffError> = None;
    spec.for_each(|x| {
        if failure.is_some() {
            return;
        }
        let av = a.eval(x);
        let xda = match a.x_dot_grad(x, route) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        let m1 = la::sym_eig_min(&la::mat_sub(&av, &xda));
        let nv = n.eval(x);
        let xdn = match n.x_dot_grad(x, route) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        let m2 = nv + xdn;
        if m1.min(m2) < mu1.min(mu2) {
            worst = *x;
        }
        mu1 = mu1.min(m1);
        mu2 = mu2.min(m2);
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(finish_report(ConditionId::A1, vec![mu1, mu2], worst, spec.count()))
}

/// Distributional reading for nested piecewise-constant pairs: per-subdomain
/// pointwise positivity plus nonnegative outward jumps of `n` and nonpositive
/// outward jumps of `A`.
fn check_a1_jump_rule<const D: usize>(
    a: &MatrixCoefficientField<D>,
    n: &CoefficientField<D>,
) -> Result<ConditionReport<D>, CoeffError> {
    // treat constants as piecewise with no parts
    let a_parts: Vec<(f64, f64)> = match (&a.kind, a.piecewise_parts()) {
        (MatrixKind::ConstantScalar(c), _) if (*c - 1.0).abs() < 1e-300 => Vec::new(),
        (_, Some((_, parts))) => {
            parts.iter().map(|(r, v)| (r.outer_radius(), *v)).collect()
        }
        _ => {
            return Err(CoeffError::UnsupportedRegularity(
                "A must be piecewise-constant (or identity) for the jump rule",
            ))
        }
    };
    let n_parts: Vec<(f64, f64)> = match (&n.kind, n.piecewise_parts()) {
        (ScalarKind::Constant(c), _) if (*c - 1.0).abs() < 1e-300 => Vec::new(),
        (_, Some((_, parts))) => {
            parts.iter().map(|(r, v)| (r.outer_radius(), *v)).collect()
        }
        _ => {
            return Err(CoeffError::UnsupportedRegularity(
                "n must be piecewise-constant (or 1) for the jump rule",
            ))
        }
    };
    // outward value sequences ending at the background 1
    let mut worst_jump_a = f64::INFINITY;
    let mut worst_jump_n = f64::INFINITY;
    let mut worst_point = [0.0; D];
    let mut seq_a: Vec<f64> = a_parts.iter().map(|p| p.1).collect();
    seq_a.push(1.0);
    for (i, w) in seq_a.windows(2).enumerate() {
        let jump = w[0] - w[1]; // must be >= 0: A nonincreasing outward
        if jump < worst_jump_a {
            worst_jump_a = jump;
            if jump < 0.0 {
                worst_point[0] = a_parts[i].0;
            }
        }
    }
    let mut seq_n: Vec<f64> = n_parts.iter().map(|p| p.1).collect();
    seq_n.push(1.0);
    for (i, w) in seq_n.windows(2).enumerate() {
        let jump = w[1] - w[0]; // must be >= 0: n nondecreasing outward
        if jump < worst_jump_n {
            worst_jump_n = jump;
            if jump < 0.0 {
                worst_point[0] = n_parts[i].0;
            }
        }
    }
    let a_ok = worst_jump_a >= -HOLD_TOLERANCE && a.a_min > HOLD_TOLERANCE;
    let n_ok = worst_jump_n >= -HOLD_TOLERANCE && n.n_min > HOLD_TOLERANCE;
    let mu1 = if a_ok { a.a_min } else { worst_jump_a.min(0.0) };
    let mu2 = if n_ok { n.n_min } else { worst_jump_n.min(0.0) };
    Ok(finish_report(
        ConditionId::A1,
        vec![mu1, mu2],
        worst_point,
        a_parts.len() + n_parts.len() + 2,
    ))
}

/// Checks `2A - (x.grad)A >= mu3`.
pub fn check_condition_a2<const D: usize>(
    a: &MatrixCoefficientField<D>,
    spec: &SamplingSpec<D>,
    route: GradientRoute,
) -> Result<ConditionReport<D>, CoeffError> {
    if a.regularity == Regularity::PiecewiseConstant {
        return Err(CoeffError::UnsupportedRegularity(
            "the A2 condition has no distributional reading for piecewise-constant A here; \
             use the monotone (A1) route",
        ));
    }
    let mut mu3 = f64::INFINITY;
    let mut worst = [0.0; D];
    let mut failure: Option<CoeffError> = None;
    spec.for_each(|x| {
        if failure.is_some() {
            return;
        }
        let av = a.eval(x);
        let xda = match a.x_dot_grad(x, route) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        let m = la::sym_eig_min(&la::mat_sub(&la::mat_scale(&av, 2.0), &xda));
        if m < mu3 {
            mu3 = m;
            worst = *x;
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(finish_report(ConditionId::A2, vec![mu3], worst, spec.count()))
}

/// Checks `2n + x.grad n >= mu4`.
pub fn check_condition_n3<const D: usize>(
    n: &CoefficientField<D>,
    spec: &SamplingSpec<D>,
    route: GradientRoute,
) -> Result<ConditionReport<D>, CoeffError> {
    if n.regularity == Regularity::PiecewiseConstant {
        return Err(CoeffError::UnsupportedRegularity(
            "the N3 condition has no distributional reading for piecewise-constant n here; \
             use the monotone (A1) route",
        ));
    }
    let mut mu4 = f64::INFINITY;
    let mut worst = [0.0; D];
    let mut failure: Option<CoeffError> = None;
    spec.for_each(|x| {
        if failure.is_some() {
            return;
        }
        let nv = n.eval(x);
        let xdn = match n.x_dot_grad(x, route) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        let m = 2.0 * nv + xdn;
        if m < mu4 {
            mu4 = m;
            worst = *x;
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(finish_report(ConditionId::N3, vec![mu4], worst, spec.count()))
}

const MONOTONE_OFFSETS: [f64; 5] = [1e-3, 1e-2, 0.05, 0.1, 0.25];

/// Verifies that `pi = n - n_min` is radially nondecreasing:
/// `n(x + h e_r) - n(x) >= -tol` over sampled rays and offsets.
pub fn check_radial_monotone_n<const D: usize>(
    n: &CoefficientField<D>,
    spec: &SamplingSpec<D>,
) -> Result<ConditionReport<D>, CoeffError> {
    let scale = spec.half_width;
    let mut margin = f64::INFINITY;
    let mut worst = [0.0; D];
    let mut failure: Option<CoeffError> = None;
    spec.for_each(|x| {
        if failure.is_some() {
            return;
        }
        let r = la::norm(x);
        if r < 1e-9 {
            return;
        }
        let e = la::scale(x, 1.0 / r);
        let base = match n.try_eval(x) {
            Ok(v) => v,
            Err(err) => {
                failure = Some(err);
                return;
            }
        };
        for h_frac in MONOTONE_OFFSETS {
            let h = h_frac * scale;
            let v = n.eval(&la::axpy(x, h, &e));
            let diff = v - base;
            if diff < margin {
                margin = diff;
                worst = *x;
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let holds = margin >= -HOLD_TOLERANCE;
    Ok(ConditionReport {
        condition: ConditionId::RadialMonotone,
        holds,
        margins: vec![margin],
        worst_point: worst,
        samples: spec.count(),
    })
}

/// Verifies that `Pi = A_max I - A` is radially nondecreasing in the
/// quadratic-form sense: `lambda_min(A(x) - A(x + h e_r)) >= -tol`.
pub fn check_radial_monotone_a<const D: usize>(
    a: &MatrixCoefficientField<D>,
    spec: &SamplingSpec<D>,
) -> Result<ConditionReport<D>, CoeffError> {
    let scale = spec.half_width;
    let mut margin = f64::INFINITY;
    let mut worst = [0.0; D];
    let mut failure: Option<CoeffError> = None;
    spec.for_each(|x| {
        if failure.is_some() {
            return;
        }
        let r = la::norm(x);
        if r < 1e-9 {
            return;
        }
        let e = la::scale(x, 1.0 / r);
        let base = match a.try_eval(x) {
            Ok(v) => v,
            Err(err) => {
                failure = Some(err);
                return;
            }
        };
        for h_frac in MONOTONE_OFFSETS {
            let h = h_frac * scale;
            let shifted = a.eval(&la::axpy(x, h, &e));
            let m = la::sym_eig_min(&la::mat_sub(&base, &shifted));
            if m < margin {
                margin = m;
                worst = *x;
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let holds = margin >= -HOLD_TOLERANCE;
    Ok(ConditionReport {
        condition: ConditionId::RadialMonotone,
        holds,
        margins: vec![margin],
        worst_point: worst,
        samples: spec.count(),
    })
}

/// Evaluates the pair `(A(x), n(x))` with finiteness diagnostics.
pub fn evaluate_pair<const D: usize>(
    a: &MatrixCoefficientField<D>,
    n: &CoefficientField<D>,
    x: &Vector<D>,
) -> Result<(Matrix<D>, f64), CoeffError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CoeffError::NonFiniteValue { position: x.to_vec() });
    }
    Ok((a.try_eval(x)?, n.try_eval(x)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_spec() -> SamplingSpec<2> {
        SamplingSpec::for_support(1.5).with_density(24.0, 512)
    }

    #[test]
    fn evaluate_pair_examples() {
        let a = MatrixCoefficientField::<2>::identity();
        let n = CoefficientField::<2>::constant(1.0);
        let (av, nv) = evaluate_pair(&a, &n, &[0.3, 0.7]).unwrap();
        assert_eq!(av, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(nv, 1.0);

        let (a, n) = transmission_pair(2.0, 0.5, Region::Ball { radius: 1.0 }).unwrap();
        let (av, nv) = evaluate_pair(&a, &n, &[0.1, 0.0]).unwrap();
        assert_eq!(av, [[2.0, 0.0], [0.0, 2.0]]);
        assert_eq!(nv, 0.5);
        let (av, nv) = evaluate_pair(&a, &n, &[3.0, 0.0]).unwrap();
        assert_eq!(av, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(nv, 1.0);
        // the interface itself takes the inner value
        let (av, nv) = evaluate_pair(&a, &n, &[1.0, 0.0]).unwrap();
        assert_eq!(av[0][0], 2.0);
        assert_eq!(nv, 0.5);

        assert!(evaluate_pair(&a, &n, &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn a1_identity_exact() {
        let a = MatrixCoefficientField::<2>::identity();
        let n = CoefficientField::<2>::constant(1.0);
        let rep = check_condition_a1(&a, &n, &unit_spec(), GradientRoute::Auto).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.margins, alloc::vec![1.0, 1.0]);
    }

    #[test]
    fn a1_ramp_profile() {
        // a(r) = 2 - r on r <= 1, 1 outside: a - r a' = 2 inside, 1 outside
        let a = MatrixCoefficientField::<2>::radial(RadialProfile::Ramp { v0: 2.0, r0: 1.0 });
        let n = CoefficientField::<2>::constant(1.0);
        let rep = check_condition_a1(&a, &n, &unit_spec(), GradientRoute::Auto).unwrap();
        assert!(rep.holds);
        assert!((rep.margins[0] - 1.0).abs() < 1e-12, "mu1 = {}", rep.margins[0]);
        assert!((rep.margins[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn a1_transmission_jump_rule() {
        let (a, n) = transmission_pair(2.0, 0.5, Region::Ball { radius: 1.0 }).unwrap();
        let rep = check_condition_a1(&a, &n, &unit_spec(), GradientRoute::Auto).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.margins, alloc::vec![1.0, 0.5]);

        // reversed jumps are trapping: a_i < 1, n_i > 1
        let (a, n) = transmission_pair(1.0, 2.0, Region::Ball { radius: 1.0 }).unwrap();
        let rep = check_condition_a1(&a, &n, &unit_spec(), GradientRoute::Auto).unwrap();
        assert!(!rep.holds);
        assert!(rep.margins[1] < 0.0);
    }

    #[test]
    fn a1_polygon_interface_jump_rule() {
        let square = Polygon::square(0.5).unwrap();
        let (a, n) = transmission_pair(2.0, 0.5, Region::Polygon(square)).unwrap();
        let rep = check_condition_a1(&a, &n, &unit_spec(), GradientRoute::Auto).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.margins, alloc::vec![1.0, 0.5]);
    }

    #[test]
    fn a2_values() {
        let a = MatrixCoefficientField::<2>::identity();
        let rep = check_condition_a2(&a, &unit_spec(), GradientRoute::Auto).unwrap();
        assert!(rep.holds);
        assert!((rep.margins[0] - 2.0).abs() < 1e-12);

        // a(r) = 2 - r: 2a - r a' = 4 - r inside (>= 3), 2 outside
        let a = MatrixCoefficientField::<2>::radial(RadialProfile::Ramp { v0: 2.0, r0: 1.0 });
        let rep = check_condition_a2(&a, &unit_spec(), GradientRoute::Auto).unwrap();
        assert!(rep.holds);
        assert!((rep.margins[0] - 2.0).abs() < 1e-12);

        // exp profile: margin 2(1-r)e^{2r} goes negative past r = 1
        let a = MatrixCoefficientField::<2>::radial(RadialProfile::ExpCut {
            rate: 2.0,
            r0: 1.5,
            blend: 0.5,
        });
        let spec = SamplingSpec::for_support(2.1).with_density(24.0, 512);
        let rep = check_condition_a2(&a, &spec, GradientRoute::Auto).unwrap();
        assert!(!rep.holds);
        assert!(rep.margins[0] < 0.0);
        // pointwise zero of the margin at r = 1
        let x = [1.0, 0.0];
        let m = la::sym_eig_min(&la::mat_sub(
            &la::mat_scale(&a.eval(&x), 2.0),
            &a.x_dot_grad(&x, GradientRoute::Analytic).unwrap(),
        ));
        assert!(m.abs() < 1e-10, "margin at r=1 is {m}");
    }

    #[test]
    fn n3_values() {
        let n = CoefficientField::<2>::constant(1.0);
        let rep = check_condition_n3(&n, &unit_spec(), GradientRoute::Auto).unwrap();
        assert!(rep.holds);
        assert!((rep.margins[0] - 2.0).abs() < 1e-12);

        // Ralston bump: margin at r = 4 is 2(1 + 2/e) - 16/e ~ -2.4146
        let n = CoefficientField::<2>::radial(RadialProfile::GaussianBump {
            amp: 2.0,
            center: 3.0,
            width: 1.0,
        });
        let spec = SamplingSpec::<2>::for_support(n.support_radius).with_density(12.0, 512);
        let rep = check_condition_n3(&n, &spec, GradientRoute::Auto).unwrap();
        assert!(!rep.holds);
        let expect = 2.0 * (1.0 + 2.0 * (-1.0f64).exp()) - 16.0 * (-1.0f64).exp();
        assert!(rep.margins[0] <= expect + 1e-3, "mu4 {} vs {}", rep.margins[0], expect);

        // inverse-square annulus: margin identically zero there
        let n = CoefficientField::<2>::radial(RadialProfile::InverseSquare {
            r_ref: 1.0,
            r_inner: 0.5,
            r_outer: 2.0,
            blend: 1.0,
        });
        let spec = SamplingSpec::<2>::for_support(3.0).with_density(16.0, 512);
        let rep = check_condition_n3(&n, &spec, GradientRoute::Auto).unwrap();
        assert!(!rep.holds, "boundary-case margin must not pass the strict test");
        assert!(rep.margins[0].abs() < 1e-9);
    }

    #[test]
    fn n3_rejects_piecewise() {
        let n = CoefficientField::<2>::step(0.5, 1.0).unwrap();
        assert!(matches!(
            check_condition_n3(&n, &unit_spec(), GradientRoute::Auto),
            Err(CoeffError::UnsupportedRegularity(_))
        ));
    }

    #[test]
    fn radial_monotone_examples() {
        let n = CoefficientField::<2>::constant(0.7);
        let rep = check_radial_monotone_n(&n, &unit_spec()).unwrap();
        assert!(rep.holds);

        // nested annuli with nondecreasing outward values
        let n = CoefficientField::<2>::piecewise(
            1.0,
            alloc::vec![
                (Region::Ball { radius: 0.4 }, 0.3),
                (Region::Ball { radius: 0.7 }, 0.6),
                (Region::Ball { radius: 1.0 }, 0.9),
            ],
        )
        .unwrap();
        let rep = check_radial_monotone_n(&n, &unit_spec()).unwrap();
        assert!(rep.holds);

        // decreasing jump: n = 2 inside, 1 outside
        let n = CoefficientField::<2>::step(2.0, 1.0).unwrap();
        let rep = check_radial_monotone_n(&n, &unit_spec()).unwrap();
        assert!(!rep.holds);
        assert!(rep.margins[0] <= -1.0 + 1e-12);

        // matrix side: nonincreasing outward holds, increasing fails
        let (a_good, _) = transmission_pair(2.0, 0.5, Region::Ball { radius: 1.0 }).unwrap();
        assert!(check_radial_monotone_a(&a_good, &unit_spec()).unwrap().holds);
        let a_bad = MatrixCoefficientField::<2>::piecewise(
            1.0,
            alloc::vec![(Region::Ball { radius: 1.0 }, 0.5)],
        )
        .unwrap();
        assert!(!check_radial_monotone_a(&a_bad, &unit_spec()).unwrap().holds);
    }

    #[test]
    fn mollifier_kernel_mass() {
        let k2 = MollifierKernel::<2>::build(16).unwrap();
        assert!((k2.mass() - 1.0).abs() < 1e-10);
        let k3 = MollifierKernel::<3>::build(16).unwrap();
        assert!((k3.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mollify_constant_is_exact() {
        let n = CoefficientField::<2>::constant(0.8);
        for delta in [0.1, 0.05] {
            let nd = n.mollify(delta).unwrap();
            for x in [[0.0, 0.0], [0.3, -0.2], [2.0, 1.0]] {
                assert!((nd.eval(&x) - 0.8).abs() < 1e-12);
                let g = nd.gradient(&x).unwrap();
                assert!(la::norm(&g) < 1e-12);
            }
        }
    }

    #[test]
    fn mollify_step_field_structure() {
        let n = CoefficientField::<2>::step(0.5, 1.0).unwrap();
        let delta = 0.1;
        let nd = n.mollify(delta).unwrap();
        assert_eq!(nd.regularity, Regularity::Smooth);
        // exact plateau values outside the smoothing layer
        assert!((nd.eval(&[0.5, 0.0]) - 0.5).abs() < 1e-12);
        assert!((nd.eval(&[0.0, 1.2]) - 1.0).abs() < 1e-12);
        // monotone transition inside the layer
        let mut prev = 0.0;
        for i in 0..=40 {
            let r = 0.85 + 0.3 * i as f64 / 40.0;
            let v = nd.eval(&[r, 0.0]);
            assert!(v >= prev - 1e-12);
            assert!(v >= 0.5 - 1e-12 && v <= 1.0 + 1e-12);
            prev = v;
        }
        // monotonicity check passes for the mollified field
        let spec = SamplingSpec::<2>::for_support(1.3).with_density(10.0, 128);
        let rep = check_radial_monotone_n(&nd, &spec).unwrap();
        assert!(rep.holds, "margin {}", rep.margins[0]);
    }

    #[test]
    fn mollify_rejects_bad_delta() {
        let n = CoefficientField::<2>::constant(1.0);
        assert!(n.mollify(0.0).is_err());
        assert!(n.mollify(-0.5).is_err());
    }

    #[test]
    fn fd_gradient_richardson_slope() {
        // smooth bump: central differences converge at order 2 to the
        // analytic gradient
        let n = CoefficientField::<2>::radial(RadialProfile::GaussianBump {
            amp: 2.0,
            center: 3.0,
            width: 1.0,
        });
        let x = [2.3, 1.1];
        let exact = n.gradient(&x).unwrap();
        let err = |h: f64| {
            let mut worst: f64 = 0.0;
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let fd = (n.eval(&xp) - n.eval(&xm)) / (2.0 * h);
                worst = worst.max((fd - exact[d]).abs());
            }
            worst
        };
        let e1 = err(1e-2);
        let e2 = err(5e-3);
        let e3 = err(2.5e-3);
        let s1 = (e1 / e2).log2();
        let s2 = (e2 / e3).log2();
        assert!((s1 - 2.0).abs() < 0.3, "slope {s1}");
        assert!((s2 - 2.0).abs() < 0.3, "slope {s2}");
    }

    #[test]
    fn a1_pass_implies_a2_pass() {
        // A >= A_min I gives 2A - (x.grad)A >= (A - (x.grad)A) + A_min I
        let mut rng = crate::rand::SplitMix64::new(2024);
        let mut tested = 0;
        while tested < 50 {
            let v0 = rng.range(1.1, 3.0);
            let r0 = rng.range(0.5, 2.0);
            let a = MatrixCoefficientField::<2>::radial(RadialProfile::Ramp { v0, r0 });
            let n = CoefficientField::<2>::constant(1.0);
            let spec = SamplingSpec::<2>::for_support(r0 * 1.2).with_density(16.0, 256);
            let rep1 = check_condition_a1(&a, &n, &spec, GradientRoute::Auto).unwrap();
            if !rep1.holds {
                continue;
            }
            let rep2 = check_condition_a2(&a, &spec, GradientRoute::Auto).unwrap();
            assert!(rep2.holds, "A1 passed but A2 failed for v0={v0} r0={r0}");
            assert!(rep2.margins[0] >= rep1.margins[0] + a.a_min - 1e-9);
            tested += 1;
        }
    }

    #[test]
    fn mollified_monotone_preserved() {
        // monotone input stays monotone after mollification
        let n = CoefficientField::<2>::piecewise(
            1.0,
            alloc::vec![
                (Region::Ball { radius: 0.5 }, 0.4),
                (Region::Ball { radius: 0.9 }, 0.7),
            ],
        )
        .unwrap();
        let spec = SamplingSpec::<2>::for_support(1.2).with_density(8.0, 128);
        assert!(check_radial_monotone_n(&n, &spec).unwrap().holds);
        for delta in [0.2, 0.05] {
            let nd = n.mollify(delta).unwrap();
            let rep = check_radial_monotone_n(&nd, &spec).unwrap();
            assert!(rep.holds, "delta {delta}: margin {}", rep.margins[0]);
            assert!(nd.n_min >= 0.4 - 1e-12);
        }
    }

    #[test]
    fn table_profile_interpolates() {
        let p = RadialProfile::from_table(alloc::vec![(0.0, 0.5), (1.0, 0.75), (2.0, 1.0)]).unwrap();
        assert_eq!(p.value(0.0), 0.5);
        assert!((p.value(0.5) - 0.625).abs() < 1e-15);
        assert_eq!(p.value(3.0), 1.0);
        assert!((p.derivative(0.5) - 0.25).abs() < 1e-15);
        assert!(RadialProfile::from_table(alloc::vec![(0.0, 1.0)]).is_err());
        assert!(RadialProfile::from_table(alloc::vec![(1.0, 1.0), (0.5, 1.0)]).is_err());
    }

    #[test]
    fn fields_are_one_outside_support() {
        let profiles = [
            RadialProfile::Ramp { v0: 2.0, r0: 1.0 },
            RadialProfile::GaussianBump { amp: 2.0, center: 3.0, width: 1.0 },
            RadialProfile::ExpCut { rate: 2.0, r0: 1.5, blend: 0.5 },
            RadialProfile::SmoothWell { depth: 0.5, r0: 2.0 },
        ];
        for p in profiles {
            let n = CoefficientField::<2>::radial(p);
            let r = n.support_radius + 0.5;
            assert!((n.eval(&[r, 0.1]) - 1.0).abs() < 1e-12);
        }
    }
}
