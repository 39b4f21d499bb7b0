//! P1 finite elements for the impedance-truncated Helmholtz problem
//!
//!   div(A grad u) + k^2 n u = -f   in Omega,
//!   u = g_D                        on the obstacle boundary,
//!   du/dnu - i k theta u = g_I     on the truncation boundary,
//!
//! assembled in the bilinear (no test-function conjugation) convention so the
//! system matrix is complex symmetric, solved by the sparse direct LU, with
//! the k-weighted norms of the solution used by the bound checks.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::coeff::{CoeffError, CoefficientField, MatrixCoefficientField};
use crate::geom::{BoundaryTag, DomainSpec, GeomError, Mesh};
use crate::la::{self, Vector};
use crate::quad::{bary_to_xy, gauss_legendre, tri_order5, TRI_ORDER2};
use crate::sparse::{factorize, CsrMatrix, SparseError};
use crate::{c64, C64};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug)]
pub enum FemError {
    Geometry(GeomError),
    Coefficient(CoeffError),
    /// Factorization hit a tiny pivot; `k` echoed (a zero impedance weight
    /// can make the discrete problem resonant).
    Singular { k: f64 },
    Solver(SparseError),
    UntaggedBoundaryEdge,
    /// `I - A` must vanish near the impedance boundary.
    SupportTouchesTruncation { support_radius: f64, boundary_distance: f64 },
    BadParameter(&'static str),
}

impl core::fmt::Display for FemError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FemError::Geometry(e) => write!(f, "geometry: {e}"),
            FemError::Coefficient(e) => write!(f, "coefficient: {e}"),
            FemError::Singular { k } => {
                write!(f, "matrix numerically singular at k = {k} (theta = 0 misuse?)")
            }
            FemError::Solver(e) => write!(f, "solver: {e}"),
            FemError::UntaggedBoundaryEdge => write!(f, "mesh has an untagged boundary edge"),
            FemError::SupportTouchesTruncation { support_radius, boundary_distance } => write!(
                f,
                "supp(I - A) (radius {support_radius}) reaches the truncation boundary (distance {boundary_distance})"
            ),
            FemError::BadParameter(w) => write!(f, "bad parameter: {w}"),
        }
    }
}

impl From<GeomError> for FemError {
    fn from(e: GeomError) -> Self {
        FemError::Geometry(e)
    }
}

impl From<CoeffError> for FemError {
    fn from(e: CoeffError) -> Self {
        FemError::Coefficient(e)
    }
}

/// Real scalar data on the impedance boundary with its essential bounds.
#[derive(Clone)]
pub struct BoundaryScalar {
    eval: Arc<dyn Fn(&Vector<2>) -> f64 + Send + Sync>,
    pub min: f64,
    pub max: f64,
}

impl BoundaryScalar {
    pub fn constant(c: f64) -> Self {
        BoundaryScalar { eval: Arc::new(move |_| c), min: c, max: c }
    }

    pub fn new(eval: Arc<dyn Fn(&Vector<2>) -> f64 + Send + Sync>, min: f64, max: f64) -> Self {
        BoundaryScalar { eval, min, max }
    }

    pub fn eval(&self, x: &Vector<2>) -> f64 {
        (self.eval)(x)
    }
}

/// Complex volume data `f(x)`.
pub type VolumeData = Arc<dyn Fn(&Vector<2>) -> C64 + Send + Sync>;
/// Complex Dirichlet data `g_D(x)` (interpolated at boundary nodes).
pub type DirichletData = Arc<dyn Fn(&Vector<2>) -> C64 + Send + Sync>;
/// Complex impedance data `g_I(x, nu)`; the outward unit normal is supplied
/// so manufactured solutions can be expressed exactly.
pub type ImpedanceData = Arc<dyn Fn(&Vector<2>, &Vector<2>) -> C64 + Send + Sync>;

/// One impedance-truncated Helmholtz problem instance.
#[derive(Clone)]
pub struct HelmholtzProblem {
    pub k: f64,
    pub a_field: MatrixCoefficientField<2>,
    pub n_field: CoefficientField<2>,
    pub theta: BoundaryScalar,
    pub source: Option<VolumeData>,
    pub dirichlet_data: Option<DirichletData>,
    pub impedance_data: Option<ImpedanceData>,
    pub domain: DomainSpec,
}

impl HelmholtzProblem {
    /// Checks `k > 0`, `theta_min > 0`, and that `I - A` is supported away
    /// from the truncation boundary.
    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.k > 0.0) {
            return Err(FemError::BadParameter("k must be positive"));
        }
        if !(self.theta.min > 0.0) {
            return Err(FemError::BadParameter("theta_min must be positive"));
        }
        let origin = [0.0, 0.0];
        let mut min_boundary_dist = f64::INFINITY;
        for i in 0..self.domain.outer.edge_count() {
            let (a, b) = self.domain.outer.edge(i);
            min_boundary_dist = min_boundary_dist.min(point_segment_distance(&origin, &a, &b));
        }
        if self.a_field.support_radius >= min_boundary_dist {
            return Err(FemError::SupportTouchesTruncation {
                support_radius: self.a_field.support_radius,
                boundary_distance: min_boundary_dist,
            });
        }
        Ok(())
    }
}

fn point_segment_distance(p: &Vector<2>, a: &Vector<2>, b: &Vector<2>) -> f64 {
    let ab = la::sub(b, a);
    let ap = la::sub(p, a);
    let len2 = la::dot(&ab, &ab);
    let t = if len2 > 0.0 { (la::dot(&ap, &ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    la::norm(&la::sub(p, &la::axpy(a, t, &ab)))
}

/// Free-node indexing with Dirichlet nodes eliminated.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub vertex_to_free: Vec<Option<usize>>,
    pub free_to_vertex: Vec<usize>,
    pub dirichlet_vertices: Vec<usize>,
}

impl DofMap {
    pub fn build(mesh: &Mesh) -> Self {
        let mut is_dirichlet = vec![false; mesh.vertices.len()];
        for &(a, b, tag) in &mesh.boundary_edges {
            if tag == BoundaryTag::GammaD {
                is_dirichlet[a] = true;
                is_dirichlet[b] = true;
            }
        }
        let mut vertex_to_free = vec![None; mesh.vertices.len()];
        let mut free_to_vertex = Vec::new();
        let mut dirichlet_vertices = Vec::new();
        for (v, &dir) in is_dirichlet.iter().enumerate() {
            if dir {
                dirichlet_vertices.push(v);
            } else {
                vertex_to_free[v] = Some(free_to_vertex.len());
                free_to_vertex.push(v);
            }
        }
        DofMap { vertex_to_free, free_to_vertex, dirichlet_vertices }
    }

    pub fn n_free(&self) -> usize {
        self.free_to_vertex.len()
    }
}

/// Assembled complex-symmetric linear system.
pub struct DiscreteSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<C64>,
    pub dof_map: DofMap,
    /// Nodal Dirichlet lift (zero at free vertices).
    pub dirichlet_values: Vec<C64>,
    pub k: f64,
    pub h_max: f64,
}

/// P1 gradients and area of a triangle.
fn p1_gradients(p0: &Vector<2>, p1: &Vector<2>, p2: &Vector<2>) -> ([Vector<2>; 3], f64) {
    let area2 = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let grads = [
        [(p1[1] - p2[1]) / area2, (p2[0] - p1[0]) / area2],
        [(p2[1] - p0[1]) / area2, (p0[0] - p2[0]) / area2],
        [(p0[1] - p1[1]) / area2, (p1[0] - p0[0]) / area2],
    ];
    (grads, 0.5 * area2)
}

/// Element stiffness and mass matrices with order-2 (edge midpoint)
/// quadrature: `K[i][j] = int (A grad phi_j).grad phi_i`,
/// `M[i][j] = int n phi_i phi_j`.
pub fn p1_element_matrices(
    p0: &Vector<2>,
    p1: &Vector<2>,
    p2: &Vector<2>,
    a_field: &MatrixCoefficientField<2>,
    n_field: &CoefficientField<2>,
) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let (grads, area) = p1_gradients(p0, p1, p2);
    let mut k = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for q in TRI_ORDER2 {
        let x = bary_to_xy(&q.bary, p0, p1, p2);
        let av = a_field.eval(&x);
        let nv = n_field.eval(&x);
        let w = q.weight * area;
        for i in 0..3 {
            let agj: [Vector<2>; 3] = [
                la::mat_vec(&av, &grads[0]),
                la::mat_vec(&av, &grads[1]),
                la::mat_vec(&av, &grads[2]),
            ];
            for j in 0..3 {
                k[i][j] += w * la::dot(&agj[j], &grads[i]);
                m[i][j] += w * nv * q.bary[i] * q.bary[j];
            }
        }
    }
    (k, m)
}

/// Outward unit normal of a boundary edge, oriented away from the interior
/// of the adjacent triangle.
fn boundary_edge_normal(mesh: &Mesh, owner: &[usize; 3], a: usize, b: usize) -> Vector<2> {
    let pa = mesh.vertices[a];
    let pb = mesh.vertices[b];
    let opp = owner.iter().copied().find(|&v| v != a && v != b).unwrap();
    let po = mesh.vertices[opp];
    let t = la::sub(&pb, &pa);
    let len = la::norm(&t);
    let mut nu = [t[1] / len, -t[0] / len];
    let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
    if la::dot(&nu, &la::sub(&mid, &po)) < 0.0 {
        nu = [-nu[0], -nu[1]];
    }
    nu
}

fn edge_owner_map(mesh: &Mesh) -> alloc::collections::BTreeMap<(usize, usize), usize> {
    let mut owner = alloc::collections::BTreeMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            owner.insert((a.min(b), a.max(b)), t);
        }
    }
    owner
}

/// Assembles the discrete system: order-2 triangle quadrature for the volume
/// terms, 2-point Gauss on the impedance edges, Dirichlet nodes interpolated
/// and lifted to the right-hand side.
pub fn assemble(problem: &HelmholtzProblem, mesh: &Mesh) -> Result<DiscreteSystem, FemError> {
    problem.validate()?;
    // every topological boundary edge must carry a tag
    {
        let mut edge_use: alloc::collections::BTreeMap<(usize, usize), usize> =
            alloc::collections::BTreeMap::new();
        for tri in &mesh.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *edge_use.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let tagged: alloc::collections::BTreeSet<(usize, usize)> = mesh
            .boundary_edges
            .iter()
            .map(|&(a, b, _)| (a.min(b), a.max(b)))
            .collect();
        for (edge, uses) in edge_use {
            if uses == 1 && !tagged.contains(&edge) {
                return Err(FemError::UntaggedBoundaryEdge);
            }
        }
    }
    let k = problem.k;
    let dof_map = DofMap::build(mesh);
    let nv = mesh.vertices.len();

    let mut dirichlet_values = vec![c64(0.0, 0.0); nv];
    for &v in &dof_map.dirichlet_vertices {
        if let Some(g) = &problem.dirichlet_data {
            dirichlet_values[v] = g(&mesh.vertices[v]);
        }
    }

    let n_free = dof_map.n_free();
    let mut triplets: Vec<(usize, usize, C64)> = Vec::with_capacity(9 * mesh.triangles.len());
    let mut rhs = vec![c64(0.0, 0.0); n_free];

    let mut push_entry = |i_vtx: usize, j_vtx: usize, val: C64, rhs: &mut Vec<C64>| {
        match (dof_map.vertex_to_free[i_vtx], dof_map.vertex_to_free[j_vtx]) {
            (Some(i), Some(j)) => triplets.push((i, j, val)),
            (Some(i), None) => rhs[i] -= val * dirichlet_values[j_vtx],
            (None, _) => {}
        }
    };

    for tri in &mesh.triangles {
        let [v0, v1, v2] = *tri;
        let (p0, p1, p2) = (mesh.vertices[v0], mesh.vertices[v1], mesh.vertices[v2]);
        let (ke, me) = p1_element_matrices(&p0, &p1, &p2, &problem.a_field, &problem.n_field);
        let (_, area) = p1_gradients(&p0, &p1, &p2);
        for i in 0..3 {
            for j in 0..3 {
                let val = c64(ke[i][j] - k * k * me[i][j], 0.0);
                push_entry(tri[i], tri[j], val, &mut rhs);
            }
        }
        if let Some(f) = &problem.source {
            for q in TRI_ORDER2 {
                let x = bary_to_xy(&q.bary, &p0, &p1, &p2);
                let fv = f(&x);
                let w = q.weight * area;
                for i in 0..3 {
                    if let Some(fi) = dof_map.vertex_to_free[tri[i]] {
                        rhs[fi] += w * fv * q.bary[i];
                    }
                }
            }
        }
    }

    // impedance boundary: -i k int theta u v and the g_I load
    let owner = edge_owner_map(mesh);
    let (gx, gw) = gauss_legendre(2);
    for &(a, b, tag) in &mesh.boundary_edges {
        if tag != BoundaryTag::GammaI {
            continue;
        }
        let pa = mesh.vertices[a];
        let pb = mesh.vertices[b];
        let len = la::norm(&la::sub(&pb, &pa));
        let tri = mesh.triangles[owner[&(a.min(b), a.max(b))]];
        let nu = boundary_edge_normal(mesh, &tri, a, b);
        for (xi, wi) in gx.iter().zip(&gw) {
            let t = 0.5 * (xi + 1.0);
            let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            let w = 0.5 * len * wi;
            let theta = problem.theta.eval(&x);
            let phi = [1.0 - t, t];
            let verts = [a, b];
            for i in 0..2 {
                for j in 0..2 {
                    let val = c64(0.0, -k * theta) * (w * phi[i] * phi[j]);
                    push_entry(verts[i], verts[j], val, &mut rhs);
                }
                if let (Some(fi), Some(g)) = (dof_map.vertex_to_free[verts[i]], &problem.impedance_data) {
                    rhs[fi] += w * g(&x, &nu) * phi[i];
                }
            }
        }
    }

    let matrix = CsrMatrix::from_triplets(n_free, triplets);
    Ok(DiscreteSystem { matrix, rhs, dof_map, dirichlet_values, k, h_max: mesh.h_max })
}

/// Solved nodal field (Dirichlet values included) with the solver residual.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub nodal_values: Vec<C64>,
    pub relative_residual: f64,
}

pub fn solve(system: &DiscreteSystem) -> Result<SolutionField, FemError> {
    let lu = factorize(&system.matrix).map_err(|e| match e {
        SparseError::NumericallySingular { .. } => FemError::Singular { k: system.k },
        other => FemError::Solver(other),
    })?;
    let x = lu.solve(&system.rhs).map_err(FemError::Solver)?;
    let residual = system.matrix.relative_residual(&x, &system.rhs);
    let mut nodal = system.dirichlet_values.clone();
    for (free, &vtx) in system.dof_map.free_to_vertex.iter().enumerate() {
        nodal[vtx] = x[free];
    }
    Ok(SolutionField { nodal_values: nodal, relative_residual: residual })
}

/// Norms of a nodal P1 field: exact quadrature for the volume terms, exact
/// edge integrals for the traces, element-wise conormal flux on the
/// Dirichlet boundary.
#[derive(Debug, Clone, Copy, Default)]
pub struct Norms {
    pub grad_l2: f64,
    pub l2: f64,
    /// `sqrt(grad^2 + k^2 l2^2)`.
    pub h1k: f64,
    pub trace_gamma_i: f64,
    pub trace_gamma_d: f64,
    pub conormal_gamma_d: f64,
}

pub fn compute_norms(
    u: &[C64],
    mesh: &Mesh,
    k: f64,
    a_field: &MatrixCoefficientField<2>,
) -> Norms {
    let mut grad2 = 0.0;
    let mut l22 = 0.0;
    for tri in &mesh.triangles {
        let [v0, v1, v2] = *tri;
        let (p0, p1, p2) = (mesh.vertices[v0], mesh.vertices[v1], mesh.vertices[v2]);
        let (grads, area) = p1_gradients(&p0, &p1, &p2);
        let mut gx = c64(0.0, 0.0);
        let mut gy = c64(0.0, 0.0);
        for i in 0..3 {
            gx += u[tri[i]] * grads[i][0];
            gy += u[tri[i]] * grads[i][1];
        }
        grad2 += area * (gx.norm_sqr() + gy.norm_sqr());
        // exact P1 mass: area/12 [[2,1,1],[1,2,1],[1,1,2]]
        let loc = [u[v0], u[v1], u[v2]];
        let mut mass = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mij = if i == j { 2.0 } else { 1.0 };
                mass += mij * (loc[i].conj() * loc[j]).re;
            }
        }
        l22 += area / 12.0 * mass;
    }
    let owner = edge_owner_map(mesh);
    let mut trace_i2 = 0.0;
    let mut trace_d2 = 0.0;
    let mut conormal2 = 0.0;
    for &(a, b, tag) in &mesh.boundary_edges {
        let pa = mesh.vertices[a];
        let pb = mesh.vertices[b];
        let len = la::norm(&la::sub(&pb, &pa));
        let (ua, ub) = (u[a], u[b]);
        // exact edge integral of |linear|^2
        let tr = len * (ua.norm_sqr() + (ua.conj() * ub).re + ub.norm_sqr()) / 3.0;
        match tag {
            BoundaryTag::GammaI => trace_i2 += tr,
            BoundaryTag::GammaD => {
                trace_d2 += tr;
                let tri = mesh.triangles[owner[&(a.min(b), a.max(b))]];
                let nu = boundary_edge_normal(mesh, &tri, a, b);
                let (p0, p1, p2) = (
                    mesh.vertices[tri[0]],
                    mesh.vertices[tri[1]],
                    mesh.vertices[tri[2]],
                );
                let (grads, _) = p1_gradients(&p0, &p1, &p2);
                let mut gx = c64(0.0, 0.0);
                let mut gy = c64(0.0, 0.0);
                for i in 0..3 {
                    gx += u[tri[i]] * grads[i][0];
                    gy += u[tri[i]] * grads[i][1];
                }
                let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                let av = a_field.eval(&mid);
                let flux = (av[0][0] * nu[0] + av[1][0] * nu[1]) * gx
                    + (av[0][1] * nu[0] + av[1][1] * nu[1]) * gy;
                conormal2 += len * flux.norm_sqr();
            }
        }
    }
    let grad_l2 = grad2.sqrt();
    let l2 = l22.sqrt();
    Norms {
        grad_l2,
        l2,
        h1k: (grad2 + k * k * l22).sqrt(),
        trace_gamma_i: trace_i2.sqrt(),
        trace_gamma_d: trace_d2.sqrt(),
        conormal_gamma_d: conormal2.sqrt(),
    }
}

/// H1k Gram matrix `int grad u . grad v + k^2 u v` on the free nodes (real
/// SPD, stored complex) for the inf-sup geometry.
pub fn h1k_gram(mesh: &Mesh, k: f64, dof_map: &DofMap) -> CsrMatrix {
    let identity = MatrixCoefficientField::<2>::identity();
    let one = CoefficientField::<2>::constant(1.0);
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    for tri in &mesh.triangles {
        let [v0, v1, v2] = *tri;
        let (p0, p1, p2) = (mesh.vertices[v0], mesh.vertices[v1], mesh.vertices[v2]);
        let (ke, me) = p1_element_matrices(&p0, &p1, &p2, &identity, &one);
        for i in 0..3 {
            for j in 0..3 {
                if let (Some(fi), Some(fj)) =
                    (dof_map.vertex_to_free[tri[i]], dof_map.vertex_to_free[tri[j]])
                {
                    triplets.push((fi, fj, c64(ke[i][j] + k * k * me[i][j], 0.0)));
                }
            }
        }
    }
    CsrMatrix::from_triplets(dof_map.n_free(), triplets)
}

/// `a(u_h, u_h)` recomputed by direct element/edge quadrature, independent of
/// the assembled matrix.
pub fn sesquilinear_energy(problem: &HelmholtzProblem, mesh: &Mesh, u: &[C64]) -> C64 {
    let k = problem.k;
    let mut acc = c64(0.0, 0.0);
    for tri in &mesh.triangles {
        let [v0, v1, v2] = *tri;
        let (p0, p1, p2) = (mesh.vertices[v0], mesh.vertices[v1], mesh.vertices[v2]);
        let (grads, area) = p1_gradients(&p0, &p1, &p2);
        let mut g = [c64(0.0, 0.0); 2];
        for i in 0..3 {
            g[0] += u[tri[i]] * grads[i][0];
            g[1] += u[tri[i]] * grads[i][1];
        }
        for q in TRI_ORDER2 {
            let x = bary_to_xy(&q.bary, &p0, &p1, &p2);
            let av = problem.a_field.eval(&x);
            let nv = problem.n_field.eval(&x);
            let mut uval = c64(0.0, 0.0);
            for i in 0..3 {
                uval += u[tri[i]] * q.bary[i];
            }
            let ag = la::mat_cvec(&av, &g);
            let mut agg = c64(0.0, 0.0);
            for d in 0..2 {
                agg += ag[d] * g[d].conj();
            }
            acc += (area * q.weight) * (agg - k * k * nv * uval.norm_sqr());
        }
    }
    let (gx, gw) = gauss_legendre(2);
    for &(a, b, tag) in &mesh.boundary_edges {
        if tag != BoundaryTag::GammaI {
            continue;
        }
        let pa = mesh.vertices[a];
        let pb = mesh.vertices[b];
        let len = la::norm(&la::sub(&pb, &pa));
        for (xi, wi) in gx.iter().zip(&gw) {
            let t = 0.5 * (xi + 1.0);
            let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            let w = 0.5 * len * wi;
            let uval = u[a] * (1.0 - t) + u[b] * t;
            acc += c64(0.0, -k * problem.theta.eval(&x)) * (w * uval.norm_sqr());
        }
    }
    acc
}

/// `F(u_h) = int f conj(u_h) + int_GammaI g_I conj(u_h)` by quadrature.
pub fn functional_value(problem: &HelmholtzProblem, mesh: &Mesh, u: &[C64]) -> C64 {
    let mut acc = c64(0.0, 0.0);
    if let Some(f) = &problem.source {
        for tri in &mesh.triangles {
            let [v0, v1, v2] = *tri;
            let (p0, p1, p2) = (mesh.vertices[v0], mesh.vertices[v1], mesh.vertices[v2]);
            let (_, area) = p1_gradients(&p0, &p1, &p2);
            for q in TRI_ORDER2 {
                let x = bary_to_xy(&q.bary, &p0, &p1, &p2);
                let mut uval = c64(0.0, 0.0);
                for i in 0..3 {
                    uval += u[tri[i]] * q.bary[i];
                }
                acc += (area * q.weight) * f(&x) * uval.conj();
            }
        }
    }
    if let Some(g) = &problem.impedance_data {
        let owner = edge_owner_map(mesh);
        let (gx, gw) = gauss_legendre(2);
        for &(a, b, tag) in &mesh.boundary_edges {
            if tag != BoundaryTag::GammaI {
                continue;
            }
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            let len = la::norm(&la::sub(&pb, &pa));
            let tri = mesh.triangles[owner[&(a.min(b), a.max(b))]];
            let nu = boundary_edge_normal(mesh, &tri, a, b);
            for (xi, wi) in gx.iter().zip(&gw) {
                let t = 0.5 * (xi + 1.0);
                let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                let w = 0.5 * len * wi;
                let uval = u[a] * (1.0 - t) + u[b] * t;
                acc += w * g(&x, &nu) * uval.conj();
            }
        }
    }
    acc
}

/// `int_GammaI theta |u_h|^2` (for the imaginary-part identity).
pub fn impedance_trace_energy(problem: &HelmholtzProblem, mesh: &Mesh, u: &[C64]) -> f64 {
    let (gx, gw) = gauss_legendre(2);
    let mut acc = 0.0;
    for &(a, b, tag) in &mesh.boundary_edges {
        if tag != BoundaryTag::GammaI {
            continue;
        }
        let pa = mesh.vertices[a];
        let pb = mesh.vertices[b];
        let len = la::norm(&la::sub(&pb, &pa));
        for (xi, wi) in gx.iter().zip(&gw) {
            let t = 0.5 * (xi + 1.0);
            let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            let w = 0.5 * len * wi;
            let uval = u[a] * (1.0 - t) + u[b] * t;
            acc += w * problem.theta.eval(&x) * uval.norm_sqr();
        }
    }
    acc
}

/// L2 and H1-seminorm errors of a nodal field against an analytic reference,
/// by order-5 quadrature.
pub fn errors_vs_reference(
    mesh: &Mesh,
    u: &[C64],
    reference: &dyn Fn(&Vector<2>) -> C64,
    reference_grad: &dyn Fn(&Vector<2>) -> [C64; 2],
) -> (f64, f64) {
    let rule = tri_order5();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for tri in &mesh.triangles {
        let [v0, v1, v2] = *tri;
        let (p0, p1, p2) = (mesh.vertices[v0], mesh.vertices[v1], mesh.vertices[v2]);
        let (grads, area) = p1_gradients(&p0, &p1, &p2);
        let mut g = [c64(0.0, 0.0); 2];
        for i in 0..3 {
            g[0] += u[tri[i]] * grads[i][0];
            g[1] += u[tri[i]] * grads[i][1];
        }
        for q in rule.iter() {
            let x = bary_to_xy(&q.bary, &p0, &p1, &p2);
            let mut uh = c64(0.0, 0.0);
            for i in 0..3 {
                uh += u[tri[i]] * q.bary[i];
            }
            let w = area * q.weight;
            l2 += w * (uh - reference(&x)).norm_sqr();
            let gr = reference_grad(&x);
            h1 += w * ((g[0] - gr[0]).norm_sqr() + (g[1] - gr[1]).norm_sqr());
        }
    }
    (l2.sqrt(), h1.sqrt())
}

/// Mesh width from the resolution rule `h = min(h0, 2 pi / (k ppw))`.
pub fn mesh_width_rule(k: f64, h0: f64, points_per_wavelength: f64) -> f64 {
    h0.min(2.0 * core::f64::consts::PI / (k * points_per_wavelength))
}

/// One row of a manufactured-solution convergence study.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub h_target: f64,
    pub h_max: f64,
    pub l2_error: f64,
    pub h1_error: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub l2_slope: f64,
    pub h1_slope: f64,
}

/// Plane-wave manufactured solution `u = exp(i k d.x)` on the square
/// `[-half, half]^2` with pure impedance truncation: `f = 0` and
/// `g_I = du/dnu - i k u` computed from the exact solution.
pub fn manufactured_plane_wave_convergence(
    k: f64,
    direction: Vector<2>,
    half_width: f64,
    h_targets: &[f64],
) -> Result<ConvergenceReport, FemError> {
    if h_targets.len() < 2 {
        return Err(FemError::BadParameter("need at least two mesh widths"));
    }
    let dlen = la::norm(&direction);
    let dir = la::scale(&direction, 1.0 / dlen);
    let exact = move |x: &Vector<2>| c64(0.0, k * la::dot(&dir, x)).exp();
    let exact_grad = move |x: &Vector<2>| {
        let e = exact(x);
        [e * c64(0.0, k * dir[0]), e * c64(0.0, k * dir[1])]
    };
    let g_i: ImpedanceData = Arc::new(move |x: &Vector<2>, nu: &Vector<2>| {
        // du/dnu - i k u = (i k d.nu - i k) u
        let e = c64(0.0, k * la::dot(&dir, x)).exp();
        c64(0.0, k * (la::dot(&dir, nu) - 1.0)) * e
    });
    let domain = DomainSpec::without_obstacle(
        crate::geom::Polygon::square(half_width).map_err(FemError::Geometry)?,
    );
    let mut rows = Vec::new();
    for &h in h_targets {
        let mesh = crate::geom::build_mesh(&domain, h)?;
        let problem = HelmholtzProblem {
            k,
            a_field: MatrixCoefficientField::identity(),
            n_field: CoefficientField::constant(1.0),
            theta: BoundaryScalar::constant(1.0),
            source: None,
            dirichlet_data: None,
            impedance_data: Some(g_i.clone()),
            domain: domain.clone(),
        };
        let system = assemble(&problem, &mesh)?;
        let solution = solve(&system)?;
        let (l2, h1) =
            errors_vs_reference(&mesh, &solution.nodal_values, &exact, &exact_grad);
        rows.push(ConvergenceRow { h_target: h, h_max: mesh.h_max, l2_error: l2, h1_error: h1 });
    }
    // least-squares slope in log-log
    let slope = |err: &dyn Fn(&ConvergenceRow) -> f64| {
        let xs: Vec<f64> = rows.iter().map(|r| r.h_max.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| err(r).ln()).collect();
        let np = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        (np * sxy - sx * sy) / (np * sxx - sx * sx)
    };
    let l2_slope = slope(&|r| r.l2_error);
    let h1_slope = slope(&|r| r.h1_error);
    Ok(ConvergenceReport { rows, l2_slope, h1_slope })
}
