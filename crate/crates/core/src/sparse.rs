//! Complex sparse matrices in compressed-row form and a direct LU solver.
//!
//! The factorization is left-looking (Gilbert-Peierls) with partial pivoting,
//! preceded by a reverse Cuthill-McKee ordering to keep fill local. That is
//! plenty for the desk-scale systems assembled here (tens of thousands of
//! unknowns on a planar mesh).

use alloc::vec;
use alloc::vec::Vec;

use crate::{c64, C64};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub enum SparseError {
    /// Pivot magnitude below 1e-300: numerically singular. Carries the
    /// elimination step at which it happened.
    NumericallySingular { step: usize },
    /// Iterative estimate did not converge; carries the last value.
    IterationStagnated { iterations: usize, last: f64 },
    ShapeMismatch,
}

impl core::fmt::Display for SparseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SparseError::NumericallySingular { step } => {
                write!(f, "numerically singular: |pivot| < 1e-300 at elimination step {step}")
            }
            SparseError::IterationStagnated { iterations, last } => {
                write!(f, "inverse iteration stagnated after {iterations} iterations (last {last})")
            }
            SparseError::ShapeMismatch => write!(f, "operand shapes do not match"),
        }
    }
}

/// Square complex sparse matrix, compressed rows, columns sorted within each
/// row, duplicates summed.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<C64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                let tail = values.len() - 1;
                values[tail] += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] = col_idx.len();
                last = Some((r, c));
            }
        }
        for r in 0..n {
            if row_ptr[r + 1] < row_ptr[r] {
                row_ptr[r + 1] = row_ptr[r];
            }
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => c64(0.0, 0.0),
        }
    }

    pub fn mat_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![c64(0.0, 0.0); self.n];
        for i in 0..self.n {
            let mut s = c64(0.0, 0.0);
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            y[i] = s;
        }
        y
    }

    /// Largest |A_ij - A_ji| over the pattern; zero for complex-symmetric
    /// assembly.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                let d = self.values[p] - self.entry(j, i);
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// Relative residual `|Ax - b| / |b|`.
    pub fn relative_residual(&self, x: &[C64], b: &[C64]) -> f64 {
        let ax = self.mat_vec(x);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.n {
            num += (ax[i] - b[i]).norm_sqr();
            den += b[i].norm_sqr();
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// Reverse Cuthill-McKee ordering of the (symmetrized) pattern; returns the
/// permutation `perm` such that node `perm[i]` becomes index `i`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for p in a.row_ptr[i]..a.row_ptr[i + 1] {
            let j = a.col_idx[p];
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue: Vec<usize> = Vec::new();
    loop {
        let start = match (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)) {
            Some(s) => s,
            None => break,
        };
        let far = bfs_farthest(start, &adj, &visited);
        queue.clear();
        queue.push(far);
        visited[far] = true;
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            order.push(u);
            let mut nbrs: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            nbrs.sort_unstable_by_key(|&v| (degree[v], v));
            for v in nbrs {
                visited[v] = true;
                queue.push(v);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_farthest(start: usize, adj: &[Vec<usize>], global_visited: &[bool]) -> usize {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut queue = vec![start];
    seen[start] = true;
    let mut head = 0;
    let mut last = start;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        last = u;
        for &v in &adj[u] {
            if !seen[v] && !global_visited[v] {
                seen[v] = true;
                queue.push(v);
            }
        }
    }
    last
}

/// LU factors of the fill-permuted matrix with partial pivoting:
/// `P_r (P A P^T) = L U`.
pub struct SparseLu {
    n: usize,
    /// fill ordering: original index of permuted index i
    perm: Vec<usize>,
    /// pivot position of permuted row r
    pinv: Vec<usize>,
    /// L columns (unit diagonal implied), row indices in pivot order
    l_cols: Vec<Vec<(usize, C64)>>,
    /// U columns, diagonal stored last
    u_cols: Vec<Vec<(usize, C64)>>,
}

/// Factorize with RCM preordering and partial pivoting (Gilbert-Peierls).
pub fn factorize(a: &CsrMatrix) -> Result<SparseLu, SparseError> {
    let n = a.n;
    let perm = reverse_cuthill_mckee(a);
    let mut inv_perm = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        inv_perm[old] = new;
    }
    // permuted matrix in compressed-column form
    let mut cols: Vec<Vec<(usize, C64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for p in a.row_ptr[i]..a.row_ptr[i + 1] {
            let j = a.col_idx[p];
            cols[inv_perm[j]].push((inv_perm[i], a.values[p]));
        }
    }
    for c in cols.iter_mut() {
        c.sort_unstable_by_key(|e| e.0);
    }

    let none = usize::MAX;
    let mut pinv = vec![none; n];
    let mut l_cols: Vec<Vec<(usize, C64)>> = Vec::with_capacity(n);
    let mut u_cols: Vec<Vec<(usize, C64)>> = Vec::with_capacity(n);
    let mut x = vec![c64(0.0, 0.0); n];
    let mut mark = vec![usize::MAX; n];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut topo: Vec<usize> = Vec::new();

    for j in 0..n {
        // pattern of x = L \ B(:, j) by DFS through pivotal columns of L
        topo.clear();
        for &(r, _) in &cols[j] {
            if mark[r] != j {
                stack.clear();
                stack.push((r, 0));
                mark[r] = j;
                while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                    let piv = pinv[node];
                    let deps: &[(usize, C64)] = if piv == none { &[] } else { &l_cols[piv] };
                    let mut advanced = false;
                    while *next < deps.len() {
                        let child = deps[*next].0;
                        *next += 1;
                        if mark[child] != j {
                            mark[child] = j;
                            stack.push((child, 0));
                            advanced = true;
                            break;
                        }
                    }
                    if !advanced {
                        topo.push(node);
                        stack.pop();
                    }
                }
            }
        }
        for &r in topo.iter() {
            x[r] = c64(0.0, 0.0);
        }
        for &(r, v) in &cols[j] {
            x[r] = v;
        }
        // numeric solve in topological order (reverse postorder)
        for idx in (0..topo.len()).rev() {
            let r = topo[idx];
            let piv = pinv[r];
            if piv == none {
                continue;
            }
            let xr = x[r];
            if xr.norm_sqr() == 0.0 {
                continue;
            }
            for &(row, lv) in &l_cols[piv] {
                x[row] -= lv * xr;
            }
        }
        // split entries into U (pivotal rows) and pivot candidates
        let mut u_col: Vec<(usize, C64)> = Vec::new();
        let mut best: Option<(f64, usize)> = None;
        for &r in topo.iter() {
            let piv = pinv[r];
            if piv != none {
                u_col.push((piv, x[r]));
            } else {
                let mag = x[r].norm();
                best = match best {
                    Some((bm, br)) if bm > mag || (bm == mag && br < r) => Some((bm, br)),
                    _ => Some((mag, r)),
                };
            }
        }
        let (pmag, prow_j) = best.ok_or(SparseError::NumericallySingular { step: j })?;
        if pmag < 1e-300 {
            return Err(SparseError::NumericallySingular { step: j });
        }
        let pivot = x[prow_j];
        pinv[prow_j] = j;
        u_col.sort_unstable_by_key(|e| e.0);
        u_col.push((j, pivot));
        let mut l_col: Vec<(usize, C64)> = Vec::new();
        for &r in topo.iter() {
            if pinv[r] == none && x[r].norm_sqr() != 0.0 {
                l_col.push((r, x[r] / pivot));
            }
        }
        l_col.sort_unstable_by_key(|e| e.0);
        l_cols.push(l_col);
        u_cols.push(u_col);
    }
    // remap L rows from permuted-row indices to pivot positions
    for col in l_cols.iter_mut() {
        for e in col.iter_mut() {
            e.0 = pinv[e.0];
        }
        col.sort_unstable_by_key(|e| e.0);
    }
    Ok(SparseLu { n, perm, pinv, l_cols, u_cols })
}

impl SparseLu {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>, SparseError> {
        if b.len() != self.n {
            return Err(SparseError::ShapeMismatch);
        }
        let n = self.n;
        let mut y = vec![c64(0.0, 0.0); n];
        for i in 0..n {
            y[self.pinv[i]] = b[self.perm[i]];
        }
        for j in 0..n {
            let yj = y[j];
            if yj.norm_sqr() != 0.0 {
                for &(r, v) in &self.l_cols[j] {
                    y[r] -= v * yj;
                }
            }
        }
        for j in (0..n).rev() {
            let (dr, dv) = *self.u_cols[j].last().unwrap();
            debug_assert_eq!(dr, j);
            let wj = y[j] / dv;
            y[j] = wj;
            if wj.norm_sqr() != 0.0 {
                for &(r, v) in &self.u_cols[j][..self.u_cols[j].len() - 1] {
                    y[r] -= v * wj;
                }
            }
        }
        let mut out = vec![c64(0.0, 0.0); n];
        for j in 0..n {
            out[self.perm[j]] = y[j];
        }
        Ok(out)
    }

    /// Solve `A^H x = b` using the same factors.
    pub fn solve_adjoint(&self, b: &[C64]) -> Result<Vec<C64>, SparseError> {
        if b.len() != self.n {
            return Err(SparseError::ShapeMismatch);
        }
        let n = self.n;
        // with B := P A P^T and P_r B = L U: B^H = U^H L^H P_r
        let mut c = vec![c64(0.0, 0.0); n];
        for j in 0..n {
            c[j] = b[self.perm[j]];
        }
        // forward: U^H w = c (U^H lower triangular; column j of U = row j of U^H)
        let mut w = vec![c64(0.0, 0.0); n];
        for j in 0..n {
            let mut s = c[j];
            let col = &self.u_cols[j];
            for &(r, v) in &col[..col.len() - 1] {
                s -= v.conj() * w[r];
            }
            let (_, dv) = *col.last().unwrap();
            w[j] = s / dv.conj();
        }
        // backward: L^H y = w (unit diagonal)
        for j in (0..n).rev() {
            let mut s = w[j];
            for &(r, v) in &self.l_cols[j] {
                s -= v.conj() * w[r];
            }
            w[j] = s;
        }
        // undo pivoting and fill ordering
        let mut out = vec![c64(0.0, 0.0); n];
        for i in 0..n {
            out[self.perm[i]] = w[self.pinv[i]];
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SigmaMinResult {
    pub sigma: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Smallest generalized singular value of `M` in the geometry of the SPD
/// Gram matrix `G`: sqrt of the smallest eigenvalue of
/// `M^H G^{-1} M u = lambda G u`, by inverse power iteration with both
/// inverses applied through LU factorizations.
pub fn generalized_sigma_min(
    m: &CsrMatrix,
    g: &CsrMatrix,
    max_iterations: usize,
    tol: f64,
) -> Result<SigmaMinResult, SparseError> {
    if m.n != g.n {
        return Err(SparseError::ShapeMismatch);
    }
    let n = m.n;
    let lu_m = factorize(m)?;
    let lu_g = factorize(g)?;
    let mut rng = crate::rand::SplitMix64::new(0x5eed_1234);
    let mut x: Vec<C64> =
        (0..n).map(|_| c64(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0))).collect();
    let g_inner = |u: &[C64], gv: &[C64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            s += (u[i].conj() * gv[i]).re;
        }
        s
    };
    let mut sigma_prev = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let gx = g.mat_vec(&x);
        let nrm = g_inner(&x, &gx).max(0.0).sqrt();
        if nrm == 0.0 {
            return Err(SparseError::IterationStagnated { iterations, last: 0.0 });
        }
        let gx: Vec<C64> = gx.iter().map(|v| v / nrm).collect();
        for v in x.iter_mut() {
            *v /= nrm;
        }
        // Rayleigh quotient: sigma^2 = (Mx)^H G^{-1} (Mx) at |x|_G = 1
        let mx = m.mat_vec(&x);
        let ginv_mx = lu_g.solve(&mx)?;
        let mut num = 0.0;
        for i in 0..n {
            num += (mx[i].conj() * ginv_mx[i]).re;
        }
        let sigma = num.max(0.0).sqrt();
        if (sigma - sigma_prev).abs() <= tol * sigma.max(1e-300) {
            return Ok(SigmaMinResult { sigma, iterations, converged: true });
        }
        sigma_prev = sigma;
        // x <- (M^H G^{-1} M)^{-1} G x = M^{-1} G M^{-H} G x
        let t = lu_m.solve_adjoint(&gx)?;
        let gt = g.mat_vec(&t);
        x = lu_m.solve(&gt)?;
    }
    Ok(SigmaMinResult { sigma: sigma_prev, iterations, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rand::SplitMix64;

    fn dense_solve(a: &mut [Vec<C64>], b: &mut [C64]) {
        let n = b.len();
        for j in 0..n {
            let piv = (j..n)
                .max_by(|&p, &q| a[p][j].norm().partial_cmp(&a[q][j].norm()).unwrap())
                .unwrap();
            a.swap(j, piv);
            b.swap(j, piv);
            for i in (j + 1)..n {
                let f = a[i][j] / a[j][j];
                for k in j..n {
                    let v = a[j][k];
                    a[i][k] -= f * v;
                }
                let bj = b[j];
                b[i] -= f * bj;
            }
        }
        for j in (0..n).rev() {
            let mut s = b[j];
            for k in (j + 1)..n {
                s -= a[j][k] * b[k];
            }
            b[j] = s / a[j][j];
        }
    }

    fn random_system(n: usize, seed: u64) -> (CsrMatrix, Vec<C64>) {
        let mut rng = SplitMix64::new(seed);
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j || rng.next_f64() < 0.2 {
                    let re = rng.range(-1.0, 1.0) + if i == j { 4.0 } else { 0.0 };
                    let im = rng.range(-1.0, 1.0);
                    triplets.push((i, j, c64(re, im)));
                }
            }
        }
        let b: Vec<C64> =
            (0..n).map(|_| c64(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0))).collect();
        (CsrMatrix::from_triplets(n, triplets), b)
    }

    #[test]
    fn hand_2x2_system() {
        let m = CsrMatrix::from_triplets(
            2,
            alloc::vec![
                (0, 0, c64(2.0, 0.0)),
                (0, 1, c64(1.0, 0.0)),
                (1, 0, c64(1.0, 0.0)),
                (1, 1, c64(2.0, 0.0)),
            ],
        );
        let lu = factorize(&m).unwrap();
        let x = lu.solve(&[c64(3.0, 0.0), c64(3.0, 0.0)]).unwrap();
        assert!((x[0] - c64(1.0, 0.0)).norm() < 1e-14);
        assert!((x[1] - c64(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let m = CsrMatrix::from_triplets(
            2,
            alloc::vec![(0, 0, c64(1.0, 0.0)), (0, 0, c64(1.5, 0.5)), (1, 1, c64(1.0, 0.0))],
        );
        assert_eq!(m.nnz(), 2);
        assert!((m.entry(0, 0) - c64(2.5, 0.5)).norm() < 1e-15);
        assert_eq!(m.entry(0, 1), c64(0.0, 0.0));
    }

    #[test]
    fn matches_dense_oracle() {
        for seed in [1u64, 2, 3, 4] {
            let n = 40;
            let (m, b) = random_system(n, seed);
            let lu = factorize(&m).unwrap();
            let x = lu.solve(&b).unwrap();
            let mut dense = alloc::vec![alloc::vec![c64(0.0, 0.0); n]; n];
            for i in 0..n {
                for p in m.row_ptr[i]..m.row_ptr[i + 1] {
                    dense[i][m.col_idx[p]] = m.values[p];
                }
            }
            let mut bd = b.clone();
            dense_solve(&mut dense, &mut bd);
            for i in 0..n {
                assert!((x[i] - bd[i]).norm() < 1e-9, "seed {seed} row {i}");
            }
            assert!(m.relative_residual(&x, &b) < 1e-12);
        }
    }

    #[test]
    fn adjoint_solve_consistent() {
        let (m, b) = random_system(30, 9);
        let lu = factorize(&m).unwrap();
        let x = lu.solve_adjoint(&b).unwrap();
        let mut r = b.clone();
        for i in 0..m.n {
            for p in m.row_ptr[i]..m.row_ptr[i + 1] {
                let j = m.col_idx[p];
                r[j] -= m.values[p].conj() * x[i];
            }
        }
        let num: f64 = r.iter().map(|v| v.norm_sqr()).sum();
        let den: f64 = b.iter().map(|v| v.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-12);
    }

    #[test]
    fn singular_matrix_detected() {
        let m = CsrMatrix::from_triplets(
            2,
            alloc::vec![
                (0, 0, c64(1.0, 0.0)),
                (0, 1, c64(2.0, 0.0)),
                (1, 0, c64(0.5, 0.0)),
                (1, 1, c64(1.0, 0.0)),
            ],
        );
        assert!(matches!(factorize(&m), Err(SparseError::NumericallySingular { .. })));
    }

    #[test]
    fn rcm_reduces_bandwidth() {
        // path graph entered in scrambled order
        let n = 50;
        let mut rng = SplitMix64::new(77);
        let mut label: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            label.swap(i, j);
        }
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((label[i], label[i], c64(2.0, 0.0)));
            if i + 1 < n {
                triplets.push((label[i], label[i + 1], c64(-1.0, 0.0)));
                triplets.push((label[i + 1], label[i], c64(-1.0, 0.0)));
            }
        }
        let m = CsrMatrix::from_triplets(n, triplets);
        let perm = reverse_cuthill_mckee(&m);
        let mut inv = alloc::vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut bw = 0usize;
        for i in 0..n {
            for p in m.row_ptr[i]..m.row_ptr[i + 1] {
                bw = bw.max(inv[i].abs_diff(inv[m.col_idx[p]]));
            }
        }
        assert!(bw <= 2, "RCM bandwidth on a path should be tiny, got {bw}");
    }

    #[test]
    fn sigma_min_matches_dense_oracle_2x2() {
        let m = CsrMatrix::from_triplets(
            2,
            alloc::vec![
                (0, 0, c64(1.0, 0.3)),
                (0, 1, c64(0.4, -0.2)),
                (1, 0, c64(0.4, -0.2)),
                (1, 1, c64(2.0, -0.5)),
            ],
        );
        let g = CsrMatrix::from_triplets(
            2,
            alloc::vec![
                (0, 0, c64(2.0, 0.0)),
                (0, 1, c64(0.5, 0.0)),
                (1, 0, c64(0.5, 0.0)),
                (1, 1, c64(1.5, 0.0)),
            ],
        );
        let res = generalized_sigma_min(&m, &g, 500, 1e-13).unwrap();
        assert!(res.converged);
        // dense oracle: B = M^H G^{-1} M, then det(B - lambda G) = 0
        let ginv = {
            let d = 2.0 * 1.5 - 0.25;
            [[1.5 / d, -0.5 / d], [-0.5 / d, 2.0 / d]]
        };
        let md = [[c64(1.0, 0.3), c64(0.4, -0.2)], [c64(0.4, -0.2), c64(2.0, -0.5)]];
        let mut b = [[c64(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut s = c64(0.0, 0.0);
                for p in 0..2 {
                    for q in 0..2 {
                        s += md[p][i].conj() * ginv[p][q] * md[q][j];
                    }
                }
                b[i][j] = s;
            }
        }
        let (g00, g11, g01) = (2.0, 1.5, 0.5);
        let det_g = g00 * g11 - g01 * g01;
        let det_b = (b[0][0] * b[1][1] - b[0][1] * b[1][0]).re;
        let mid = b[0][0].re * g11 + b[1][1].re * g00 - 2.0 * b[0][1].re * g01;
        let disc = (mid * mid - 4.0 * det_g * det_b).max(0.0).sqrt();
        let lam_min = (mid - disc) / (2.0 * det_g);
        assert!(
            (res.sigma - lam_min.max(0.0).sqrt()).abs() < 1e-10,
            "sigma {} vs oracle {}",
            res.sigma,
            lam_min.sqrt()
        );
    }
}
