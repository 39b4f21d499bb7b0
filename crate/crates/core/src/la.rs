//! Small fixed-dimension linear algebra on plain arrays (d = 2 or 3).
//!
//! Coefficient matrices in the Helmholtz operator are symmetric d x d with
//! d <= 3, so everything here is closed-form or a short Jacobi sweep; no
//! external solver is involved.

use crate::C64;
#[allow(unused_imports)]
use num_traits::Float;

pub type Vector<const D: usize> = [f64; D];
pub type Matrix<const D: usize> = [[f64; D]; D];
/// Complex d-vector (gradients of complex fields).
pub type CVector<const D: usize> = [C64; D];

#[inline]
pub fn dot<const D: usize>(a: &Vector<D>, b: &Vector<D>) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm<const D: usize>(a: &Vector<D>) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub<const D: usize>(a: &Vector<D>, b: &Vector<D>) -> Vector<D> {
    let mut r = [0.0; D];
    for i in 0..D {
        r[i] = a[i] - b[i];
    }
    r
}

#[inline]
pub fn add<const D: usize>(a: &Vector<D>, b: &Vector<D>) -> Vector<D> {
    let mut r = [0.0; D];
    for i in 0..D {
        r[i] = a[i] + b[i];
    }
    r
}

#[inline]
pub fn scale<const D: usize>(a: &Vector<D>, s: f64) -> Vector<D> {
    let mut r = [0.0; D];
    for i in 0..D {
        r[i] = a[i] * s;
    }
    r
}

/// `a + s*b`.
#[inline]
pub fn axpy<const D: usize>(a: &Vector<D>, s: f64, b: &Vector<D>) -> Vector<D> {
    let mut r = *a;
    for i in 0..D {
        r[i] += s * b[i];
    }
    r
}

pub fn identity<const D: usize>() -> Matrix<D> {
    let mut m = [[0.0; D]; D];
    for i in 0..D {
        m[i][i] = 1.0;
    }
    m
}

pub fn mat_vec<const D: usize>(m: &Matrix<D>, v: &Vector<D>) -> Vector<D> {
    let mut r = [0.0; D];
    for i in 0..D {
        for j in 0..D {
            r[i] += m[i][j] * v[j];
        }
    }
    r
}

pub fn mat_cvec<const D: usize>(m: &Matrix<D>, v: &CVector<D>) -> CVector<D> {
    let mut r = [C64::new(0.0, 0.0); D];
    for i in 0..D {
        for j in 0..D {
            r[i] += v[j] * m[i][j];
        }
    }
    r
}

pub fn mat_add<const D: usize>(a: &Matrix<D>, b: &Matrix<D>) -> Matrix<D> {
    let mut r = [[0.0; D]; D];
    for i in 0..D {
        for j in 0..D {
            r[i][j] = a[i][j] + b[i][j];
        }
    }
    r
}

pub fn mat_sub<const D: usize>(a: &Matrix<D>, b: &Matrix<D>) -> Matrix<D> {
    let mut r = [[0.0; D]; D];
    for i in 0..D {
        for j in 0..D {
            r[i][j] = a[i][j] - b[i][j];
        }
    }
    r
}

pub fn mat_scale<const D: usize>(a: &Matrix<D>, s: f64) -> Matrix<D> {
    let mut r = *a;
    for row in r.iter_mut() {
        for x in row.iter_mut() {
            *x *= s;
        }
    }
    r
}

pub fn max_asymmetry<const D: usize>(a: &Matrix<D>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..D {
        for j in 0..D {
            worst = worst.max((a[i][j] - a[j][i]).abs());
        }
    }
    worst
}

/// Determinant, d <= 3.
pub fn det<const D: usize>(m: &Matrix<D>) -> f64 {
    match D {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!("only d <= 3 supported"),
    }
}

/// Inverse by adjugate, d <= 3. Returns `None` for (near-)singular input.
pub fn inverse<const D: usize>(m: &Matrix<D>) -> Option<Matrix<D>> {
    let d = det(m);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut inv = [[0.0; D]; D];
    match D {
        1 => inv[0][0] = 1.0 / d,
        2 => {
            inv[0][0] = m[1][1] / d;
            inv[0][1] = -m[0][1] / d;
            inv[1][0] = -m[1][0] / d;
            inv[1][1] = m[0][0] / d;
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                    let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
                    // cofactor transpose
                    inv[j][i] = (m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1]) / d;
                }
            }
        }
        _ => unreachable!(),
    }
    Some(inv)
}

/// Smallest eigenvalue of a symmetric matrix: closed form for d = 2
/// (trace/determinant), cyclic Jacobi for d = 3.
pub fn sym_eig_min<const D: usize>(m: &Matrix<D>) -> f64 {
    match D {
        1 => m[0][0],
        2 => {
            let tr = m[0][0] + m[1][1];
            let dt = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let disc = (tr * tr - 4.0 * dt).max(0.0).sqrt();
            0.5 * (tr - disc)
        }
        3 => {
            let mut a = *m;
            // cyclic Jacobi sweeps; 3x3 converges in a handful
            for _ in 0..30 {
                let off = (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]).sqrt();
                if off < 1e-15 * (1.0 + a[0][0].abs() + a[1][1].abs() + a[2][2].abs()) {
                    break;
                }
                for p in 0..2 {
                    for q in (p + 1)..3 {
                        if a[p][q].abs() < 1e-300 {
                            continue;
                        }
                        let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                        let c = 1.0 / (t * t + 1.0).sqrt();
                        let s = t * c;
                        let mut rot = identity::<D>();
                        rot[p][p] = c;
                        rot[q][q] = c;
                        rot[p][q] = s;
                        rot[q][p] = -s;
                        // a <- rot^T a rot
                        let mut tmp = [[0.0; D]; D];
                        for i in 0..3 {
                            for j in 0..3 {
                                let mut v = 0.0;
                                for k in 0..3 {
                                    v += a[i][k] * rot[k][j];
                                }
                                tmp[i][j] = v;
                            }
                        }
                        for i in 0..3 {
                            for j in 0..3 {
                                let mut v = 0.0;
                                for k in 0..3 {
                                    v += rot[k][i] * tmp[k][j];
                                }
                                a[i][j] = v;
                            }
                        }
                    }
                }
            }
            a[0][0].min(a[1][1]).min(a[2][2])
        }
        _ => unreachable!("only d <= 3 supported"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection on det(M - lambda I); algorithm-independent eigenvalue oracle.
    fn eig_min_oracle<const D: usize>(m: &Matrix<D>) -> f64 {
        // Gershgorin bracket
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..D {
            let mut r = 0.0;
            for j in 0..D {
                if j != i {
                    r += m[i][j].abs();
                }
            }
            lo = lo.min(m[i][i] - r);
            hi = hi.max(m[i][i] + r);
        }
        let shifted = |lam: f64| {
            let mut s = *m;
            for i in 0..D {
                s[i][i] -= lam;
            }
            det(&s)
        };
        // count sign changes via Sturm-free scan: smallest root of the
        // characteristic polynomial is the first zero crossing from below
        let mut a = lo - 1.0;
        let mut b = hi + 1.0;
        // det(M - lam I) has sign (-1)^D for lam -> +inf; at lam < lambda_min
        // all factors positive.
        assert!(shifted(a) > 0.0);
        // march to bracket the first root
        let steps = 4000;
        let h = (b - a) / steps as f64;
        let mut x0 = a;
        let mut f0 = shifted(x0);
        let mut bracket = None;
        for i in 1..=steps {
            let x1 = a + i as f64 * h;
            let f1 = shifted(x1);
            if f0 > 0.0 && f1 <= 0.0 {
                bracket = Some((x0, x1));
                break;
            }
            x0 = x1;
            f0 = f1;
        }
        let (mut la, mut lb) = bracket.expect("no eigenvalue bracket found");
        for _ in 0..200 {
            let mid = 0.5 * (la + lb);
            if shifted(mid) > 0.0 {
                la = mid;
            } else {
                lb = mid;
            }
        }
        b = 0.5 * (la + lb);
        a = b;
        a
    }

    #[test]
    fn eig_min_2d_matches_oracle() {
        let mut rng = crate::rand::SplitMix64::new(11);
        for _ in 0..200 {
            let a = rng.range(-2.0, 2.0);
            let b = rng.range(-2.0, 2.0);
            let c = rng.range(-2.0, 2.0);
            let m = [[a, b], [b, c]];
            let fast = sym_eig_min(&m);
            let slow = eig_min_oracle(&m);
            assert!((fast - slow).abs() < 1e-12, "fast={fast} slow={slow}");
        }
    }

    #[test]
    fn eig_min_3d_matches_oracle() {
        let mut rng = crate::rand::SplitMix64::new(12);
        for _ in 0..200 {
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in i..3 {
                    let v = rng.range(-2.0, 2.0);
                    m[i][j] = v;
                    m[j][i] = v;
                }
            }
            let fast = sym_eig_min(&m);
            let slow = eig_min_oracle(&m);
            assert!((fast - slow).abs() < 1e-12, "fast={fast} slow={slow}");
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let m = [[2.0, 0.5, 0.0], [0.5, 3.0, -0.2], [0.0, -0.2, 1.5]];
        let inv = inverse(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += m[i][k] * inv[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-13);
            }
        }
        let m2 = [[2.0, -1.0], [-1.0, 2.0]];
        let inv2 = inverse(&m2).unwrap();
        assert!((inv2[0][0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((inv2[0][1] - 1.0 / 3.0).abs() < 1e-14);
    }
}
