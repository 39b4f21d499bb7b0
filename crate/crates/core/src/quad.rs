//! Quadrature rules: Gauss-Legendre on `[-1, 1]` and symmetric triangle rules.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre polynomial from Chebyshev initial
/// guesses; accurate to ~1e-15 for the small orders used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // initial guess: Chebyshev point
        let mut x = (core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// A triangle quadrature point: barycentric coordinates plus a weight that
/// sums to 1 over the rule (multiply by the triangle area).
#[derive(Debug, Clone, Copy)]
pub struct TrianglePoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Order-2 rule: the three edge midpoints, exact for quadratics.
pub const TRI_ORDER2: [TrianglePoint; 3] = [
    TrianglePoint { bary: [0.5, 0.5, 0.0], weight: 1.0 / 3.0 },
    TrianglePoint { bary: [0.0, 0.5, 0.5], weight: 1.0 / 3.0 },
    TrianglePoint { bary: [0.5, 0.0, 0.5], weight: 1.0 / 3.0 },
];

/// Order-5 seven-point rule (Radon), exact for quintics.
pub fn tri_order5() -> [TrianglePoint; 7] {
    let a1 = 0.059_715_871_789_769_82;
    let b1 = 0.470_142_064_105_115_09;
    let a2 = 0.797_426_985_353_087_32;
    let b2 = 0.101_286_507_323_456_34;
    let w0 = 0.225;
    let w1 = 0.132_394_152_788_506_18;
    let w2 = 0.125_939_180_544_827_15;
    [
        TrianglePoint { bary: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], weight: w0 },
        TrianglePoint { bary: [a1, b1, b1], weight: w1 },
        TrianglePoint { bary: [b1, a1, b1], weight: w1 },
        TrianglePoint { bary: [b1, b1, a1], weight: w1 },
        TrianglePoint { bary: [a2, b2, b2], weight: w2 },
        TrianglePoint { bary: [b2, a2, b2], weight: w2 },
        TrianglePoint { bary: [b2, b2, a2], weight: w2 },
    ]
}

/// Map a barycentric point to physical coordinates.
#[inline]
pub fn bary_to_xy(p: &[f64; 3], v0: &[f64; 2], v1: &[f64; 2], v2: &[f64; 2]) -> [f64; 2] {
    [
        p[0] * v0[0] + p[1] * v1[0] + p[2] * v2[0],
        p[0] * v0[1] + p[1] * v1[1] + p[2] * v2[1],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_nodes_match_known_values() {
        let (x, w) = gauss_legendre(2);
        assert!((x[0] + 1.0 / 3.0_f64.sqrt()).abs() < 1e-15);
        assert!((x[1] - 1.0 / 3.0_f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);

        let (x5, w5) = gauss_legendre(5);
        assert!((x5[2]).abs() < 1e-15);
        assert!((w5[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn gl_integrates_polynomials_exactly() {
        for n in [2usize, 5, 8, 16] {
            let (x, w) = gauss_legendre(n);
            // integrate x^(2n-1) and x^(2n-2) over [-1,1]
            let odd: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(2 * n as i32 - 1)).sum();
            assert!(odd.abs() < 1e-13, "n={n} odd={odd}");
            let even: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(2 * n as i32 - 2)).sum();
            let exact = 2.0 / (2.0 * n as f64 - 1.0);
            assert!((even - exact).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn triangle_rules_integrate_low_order_exactly() {
        // reference triangle (0,0)-(1,0)-(0,1), area 1/2
        let v0 = [0.0, 0.0];
        let v1 = [1.0, 0.0];
        let v2 = [0.0, 1.0];
        let area = 0.5;
        // integral of x^a y^b over the reference triangle: a! b! / (a+b+2)!
        let exact = |a: u32, b: u32| {
            let fact = |m: u32| (1..=m).map(|i| i as f64).product::<f64>().max(1.0);
            fact(a) * fact(b) / fact(a + b + 2)
        };
        for (a, b) in [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0)] {
            let mut s = 0.0;
            for p in TRI_ORDER2 {
                let xy = bary_to_xy(&p.bary, &v0, &v1, &v2);
                s += area * p.weight * xy[0].powi(a as i32) * xy[1].powi(b as i32);
            }
            assert!((s - exact(a, b)).abs() < 1e-15, "order2 ({a},{b})");
        }
        for (a, b) in [(0, 0), (2, 1), (3, 2), (5, 0), (1, 4)] {
            let mut s = 0.0;
            for p in tri_order5() {
                let xy = bary_to_xy(&p.bary, &v0, &v1, &v2);
                s += area * p.weight * xy[0].powi(a as i32) * xy[1].powi(b as i32);
            }
            assert!((s - exact(a, b)).abs() < 1e-14, "order5 ({a},{b})");
        }
    }
}
