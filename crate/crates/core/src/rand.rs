//! Deterministic pseudo-random and quasi-random sources.
//!
//! Everything downstream of a seed is reproducible bit-for-bit, which the
//! report formats rely on. SplitMix64 is used for randomized test fields and
//! launch ensembles; Halton points provide the low-discrepancy sampling used
//! by the coefficient condition checkers.

#[allow(unused_imports)]
use num_traits::Float;

/// SplitMix64 generator (Steele, Lea, Flood 2014).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform point on the unit sphere in `D` dimensions (D = 2 or 3).
    pub fn unit_vector<const D: usize>(&mut self) -> [f64; D] {
        let mut v = [0.0; D];
        if D == 2 {
            let t = 2.0 * core::f64::consts::PI * self.next_f64();
            v[0] = t.cos();
            v[1] = t.sin();
        } else {
            let c = 2.0 * self.next_f64() - 1.0;
            let s = (1.0 - c * c).max(0.0).sqrt();
            let t = 2.0 * core::f64::consts::PI * self.next_f64();
            v[0] = s * t.cos();
            v[1] = s * t.sin();
            v[2] = c;
        }
        v
    }
}

/// Radical-inverse (van der Corput) value of `index` in the given base.
pub fn radical_inverse(mut index: usize, base: usize) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut x = 0.0;
    while index > 0 {
        x += (index % base) as f64 * inv;
        index /= base;
        inv /= b;
    }
    x
}

const HALTON_BASES: [usize; 3] = [2, 3, 5];

/// `index`-th Halton point in the unit cube `[0,1)^D` (D <= 3).
pub fn halton_point<const D: usize>(index: usize) -> [f64; D] {
    let mut p = [0.0; D];
    for (d, slot) in p.iter_mut().enumerate() {
        *slot = radical_inverse(index + 1, HALTON_BASES[d]);
    }
    p
}
