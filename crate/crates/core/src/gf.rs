//! GF(2^k) arithmetic and the small hash families built on it: pairwise
//! independent permutations of [2^k] (affine maps) and 4-wise independent
//! sign vectors (one bit of a cubic polynomial).

use crate::error::CoreError;
use crate::rng::RngStream;

/// Irreducible polynomials over GF(2), index k, with the x^k bit included.
const IRREDUCIBLE: [u32; 17] = [
    0,        // k=0 unused
    0b11,     // x + 1
    0b111,    // x^2 + x + 1
    0b1011,   // x^3 + x + 1
    0b10011,  // x^4 + x + 1
    0b100101, // x^5 + x^2 + 1
    0b1000011,
    0b10000011,
    0b100011011, // x^8 + x^4 + x^3 + x + 1
    0x211,       // x^9 + x^4 + 1
    0x409,       // x^10 + x^3 + 1
    0x805,       // x^11 + x^2 + 1
    0x1053,      // x^12 + x^6 + x^4 + x + 1
    0x201B,
    0x4443,
    0x8003,
    0x1100B,
];

pub const MAX_K: u32 = 16;

/// log2 of a power of two, or an error naming the offender.
pub fn log2_exact(d: usize) -> Result<u32, CoreError> {
    if d == 0 || !d.is_power_of_two() {
        return Err(CoreError::NotPowerOfTwo(d));
    }
    Ok(d.trailing_zeros())
}

#[inline]
fn gf_mul(mut a: u32, mut b: u32, k: u32) -> u32 {
    let poly = IRREDUCIBLE[k as usize];
    let high = 1u32 << k;
    let mut acc = 0;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & high != 0 {
            a ^= poly;
        }
    }
    acc
}

fn gf_pow(mut base: u32, mut exp: u64, k: u32) -> u32 {
    let mut acc = 1u32;
    while exp > 0 {
        if exp & 1 != 0 {
            acc = gf_mul(acc, base, k);
        }
        base = gf_mul(base, base, k);
        exp >>= 1;
    }
    acc
}

// a^{-1} = a^{2^k - 2} for a != 0.
fn gf_inv(a: u32, k: u32) -> u32 {
    debug_assert!(a != 0);
    gf_pow(a, (1u64 << k) - 2, k)
}

/// Pairwise independent permutation of [2^k]: x -> a*x + b over GF(2^k)
/// with a != 0. Over the full family, every ordered pair of distinct inputs
/// maps to every ordered pair of distinct outputs with probability exactly
/// 1/(d(d-1)).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairwisePerm {
    k: u32,
    a: u32,
    b: u32,
}

impl PairwisePerm {
    pub fn new(d: usize, a: u32, b: u32) -> Result<Self, CoreError> {
        let k = log2_exact(d)?;
        if k == 0 || k > MAX_K {
            return Err(CoreError::BadParam(alloc::format!(
                "permutation domain {d} outside [2, 2^{MAX_K}]"
            )));
        }
        let size = 1u32 << k;
        if a == 0 || a >= size || b >= size {
            return Err(CoreError::BadParam(alloc::format!(
                "affine coefficients ({a}, {b}) invalid for field of size {size}"
            )));
        }
        Ok(PairwisePerm { k, a, b })
    }

    pub fn domain(&self) -> usize {
        1usize << self.k
    }

    /// (a, b) of the affine map, for serialization.
    pub fn coeffs(&self) -> (u32, u32) {
        (self.a, self.b)
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        debug_assert!(x < self.domain());
        (gf_mul(self.a, x as u32, self.k) ^ self.b) as usize
    }

    #[inline]
    pub fn invert(&self, y: usize) -> usize {
        debug_assert!(y < self.domain());
        gf_mul(y as u32 ^ self.b, gf_inv(self.a, self.k), self.k) as usize
    }

    /// Family size (d-1)*d.
    pub fn family_size(d: usize) -> Result<u64, CoreError> {
        let k = log2_exact(d)?;
        let d = 1u64 << k;
        Ok((d - 1) * d)
    }

    /// Member with lexicographic index `idx` in (a-1, b) order.
    pub fn from_index(d: usize, idx: u64) -> Result<Self, CoreError> {
        let size = Self::family_size(d)?;
        if idx >= size {
            return Err(CoreError::BadParam(alloc::format!(
                "permutation index {idx} out of range {size}"
            )));
        }
        let dd = d as u64;
        PairwisePerm::new(d, (idx / dd + 1) as u32, (idx % dd) as u32)
    }

    pub fn sample(d: usize, rng: &mut RngStream) -> Result<Self, CoreError> {
        let size = Self::family_size(d)?;
        Self::from_index(d, rng.below(size))
    }
}

/// 4-wise independent signs on [2^k]: the low bit of a degree-3 polynomial
/// over GF(2^k), mapped to {+1, -1}. Over the full coefficient family, any
/// four distinct positions carry independent unbiased signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourwiseSign {
    k: u32,
    c: [u32; 4], // c[0] + c[1] x + c[2] x^2 + c[3] x^3
}

impl FourwiseSign {
    pub fn new(d: usize, c: [u32; 4]) -> Result<Self, CoreError> {
        let k = log2_exact(d)?;
        if k == 0 || k > MAX_K {
            return Err(CoreError::BadParam(alloc::format!(
                "sign domain {d} outside [2, 2^{MAX_K}]"
            )));
        }
        let size = 1u32 << k;
        if c.iter().any(|ci| *ci >= size) {
            return Err(CoreError::BadParam(alloc::format!(
                "polynomial coefficients {c:?} invalid for field of size {size}"
            )));
        }
        Ok(FourwiseSign { k, c })
    }

    pub fn domain(&self) -> usize {
        1usize << self.k
    }

    /// Polynomial coefficients (c0, c1, c2, c3), for serialization.
    pub fn coeffs(&self) -> [u32; 4] {
        self.c
    }

    /// Sign at position x, in {-1.0, +1.0}.
    #[inline]
    pub fn apply(&self, x: usize) -> f64 {
        debug_assert!(x < self.domain());
        let x = x as u32;
        // Horner in the field.
        let mut v = self.c[3];
        v = gf_mul(v, x, self.k) ^ self.c[2];
        v = gf_mul(v, x, self.k) ^ self.c[1];
        v = gf_mul(v, x, self.k) ^ self.c[0];
        if v & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Family size d^4.
    pub fn family_size(d: usize) -> Result<u64, CoreError> {
        let k = log2_exact(d)?;
        Ok(1u64 << (4 * k))
    }

    /// Member with lexicographic index `idx` in (c3, c2, c1, c0) order.
    pub fn from_index(d: usize, idx: u64) -> Result<Self, CoreError> {
        let size = Self::family_size(d)?;
        if idx >= size {
            return Err(CoreError::BadParam(alloc::format!(
                "sign index {idx} out of range {size}"
            )));
        }
        let dd = d as u64;
        let c0 = (idx % dd) as u32;
        let c1 = ((idx / dd) % dd) as u32;
        let c2 = ((idx / (dd * dd)) % dd) as u32;
        let c3 = (idx / (dd * dd * dd)) as u32;
        FourwiseSign::new(d, [c0, c1, c2, c3])
    }

    pub fn sample(d: usize, rng: &mut RngStream) -> Result<Self, CoreError> {
        let size = Self::family_size(d)?;
        Self::from_index(d, rng.below(size))
    }
}

/// Enumerate all members of both families for domain `d`; used by the
/// full-enumeration splitter mode and by exactness tests.
pub fn perm_count_times_sign_count(d: usize) -> Result<u64, CoreError> {
    Ok(PairwisePerm::family_size(d)? * FourwiseSign::family_size(d)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn fields_have_inverses() {
        for k in 1..=8u32 {
            let size = 1u32 << k;
            for a in 1..size {
                assert_eq!(gf_mul(a, gf_inv(a, k), k), 1, "k={k} a={a}");
            }
        }
        // Spot-check the bigger fields.
        for k in 9..=16u32 {
            for a in [1u32, 2, 3, (1 << k) - 1, 0x155 & ((1 << k) - 1)] {
                if a != 0 {
                    assert_eq!(gf_mul(a, gf_inv(a, k), k), 1, "k={k} a={a}");
                }
            }
        }
    }

    #[test]
    fn perms_are_bijections_with_inverses() {
        let d = 16;
        let mut rng = RngStream::new(5, "perm");
        for _ in 0..20 {
            let h = PairwisePerm::sample(d, &mut rng).unwrap();
            let mut seen = [false; 16];
            for x in 0..d {
                let y = h.apply(x);
                assert!(!seen[y]);
                seen[y] = true;
                assert_eq!(h.invert(y), x);
            }
        }
    }

    #[test]
    fn perm_family_is_exactly_pair_uniform_at_d8() {
        // Over all 56 members, each ordered source pair hits each ordered
        // target pair exactly once: fraction 1/(d(d-1)).
        let d = 8;
        let n = PairwisePerm::family_size(d).unwrap();
        assert_eq!(n, 56);
        for (i, j) in [(0usize, 1usize), (3, 6), (7, 2)] {
            let mut counts = [[0u32; 8]; 8];
            for idx in 0..n {
                let h = PairwisePerm::from_index(d, idx).unwrap();
                counts[h.apply(i)][h.apply(j)] += 1;
            }
            for a in 0..d {
                for b in 0..d {
                    let want = if a == b { 0 } else { 1 };
                    assert_eq!(counts[a][b], want, "({i},{j}) -> ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn sign_family_has_zero_fourth_moment_at_d8() {
        let d = 8;
        let n = FourwiseSign::family_size(d).unwrap();
        assert_eq!(n, 4096);
        let members: Vec<FourwiseSign> = (0..n).map(|i| FourwiseSign::from_index(d, i).unwrap()).collect();
        // All distinct quadruples i < j < k < l.
        for i in 0..d {
            for j in (i + 1)..d {
                for k in (j + 1)..d {
                    for l in (k + 1)..d {
                        let mut acc = 0.0;
                        for s in &members {
                            acc += s.apply(i) * s.apply(j) * s.apply(k) * s.apply(l);
                        }
                        assert_eq!(acc, 0.0, "quadruple ({i},{j},{k},{l})");
                    }
                }
            }
        }
        // Pairs are unbiased too.
        let mut acc = 0.0;
        for s in &members {
            acc += s.apply(0) * s.apply(5);
        }
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn index_round_trip() {
        let d = 16;
        for idx in [0u64, 1, 100, PairwisePerm::family_size(d).unwrap() - 1] {
            let h = PairwisePerm::from_index(d, idx).unwrap();
            assert_eq!(h.domain(), d);
        }
        assert!(PairwisePerm::from_index(d, PairwisePerm::family_size(d).unwrap()).is_err());
        assert!(FourwiseSign::from_index(d, FourwiseSign::family_size(d).unwrap()).is_err());
        assert!(PairwisePerm::new(12, 1, 0).is_err());
    }
}
