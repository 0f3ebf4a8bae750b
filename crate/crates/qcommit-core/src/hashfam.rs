//! Exactly pairwise-independent hashing of λ-bit keys to m-bit values.
//!
//! A family member is an affine map `x ↦ a·x + b` over `GF(2^n)` with
//! `n = max(λ, m)`, truncated to its top `m` bits. Inputs are zero-padded
//! into the field, so distinct keys stay distinct and the truncated pair
//! `(h(x), h(x'))` is exactly jointly uniform — the deviation checked by
//! [`pairwise_deviation`] is zero, not merely small.
//!
//! Fixed irreducible polynomials per field size (feedback masks for the
//! reduction `x^n ≡ lower terms`):
//!
//! | n | polynomial            | mask |
//! |---|-----------------------|------|
//! | 1 | x + 1                 | 0x01 |
//! | 2 | x² + x + 1            | 0x03 |
//! | 3 | x³ + x + 1            | 0x03 |
//! | 4 | x⁴ + x + 1            | 0x03 |
//! | 5 | x⁵ + x² + 1           | 0x05 |
//! | 6 | x⁶ + x + 1            | 0x03 |
//! | 7 | x⁷ + x + 1            | 0x03 |
//! | 8 | x⁸ + x⁴ + x³ + x + 1  | 0x1b |

use rand::Rng;
use serde::Serialize;

use crate::{Error, Result};

/// Reduction masks indexed by field bit-size; entry `n` holds the low terms
/// of the degree-`n` irreducible polynomial.
pub const REDUCTION_MASKS: [u32; 9] = [0, 0x01, 0x03, 0x03, 0x03, 0x05, 0x03, 0x03, 0x1b];

/// Carry-less multiplication in `GF(2^bits)` modulo the fixed polynomial.
pub fn gf_mul(a: u32, b: u32, bits: u32) -> u32 {
    debug_assert!(bits >= 1 && bits <= 8);
    let mask = (1u32 << bits) - 1;
    let poly = REDUCTION_MASKS[bits as usize];
    let mut acc = 0u32;
    let mut a = a & mask;
    let mut b = b & mask;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        b >>= 1;
        let carry = a & (1 << (bits - 1));
        a = (a << 1) & mask;
        if carry != 0 {
            a ^= poly;
        }
    }
    acc
}

/// The family of truncated affine maps for a given input/output bit-length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct HashFamily {
    lambda: u32,
    m: u32,
    field_bits: u32,
}

/// One family member, determined by the field coefficients `(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct HashFn {
    pub a: u32,
    pub b: u32,
    family: HashFamily,
}

impl HashFamily {
    /// Output lengths above the input length are allowed (the field grows to
    /// `max(λ, m)` bits); both stay capped at 8 so the family is enumerable.
    pub fn new(lambda: u32, m: u32) -> Result<Self> {
        if lambda < 1 || lambda > 8 {
            return Err(Error::Validity(format!("lambda {lambda} outside 1..=8")));
        }
        if m < 1 || m > 8 {
            return Err(Error::Validity(format!("m {m} outside 1..=8")));
        }
        Ok(Self {
            lambda,
            m,
            field_bits: lambda.max(m),
        })
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn field_bits(&self) -> u32 {
        self.field_bits
    }

    /// |H| = 2^(2n) over all coefficient pairs.
    pub fn size(&self) -> u64 {
        1u64 << (2 * self.field_bits)
    }

    /// |Y| = 2^m.
    pub fn range_size(&self) -> u64 {
        1u64 << self.m
    }

    pub fn domain_size(&self) -> u64 {
        1u64 << self.lambda
    }

    pub fn member(&self, a: u32, b: u32) -> Result<HashFn> {
        let field = 1u32 << self.field_bits;
        if a >= field || b >= field {
            return Err(Error::Validity(format!(
                "coefficients ({a},{b}) outside GF(2^{})",
                self.field_bits
            )));
        }
        Ok(HashFn { a, b, family: *self })
    }

    /// All members in lexicographic `(a, b)` order.
    pub fn enumerate(&self) -> impl Iterator<Item = HashFn> + '_ {
        let field = 1u32 << self.field_bits;
        (0..field).flat_map(move |a| (0..field).map(move |b| HashFn { a, b, family: *self }))
    }

    /// The member at position `idx` of the enumeration order.
    pub fn member_at(&self, idx: u64) -> Result<HashFn> {
        if idx >= self.size() {
            return Err(Error::Validity(format!(
                "member index {idx} outside family of size {}",
                self.size()
            )));
        }
        let field = 1u64 << self.field_bits;
        self.member((idx / field) as u32, (idx % field) as u32)
    }

    /// Uniform member.
    pub fn sample(&self, rng: &mut impl Rng) -> HashFn {
        let field = 1u32 << self.field_bits;
        HashFn {
            a: rng.random_range(0..field),
            b: rng.random_range(0..field),
            family: *self,
        }
    }
}

impl HashFn {
    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    /// Top `m` bits of `a·x + b` in the field; deterministic.
    pub fn eval(&self, x: u32) -> u32 {
        debug_assert!(x < (1u32 << self.family.lambda));
        let fb = self.family.field_bits;
        let word = gf_mul(self.a, x, fb) ^ self.b;
        word >> (fb - self.family.m)
    }
}

/// Max over x ≠ x′, y, y′ of |Pr_h[h(x)=y ∧ h(x′)=y′] − |Y|⁻²|, enumerated
/// over the whole family. Exactly zero for the full family.
pub fn pairwise_deviation(fam: &HashFamily) -> f64 {
    pairwise_deviation_over(fam, fam.enumerate())
}

/// Same statistic over an arbitrary sub-collection (negative controls).
pub fn pairwise_deviation_over(
    fam: &HashFamily,
    members: impl Iterator<Item = HashFn>,
) -> f64 {
    let domain = fam.domain_size() as usize;
    let range = fam.range_size() as usize;
    // counts[x][x'][y][y']
    let mut counts = vec![0u64; domain * domain * range * range];
    let mut total = 0u64;
    for h in members {
        total += 1;
        let values: Vec<u32> = (0..domain as u32).map(|x| h.eval(x)).collect();
        for x in 0..domain {
            for xp in 0..domain {
                if x == xp {
                    continue;
                }
                let idx = ((x * domain + xp) * range + values[x] as usize) * range
                    + values[xp] as usize;
                counts[idx] += 1;
            }
        }
    }
    if total == 0 {
        return f64::INFINITY;
    }
    let uniform = 1.0 / (range as f64 * range as f64);
    let mut dev: f64 = 0.0;
    for x in 0..domain {
        for xp in 0..domain {
            if x == xp {
                continue;
            }
            for y in 0..range {
                for yp in 0..range {
                    let idx = ((x * domain + xp) * range + y) * range + yp;
                    let p = counts[idx] as f64 / total as f64;
                    dev = dev.max((p - uniform).abs());
                }
            }
        }
    }
    dev
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// GF(4) multiplication table under x² + x + 1, derived by hand:
    /// elements 0..3 stand for 0, 1, x, x+1.
    const GF4_MUL: [[u32; 4]; 4] = [
        [0, 0, 0, 0],
        [0, 1, 2, 3],
        [0, 2, 3, 1],
        [0, 3, 1, 2],
    ];

    #[test]
    fn gf4_multiplication_matches_hand_table() {
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(gf_mul(a, b, 2), GF4_MUL[a as usize][b as usize]);
            }
        }
    }

    #[test]
    fn every_field_size_has_inverses() {
        // A reducible modulus would create zero divisors, so checking that
        // every nonzero element has an inverse verifies irreducibility.
        for bits in 1..=8u32 {
            let field = 1u32 << bits;
            for a in 1..field {
                assert!(
                    (1..field).any(|b| gf_mul(a, b, bits) == 1),
                    "no inverse for {a} in GF(2^{bits})"
                );
            }
        }
    }

    #[test]
    fn zero_multiplier_gives_constant_function() {
        let fam = HashFamily::new(3, 2).unwrap();
        let h = fam.member(0, 0b101).unwrap();
        let expect = 0b101u32 >> 1;
        for x in 0..8 {
            assert_eq!(h.eval(x), expect);
        }
    }

    #[test]
    fn unit_multiplier_takes_top_bits() {
        let fam = HashFamily::new(2, 1).unwrap();
        let h = fam.member(1, 0).unwrap();
        for x in 0..4 {
            assert_eq!(h.eval(x), x >> 1);
        }
    }

    #[test]
    fn family_size_and_enumeration_order() {
        let fam = HashFamily::new(2, 1).unwrap();
        let all: Vec<HashFn> = fam.enumerate().collect();
        assert_eq!(all.len(), 16);
        assert_eq!(fam.size(), 16);
        assert_eq!((all[0].a, all[0].b), (0, 0));
        assert_eq!((all[5].a, all[5].b), (1, 1));
    }

    #[test]
    fn sampling_is_reproducible() {
        let fam = HashFamily::new(4, 2).unwrap();
        let mut r1 = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let mut r2 = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..32 {
            let a = fam.sample(&mut r1);
            let b = fam.sample(&mut r2);
            assert_eq!((a.a, a.b), (b.a, b.b));
        }
    }

    #[test]
    fn marginals_are_exactly_uniform() {
        let fam = HashFamily::new(3, 2).unwrap();
        for x in 0..8u32 {
            let mut counts = vec![0u64; 4];
            for h in fam.enumerate() {
                counts[h.eval(x) as usize] += 1;
            }
            for c in counts {
                assert_eq!(c, fam.size() / fam.range_size());
            }
        }
    }

    #[test]
    fn pairwise_deviation_is_exactly_zero() {
        for (lambda, m) in [(2, 1), (2, 2), (3, 1), (3, 2), (4, 2), (2, 4)] {
            let fam = HashFamily::new(lambda, m).unwrap();
            assert_eq!(pairwise_deviation(&fam), 0.0, "({lambda},{m})");
        }
    }

    #[test]
    fn joint_pair_counts_are_exact() {
        // For fixed x ≠ x′ every (y, y′) cell is hit exactly |H|/|Y|² times.
        let fam = HashFamily::new(2, 1).unwrap();
        let mut counts = [[0u64; 2]; 2];
        for h in fam.enumerate() {
            counts[h.eval(0) as usize][h.eval(1) as usize] += 1;
        }
        for row in counts {
            for c in row {
                assert_eq!(c, 4);
            }
        }
    }

    #[test]
    fn truncated_family_is_not_pairwise_independent() {
        let fam = HashFamily::new(2, 1).unwrap();
        let dev = pairwise_deviation_over(&fam, fam.enumerate().filter(|h| h.a != 0));
        assert!(dev > 0.0);
    }
}
