//! Residue arithmetic modulo prime powers below 2^31.
//!
//! Every product of two residues fits in a `u64`, so the hot paths never
//! touch arbitrary-precision integers. Exact rationals are only reduced into
//! a residue ring at the boundary, via [`reduce_rational`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};

/// Exclusive upper bound on every modulus.
pub const MODULUS_LIMIT: u64 = 1 << 31;

pub type Rational = BigRational;

/// Builds a reduced rational `num / den`.
pub fn rational(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// The primes in the half-open interval `[lo, hi)`, ascending.
///
/// Segmented sieve of Eratosthenes; `hi` may be as large as 2^31.
pub fn primes_in_range(lo: u64, hi: u64) -> Vec<u64> {
    let lo = lo.max(2);
    if lo >= hi {
        return Vec::new();
    }
    let root = (hi as f64).sqrt() as u64 + 1;
    let mut small = vec![true; (root + 1) as usize];
    let mut base = Vec::new();
    for i in 2..=root {
        if small[i as usize] {
            base.push(i);
            let mut j = i * i;
            while j <= root {
                small[j as usize] = false;
                j += i;
            }
        }
    }

    const BLOCK: u64 = 1 << 16;
    let mut out = Vec::new();
    let mut start = lo;
    while start < hi {
        let end = (start + BLOCK).min(hi);
        let mut mark = vec![true; (end - start) as usize];
        for &q in &base {
            if q * q >= end {
                break;
            }
            let first = (q * q).max(start.div_ceil(q) * q);
            let mut j = first;
            while j < end {
                mark[(j - start) as usize] = false;
                j += q;
            }
        }
        out.extend(
            mark.iter()
                .enumerate()
                .filter(|(_, &keep)| keep)
                .map(|(i, _)| start + i as u64),
        );
        start = end;
    }
    out
}

/// A prime power `p^r` below [`MODULUS_LIMIT`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrimePowerModulus {
    p: u64,
    r: u32,
    modulus: u64,
}

impl PrimePowerModulus {
    pub fn new(p: u64, r: u32) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidModulus(format!("{p} is not prime")));
        }
        if r == 0 {
            return Err(Error::InvalidModulus("exponent must be at least 1".into()));
        }
        let mut modulus: u64 = 1;
        for _ in 0..r {
            modulus = modulus
                .checked_mul(p)
                .filter(|&m| m < MODULUS_LIMIT)
                .ok_or_else(|| Error::InvalidModulus(format!("{p}^{r} is not below 2^31")))?;
        }
        Ok(PrimePowerModulus { p, r, modulus })
    }

    pub fn prime(p: u64) -> Result<Self> {
        Self::new(p, 1)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn zero(&self) -> Residue {
        Residue::raw(0, *self)
    }

    pub fn one(&self) -> Residue {
        Residue::raw(1 % self.modulus, *self)
    }

    pub fn residue(&self, value: i64) -> Residue {
        Residue::raw(value.rem_euclid(self.modulus as i64) as u64, *self)
    }

    pub fn residue_u64(&self, value: u64) -> Residue {
        Residue::raw(value % self.modulus, *self)
    }

    pub fn residue_big(&self, value: &BigInt) -> Residue {
        let m = BigInt::from(self.modulus);
        let v = value.mod_floor(&m);
        Residue::raw(v.to_u64().expect("reduced below modulus"), *self)
    }
}

impl fmt::Display for PrimePowerModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.r == 1 {
            write!(f, "{}", self.p)
        } else {
            write!(f, "{}^{}", self.p, self.r)
        }
    }
}

/// An element of `Z/p^r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Residue {
    value: u64,
    modulus: PrimePowerModulus,
}

impl Residue {
    fn raw(value: u64, modulus: PrimePowerModulus) -> Self {
        debug_assert!(value < modulus.modulus);
        Residue { value, modulus }
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn modulus(&self) -> PrimePowerModulus {
        self.modulus
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let m = self.modulus.modulus;
        let mut base = self.value;
        let mut acc = 1 % m;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % m;
            }
            base = base * base % m;
            exp >>= 1;
        }
        Residue::raw(acc, self.modulus)
    }

    pub fn inverse(self) -> Result<Self> {
        mod_inverse(self.value as i64, self.modulus)
    }

    fn same_ring(&self, other: &Self) {
        assert_eq!(
            self.modulus, other.modulus,
            "residues from different rings cannot be combined"
        );
    }
}

impl fmt::Display for Residue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for Residue {
    type Output = Residue;
    fn add(self, rhs: Residue) -> Residue {
        self.same_ring(&rhs);
        let m = self.modulus.modulus;
        Residue::raw((self.value + rhs.value) % m, self.modulus)
    }
}

impl Sub for Residue {
    type Output = Residue;
    fn sub(self, rhs: Residue) -> Residue {
        self.same_ring(&rhs);
        let m = self.modulus.modulus;
        Residue::raw((self.value + m - rhs.value) % m, self.modulus)
    }
}

impl Mul for Residue {
    type Output = Residue;
    fn mul(self, rhs: Residue) -> Residue {
        self.same_ring(&rhs);
        let m = self.modulus.modulus;
        Residue::raw(self.value * rhs.value % m, self.modulus)
    }
}

impl Neg for Residue {
    type Output = Residue;
    fn neg(self) -> Residue {
        let m = self.modulus.modulus;
        Residue::raw((m - self.value) % m, self.modulus)
    }
}

/// Inverse of `a` modulo `m` by the extended Euclidean algorithm, if it exists.
pub(crate) fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let (mut old_r, mut r) = ((a % m) as i64, m as i64);
    let (mut old_s, mut s) = (1i64, 0i64);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i64) as u64)
}

/// The inverse of `a` in `Z/p^r`.
pub fn mod_inverse(a: i64, modulus: PrimePowerModulus) -> Result<Residue> {
    let m = modulus.modulus;
    let reduced = a.rem_euclid(m as i64) as u64;
    if reduced.is_multiple_of(modulus.p) {
        return Err(Error::NotAUnit {
            value: a.to_string(),
            modulus: m,
        });
    }
    let inv = inv_mod(reduced, m).expect("units are invertible");
    Ok(Residue::raw(inv, modulus))
}

/// Maps an exact rational into `Z/p^r`.
pub fn reduce_rational(q: &Rational, modulus: PrimePowerModulus) -> Result<Residue> {
    let p = BigInt::from(modulus.p);
    if q.denom().is_multiple_of(&p) {
        return Err(Error::DenominatorNotInvertible {
            denominator: q.denom().to_string(),
            modulus: modulus.modulus,
        });
    }
    let num = modulus.residue_big(q.numer());
    let den = modulus.residue_big(q.denom());
    let den_inv = inv_mod(den.value, modulus.modulus).expect("denominator prime to p");
    Ok(num * Residue::raw(den_inv, modulus))
}

/// `true` when `q` can be reduced modulo `p` (its denominator is prime to `p`).
pub fn is_p_integral(q: &Rational, p: u64) -> bool {
    !q.denom().is_multiple_of(&BigInt::from(p))
}
