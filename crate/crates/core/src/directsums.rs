//! Exact evaluation of `R_n^(m)(p^r)` and `S_n^(m)(p^r)` in `Z/p^r`.
//!
//! `R` sums `1/(l_1 ··· l_n)` over compositions `l_1 + ··· + l_n = m·p^r` with
//! every part prime to `p`; `S` additionally requires every part `< p^r`.
//! Both are the coefficient of `x^{m p^r}` in the `n`-th power of
//! `Σ_l x^l / l` over the admissible `l`, which is what [`eval_conv`]
//! computes. [`eval_brute`] enumerates the compositions directly and serves
//! as the oracle.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::modarith::{inv_mod, PrimePowerModulus, Rational, Residue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Parts prime to `p`.
    R,
    /// Parts prime to `p` and below `p^r`.
    S,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::R => "R",
            Variant::S => "S",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(Variant::R),
            "S" | "s" => Ok(Variant::S),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

/// One of the sums `R_n^(m)(p^r)` / `S_n^(m)(p^r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SumSpec {
    n: u32,
    m: u64,
    modulus: PrimePowerModulus,
    variant: Variant,
}

impl SumSpec {
    pub fn new(n: u32, m: u64, modulus: PrimePowerModulus, variant: Variant) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        if m.is_multiple_of(modulus.p()) {
            return Err(Error::PreconditionViolated(format!(
                "p = {} divides m = {m}",
                modulus.p()
            )));
        }
        Ok(SumSpec { n, m, modulus, variant })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn modulus(&self) -> PrimePowerModulus {
        self.modulus
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// The target degree `m·p^r`.
    pub fn degree(&self) -> u64 {
        self.m * self.modulus.modulus()
    }
}

/// A truncated power series over `Z/p^r`, dense in degrees `0..=D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesModM {
    modulus: PrimePowerModulus,
    coeffs: Vec<u64>,
}

impl SeriesModM {
    pub fn modulus(&self) -> PrimePowerModulus {
        self.modulus
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn coeff(&self, degree: usize) -> Residue {
        self.modulus.residue_u64(self.coeffs.get(degree).copied().unwrap_or(0))
    }

    /// Truncated product, keeping the length of `self`.
    pub fn mul_truncated(&self, other: &SeriesModM) -> SeriesModM {
        assert_eq!(self.modulus, other.modulus);
        SeriesModM {
            modulus: self.modulus,
            coeffs: mul_truncated(&self.coeffs, &other.coeffs, self.coeffs.len(), self.modulus.modulus()),
        }
    }
}

fn kernel_coeffs(modulus: PrimePowerModulus, variant: Variant, degree: u64) -> Vec<u64> {
    let p = modulus.p();
    let q = modulus.modulus();
    let limit = match variant {
        Variant::R => degree,
        Variant::S => q.min(degree + 1),
    };
    let mut coeffs = vec![0u64; degree as usize + 1];
    for l in 1..limit {
        if l % p != 0 {
            coeffs[l as usize] = inv_mod(l % q, q).expect("l is prime to p");
        }
    }
    coeffs
}

/// `Σ x^l / l` over the admissible parts `l`, truncated at degree `m·p^r`.
pub fn series_kernel(spec: &SumSpec) -> SeriesModM {
    SeriesModM {
        modulus: spec.modulus,
        coeffs: kernel_coeffs(spec.modulus, spec.variant, spec.degree()),
    }
}

fn nonzero_span(a: &[u64]) -> Option<(usize, usize)> {
    let lo = a.iter().position(|&x| x != 0)?;
    let hi = a.iter().rposition(|&x| x != 0)?;
    Some((lo, hi))
}

#[inline]
fn dot(a: &[u64], b_rev: impl Iterator<Item = u64>, m: u64) -> u64 {
    let mut acc: u128 = 0;
    for (&x, y) in a.iter().zip(b_rev) {
        acc += (x * y) as u128;
    }
    (acc % m as u128) as u64
}

/// `c[k] = Σ_i a[i]·b[k−i] mod m` for `k < len`.
fn mul_truncated(a: &[u64], b: &[u64], len: usize, m: u64) -> Vec<u64> {
    let (Some((alo, ahi)), Some((blo, bhi))) = (nonzero_span(a), nonzero_span(b)) else {
        return vec![0; len];
    };
    let coeff = |k: usize| -> u64 {
        if k < alo + blo {
            return 0;
        }
        let i_lo = alo.max(k.saturating_sub(bhi));
        let i_hi = ahi.min(k - blo);
        if i_lo > i_hi {
            return 0;
        }
        dot(&a[i_lo..=i_hi], b[k - i_hi..=k - i_lo].iter().rev().copied(), m)
    };
    if len < 2048 {
        (0..len).map(coeff).collect()
    } else {
        (0..len).into_par_iter().with_min_len(256).map(coeff).collect()
    }
}

/// Coefficients of `kernel^n` at the requested degrees.
///
/// Powers are built by repeated squaring, all truncated at the largest
/// requested degree; the last multiplication is replaced by one dot product
/// per requested degree.
fn power_coefficients(kernel: &[u64], n: u32, degrees: &[usize], m: u64) -> Vec<u64> {
    let len = degrees.iter().copied().max().map_or(0, |d| d + 1).min(kernel.len());
    let kernel = &kernel[..len];
    let single = |d: usize| if d < len { kernel[d] } else { 0 };
    if n == 1 {
        return degrees.iter().map(|&d| single(d)).collect();
    }

    let half = n / 2;
    let pow = |e: u32| -> Vec<u64> {
        let mut result: Option<Vec<u64>> = None;
        let mut base = kernel.to_vec();
        let mut e = e;
        loop {
            if e & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => mul_truncated(&r, &base, len, m),
                });
            }
            e >>= 1;
            if e == 0 {
                break;
            }
            base = mul_truncated(&base, &base, len, m);
        }
        result.expect("exponent ≥ 1")
    };
    let low = pow(half);
    let high = if n.is_multiple_of(2) {
        low.clone()
    } else {
        mul_truncated(&low, kernel, len, m)
    };
    degrees
        .iter()
        .map(|&d| {
            if d >= len {
                return 0;
            }
            dot(&low[..=d], high[..=d].iter().rev().copied(), m)
        })
        .collect()
}

fn conv_estimate(n: u32, degree: u64) -> u128 {
    n as u128 * (degree as u128) * (degree as u128)
}

/// `R_n^(m)(p^r)` or `S_n^(m)(p^r)` as the coefficient of `x^{m p^r}` in `kernel^n`.
pub fn eval_conv(spec: &SumSpec, budget: &Budget) -> Result<Residue> {
    Budget::check(conv_estimate(spec.n, spec.degree()), budget.convolution)?;
    let kernel = kernel_coeffs(spec.modulus, spec.variant, spec.degree());
    let d = spec.degree() as usize;
    let value = power_coefficients(&kernel, spec.n, &[d], spec.modulus.modulus())[0];
    Ok(spec.modulus.residue_u64(value))
}

/// The sums for every multiplier `m = 1..=m_max` from a single power of the kernel.
///
/// Entry `i` holds the value for `m = i + 1`. Multipliers divisible by `p`
/// still get the (well-defined) coefficient; callers that follow the
/// `p ∤ m` convention must skip them.
pub fn eval_conv_all(
    n: u32,
    m_max: u64,
    modulus: PrimePowerModulus,
    variant: Variant,
    budget: &Budget,
) -> Result<Vec<Residue>> {
    if n == 0 || m_max == 0 {
        return Err(Error::InvalidArgument("n and m_max must be positive".into()));
    }
    let q = modulus.modulus();
    let top = m_max * q;
    Budget::check(conv_estimate(n, top), budget.convolution)?;
    let kernel = kernel_coeffs(modulus, variant, top);
    let degrees: Vec<usize> = (1..=m_max).map(|m| (m * q) as usize).collect();
    Ok(power_coefficients(&kernel, n, &degrees, q)
        .into_iter()
        .map(|v| modulus.residue_u64(v))
        .collect())
}

/// `C(a, b)` saturating at `u128::MAX`.
pub(crate) fn binomial_saturating(a: u64, b: u64) -> u128 {
    if b > a {
        return 0;
    }
    let b = b.min(a - b);
    let mut acc: u128 = 1;
    for i in 0..b {
        acc = match acc.checked_mul((a - i) as u128) {
            Some(v) => v / (i + 1) as u128,
            None => return u128::MAX,
        };
    }
    acc
}

fn admissible(l: u64, p: u64, q: u64, variant: Variant) -> bool {
    !l.is_multiple_of(p) && (variant == Variant::R || l < q)
}

/// Direct sum over the compositions of `m·p^r`, visited in lexicographic order.
pub fn eval_brute(spec: &SumSpec, budget: &Budget) -> Result<Residue> {
    let total = spec.degree();
    Budget::check(binomial_saturating(total - 1, spec.n as u64 - 1), budget.enumeration)?;
    let p = spec.modulus.p();
    let q = spec.modulus.modulus();
    let inverses: Vec<u64> = (0..=total)
        .map(|l| if l % p == 0 { 0 } else { inv_mod(l % q, q).unwrap() })
        .collect();

    fn walk(parts_left: u32, rest: u64, prefix: u64, ctx: &(u64, u64, Variant, &[u64]), acc: &mut u64) {
        let (p, q, variant, inverses) = *ctx;
        if parts_left == 1 {
            if admissible(rest, p, q, variant) {
                *acc = (*acc + prefix * inverses[rest as usize]) % q;
            }
            return;
        }
        for l in 1..=rest - (parts_left as u64 - 1) {
            if admissible(l, p, q, variant) {
                walk(parts_left - 1, rest - l, prefix * inverses[l as usize] % q, ctx, acc);
            }
        }
    }

    let mut acc = 0u64;
    if total >= spec.n as u64 {
        walk(
            spec.n,
            total,
            1 % q,
            &(p, q, spec.variant, inverses.as_slice()),
            &mut acc,
        );
    }
    Ok(spec.modulus.residue_u64(acc))
}

/// The exact rational value of the sum (no reduction), by enumeration.
pub fn eval_brute_exact(spec: &SumSpec, budget: &Budget) -> Result<Rational> {
    let total = spec.degree();
    Budget::check(binomial_saturating(total - 1, spec.n as u64 - 1), budget.enumeration)?;
    let p = spec.modulus.p();
    let q = spec.modulus.modulus();

    fn walk(parts_left: u32, rest: u64, prefix: &BigInt, ctx: (u64, u64, Variant), acc: &mut Rational) {
        let (p, q, variant) = ctx;
        if parts_left == 1 {
            if admissible(rest, p, q, variant) {
                *acc += Rational::new(BigInt::one(), prefix * BigInt::from(rest));
            }
            return;
        }
        for l in 1..=rest - (parts_left as u64 - 1) {
            if admissible(l, p, q, variant) {
                walk(parts_left - 1, rest - l, &(prefix * BigInt::from(l)), ctx, acc);
            }
        }
    }

    let mut acc = Rational::zero();
    if total >= spec.n as u64 {
        walk(spec.n, total, &BigInt::one(), (p, q, spec.variant), &mut acc);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modarith::rational;

    fn spec(n: u32, m: u64, p: u64, r: u32, v: Variant) -> SumSpec {
        SumSpec::new(n, m, PrimePowerModulus::new(p, r).unwrap(), v).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let k = series_kernel(&spec(1, 1, 5, 1, Variant::R));
        assert_eq!(k.coeffs(), &[0, 1, 3, 2, 4, 0]);
        let k = series_kernel(&spec(3, 2, 7, 1, Variant::R));
        assert_eq!(k.coeffs()[0], 0);
        assert_eq!(k.coeffs()[7], 0);
        assert_eq!(k.coeffs()[8], 1);
        let k = series_kernel(&spec(2, 2, 5, 1, Variant::S));
        assert_eq!(&k.coeffs()[..5], &[0, 1, 3, 2, 4]);
        assert!(k.coeffs()[5..].iter().all(|&c| c == 0));
    }

    #[test]
    fn conv_examples() {
        let b = Budget::default();
        assert_eq!(eval_conv(&spec(3, 1, 7, 1, Variant::R), &b).unwrap().value(), 1);
        assert_eq!(eval_conv(&spec(3, 1, 5, 1, Variant::R), &b).unwrap().value(), 3);
        assert_eq!(eval_conv(&spec(2, 1, 5, 1, Variant::R), &b).unwrap().value(), 0);
        assert_eq!(eval_conv(&spec(1, 3, 11, 2, Variant::R), &b).unwrap().value(), 0);
    }

    #[test]
    fn brute_examples() {
        let b = Budget::default();
        assert_eq!(eval_brute(&spec(3, 1, 7, 1, Variant::R), &b).unwrap().value(), 1);
        assert_eq!(eval_brute(&spec(3, 1, 7, 1, Variant::S), &b).unwrap().value(), 1);
        assert_eq!(eval_brute(&spec(1, 1, 7, 2, Variant::R), &b).unwrap().value(), 0);
        assert_eq!(
            eval_brute_exact(&spec(3, 1, 7, 1, Variant::R), &b).unwrap(),
            rational(29, 15)
        );
        assert_eq!(
            eval_brute_exact(&spec(3, 1, 5, 1, Variant::R), &b).unwrap(),
            rational(7, 4)
        );
        assert_eq!(
            eval_brute_exact(&spec(2, 1, 5, 1, Variant::R), &b).unwrap(),
            rational(5, 6)
        );
    }

    #[test]
    fn rejects_bad_specs() {
        let m7 = PrimePowerModulus::prime(7).unwrap();
        assert!(SumSpec::new(0, 1, m7, Variant::R).is_err());
        assert!(SumSpec::new(2, 0, m7, Variant::R).is_err());
        assert!(matches!(
            SumSpec::new(2, 14, m7, Variant::R),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn budgets_are_enforced() {
        let tight = Budget {
            convolution: 10,
            enumeration: 10,
            nested: 10,
        };
        let s = spec(3, 1, 7, 1, Variant::R);
        assert!(matches!(eval_conv(&s, &tight), Err(Error::WorkBudgetExceeded { .. })));
        assert!(matches!(eval_brute(&s, &tight), Err(Error::WorkBudgetExceeded { .. })));
    }

    #[test]
    fn all_multipliers_agree_with_single_evaluations() {
        let b = Budget::default();
        let m = PrimePowerModulus::new(7, 2).unwrap();
        for variant in [Variant::R, Variant::S] {
            for n in 1..=5 {
                let all = eval_conv_all(n, 4, m, variant, &b).unwrap();
                for (i, value) in all.iter().enumerate() {
                    let single = eval_conv(&SumSpec::new(n, i as u64 + 1, m, variant).unwrap(), &b).unwrap();
                    assert_eq!(*value, single, "{variant} n={n} m={}", i + 1);
                }
            }
        }
    }

    #[test]
    fn parallel_multiplication_matches_serial() {
        let m = 1_000_003u64;
        let a: Vec<u64> = (0..5000u64).map(|i| (i * i + 7) % m).collect();
        let b: Vec<u64> = (0..5000u64).map(|i| (3 * i + 1) % m).collect();
        let fast = mul_truncated(&a, &b, 5000, m);
        for k in [0usize, 1, 17, 2047, 2048, 4999] {
            let naive = (0..=k).fold(0u128, |acc, i| acc + (a[i] * b[k - i]) as u128) % m as u128;
            assert_eq!(fast[k] as u128, naive);
        }
    }

    #[test]
    fn saturating_binomial() {
        assert_eq!(binomial_saturating(6, 2), 15);
        assert_eq!(binomial_saturating(2, 6), 0);
        assert_eq!(binomial_saturating(506, 3), 21_464_520);
        assert_eq!(binomial_saturating(10_000, 5_000), u128::MAX);
    }
}
