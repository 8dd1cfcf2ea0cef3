//! Exact closed forms for `R_n^(m,1)` and `S_n^(m,1)` as rational combinations
//! of β-monomials, their reduction modulo `p^r`, interpolation in `m`, and the
//! sign-flip probe.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::bernoulli::{eval_monomial, BernoulliTable};
use crate::directsums::Variant;
use crate::error::{Error, Result};
use crate::modarith::{reduce_rational, PrimePowerModulus, Rational, Residue};
use crate::monomial::BetaMonomial;

fn q(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

fn qi(v: impl Into<BigInt>) -> Rational {
    Rational::from_integer(v.into())
}

pub(crate) fn binom(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

pub(crate) fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// A finite sum `Σ c_t · β^t` over monomials of a common weight, with exact rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalCombo {
    weight: u32,
    terms: BTreeMap<BetaMonomial, Rational>,
}

impl RationalCombo {
    pub fn zero(weight: u32) -> Self {
        RationalCombo {
            weight,
            terms: BTreeMap::new(),
        }
    }

    pub fn weight(&self) -> u32 {
        self.weight
    }

    pub fn terms(&self) -> &BTreeMap<BetaMonomial, Rational> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The coefficient of `mon` (zero when absent).
    pub fn coefficient(&self, mon: &BetaMonomial) -> Rational {
        self.terms.get(mon).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn add_term(&mut self, mon: BetaMonomial, coeff: Rational) -> Result<()> {
        if mon.weight() != self.weight {
            return Err(Error::InvalidArgument(format!(
                "monomial {mon} has weight {}, expected {}",
                mon.weight(),
                self.weight
            )));
        }
        if coeff.is_zero() {
            return Ok(());
        }
        let entry = self.terms.entry(mon).or_insert_with(Rational::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.terms.retain(|_, c| !c.is_zero());
        }
        Ok(())
    }

    /// `self + factor · other`.
    pub fn add_scaled(&mut self, other: &RationalCombo, factor: &Rational) -> Result<()> {
        for (mon, c) in &other.terms {
            self.add_term(mon.clone(), c * factor)?;
        }
        Ok(())
    }

    pub fn scaled(&self, factor: &Rational) -> RationalCombo {
        let mut out = RationalCombo::zero(self.weight);
        out.add_scaled(self, factor).expect("same weight");
        out
    }

    /// Reduction modulo the table's prime.
    pub fn evaluate(&self, table: &BernoulliTable) -> Result<Residue> {
        let modulus = table.modulus();
        let mut acc = modulus.zero();
        for (mon, c) in &self.terms {
            acc = acc + reduce_rational(c, modulus)? * eval_monomial(mon, table)?;
        }
        Ok(acc)
    }

    /// Plain text, e.g. `645120·β3β5` or `29/2·β3^2β5`.
    pub fn render_text(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let mut out = String::new();
        for (i, (mon, c)) in self.terms.iter().enumerate() {
            let sign = if c.is_negative() { "-" } else { "+" };
            if i == 0 {
                if c.is_negative() {
                    out.push('-');
                }
            } else {
                let _ = write!(out, " {sign} ");
            }
            let _ = write!(out, "{}", c.abs());
            if mon.depth() > 0 {
                let _ = write!(out, "·{mon}");
            }
        }
        out
    }

    pub fn render_latex(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let mut out = String::new();
        for (i, (mon, c)) in self.terms.iter().enumerate() {
            if i == 0 {
                if c.is_negative() {
                    out.push('-');
                }
            } else {
                out.push_str(if c.is_negative() { " - " } else { " + " });
            }
            let c = c.abs();
            if c.is_integer() {
                let _ = write!(out, "{}", c.numer());
            } else {
                let _ = write!(out, "\\frac{{{}}}{{{}}}", c.numer(), c.denom());
            }
            for (k, e) in mon.powers() {
                let _ = write!(out, "\\beta_{{{k}}}");
                if e > 1 {
                    let _ = write!(out, "^{{{e}}}");
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ComboJson::from(self)).expect("combo serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ComboJson =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("bad combo JSON: {e}")))?;
        let mut out = RationalCombo::zero(raw.weight);
        for term in raw.terms {
            let parse = |s: &str| {
                s.parse::<BigInt>()
                    .map_err(|e| Error::InvalidArgument(format!("bad integer {s:?}: {e}")))
            };
            let den = parse(&term.den)?;
            if den.is_zero() {
                return Err(Error::InvalidArgument("zero denominator".into()));
            }
            out.add_term(term.monomial, Rational::new(parse(&term.num)?, den))?;
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    monomial: BetaMonomial,
    num: String,
    den: String,
}

#[derive(Serialize, Deserialize)]
struct ComboJson {
    weight: u32,
    terms: Vec<TermJson>,
}

impl From<&RationalCombo> for ComboJson {
    fn from(c: &RationalCombo) -> Self {
        ComboJson {
            weight: c.weight,
            terms: c
                .terms
                .iter()
                .map(|(mon, v)| TermJson {
                    monomial: mon.clone(),
                    num: v.numer().to_string(),
                    den: v.denom().to_string(),
                })
                .collect(),
        }
    }
}

/// Ordered tuples of odd parts `≥ 3` summing to `n`, optionally with exactly `parts` parts; lexicographic.
pub fn odd_compositions(n: u32, parts: Option<usize>) -> Vec<Vec<u32>> {
    fn rec(rest: u32, parts: Option<usize>, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest == 0 {
            if parts.map_or(!cur.is_empty(), |l| cur.len() == l) {
                out.push(cur.clone());
            }
            return;
        }
        if parts.is_some_and(|l| cur.len() >= l) {
            return;
        }
        for a in (3..=rest).step_by(2) {
            cur.push(a);
            rec(rest - a, parts, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts == Some(0) {
        if n == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(n, parts, &mut Vec::new(), &mut out);
    out
}

/// Compositions of `m` into `parts` positive parts, lexicographic.
pub(crate) fn compositions(m: u64, parts: usize) -> Vec<Vec<u64>> {
    fn rec(rest: u64, parts: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() + 1 == parts {
            if rest >= 1 {
                cur.push(rest);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        let slots = (parts - cur.len() - 1) as u64;
        for k in 1..=rest.saturating_sub(slots) {
            cur.push(k);
            rec(rest - k, parts, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        if m == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(m, parts, &mut Vec::new(), &mut out);
    out
}

fn prefix_factor(k: &[u64]) -> Rational {
    let mut acc = Rational::one();
    let mut running = 0u64;
    for &kj in &k[..k.len() - 1] {
        running += kj;
        acc /= qi(running);
    }
    acc
}

/// `(1/m) Σ_k Π_{j<ℓ} 1/(k_1+…+k_j) Π_j [C(k_j+a_j−1, a_j) − C(k_j, a_j)]` for one ordered tuple `a`.
fn ordered_r_coefficient(a: &[u32], m: u64) -> Rational {
    let mut total = Rational::zero();
    for k in compositions(m, a.len()) {
        let mut c = prefix_factor(&k);
        for (&kj, &aj) in k.iter().zip(a) {
            let bracket = binom(kj + aj as u64 - 1, aj as u64) - binom(kj, aj as u64);
            if bracket.is_zero() {
                c = Rational::zero();
                break;
            }
            c *= qi(bracket);
        }
        total += c;
    }
    total / qi(m)
}

fn check_nm(n: u32, m: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("closed forms need n ≥ 2, got {n}")));
    }
    if m < 1 {
        return Err(Error::InvalidArgument("closed forms need m ≥ 1".into()));
    }
    Ok(())
}

/// `R_n^(m,1)` from the general composition formula.
pub fn r_closed_form(n: u32, m: u64) -> Result<RationalCombo> {
    check_nm(n, m)?;
    let nf = qi(factorial(n as u64));
    let mut out = RationalCombo::zero(n);
    for ell in 1..=(n / 3) as usize {
        for a in odd_compositions(n, Some(ell)) {
            let c = ordered_r_coefficient(&a, m);
            out.add_term(BetaMonomial::new(a)?, c * &nf)?;
        }
    }
    Ok(out)
}

/// `S_n^(m,1) = Σ_{k<m} (−1)^k C(n,k) R_n^(m−k,1)`.
pub fn s_closed_form(n: u32, m: u64) -> Result<RationalCombo> {
    check_nm(n, m)?;
    let mut out = RationalCombo::zero(n);
    for k in 0..m {
        let sign = if k % 2 == 0 { 1 } else { -1 };
        let factor = qi(binom(n as u64, k) * sign);
        if factor.is_zero() {
            continue;
        }
        out.add_scaled(&r_closed_form(n, m - k)?, &factor)?;
    }
    Ok(out)
}

/// Either closed form by variant.
pub fn closed_form(variant: Variant, n: u32, m: u64) -> Result<RationalCombo> {
    match variant {
        Variant::R => r_closed_form(n, m),
        Variant::S => s_closed_form(n, m),
    }
}

fn c3(a: i64) -> Rational {
    qi(binom(3, a as u64))
}

fn c5(a: i64) -> Rational {
    qi(binom(5, a as u64))
}

/// Adds `f(parts)` on the monomial of every ordered odd composition of `n` with `len` parts.
fn add_over(out: &mut RationalCombo, n: u32, len: usize, f: impl Fn(&[i64]) -> Rational) -> Result<()> {
    for a in odd_compositions(n, Some(len)) {
        let parts: Vec<i64> = a.iter().map(|&x| x as i64).collect();
        out.add_term(BetaMonomial::new(a)?, f(&parts))?;
    }
    Ok(())
}

/// The tabulated closed forms for `m ≤ 6`, entered term by term from their
/// published shapes (branches on the parity of `n`, binomial indicators
/// evaluated at the integer parts). Independent of [`r_closed_form`].
pub fn known_closed_form(variant: Variant, n: u32, m: u64) -> Result<RationalCombo> {
    if m == 0 || m > 6 {
        return Err(Error::UnsupportedM(m as u32));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("closed forms need n ≥ 2, got {n}")));
    }
    let odd = n % 2 == 1;
    let ni = n as i64;
    let nn = qi(ni);
    let f = |k: i64| qi(factorial(k as u64));
    let fact_n = f(ni);
    let mut o = RationalCombo::zero(n);
    let single = |o: &mut RationalCombo, c: Rational| -> Result<()> { o.add_term(BetaMonomial::new(vec![n])?, c) };

    match (variant, m) {
        (_, 1) => {
            if odd {
                single(&mut o, fact_n.clone())?;
            }
        }
        (Variant::R, 2) => {
            if odd {
                single(&mut o, f(ni + 1) / qi(2))?;
            } else {
                add_over(&mut o, n, 2, |_| &fact_n / qi(2))?;
            }
        }
        (Variant::S, 2) => {
            if odd {
                single(&mut o, -q(ni - 1, 2) * &fact_n)?;
            } else {
                add_over(&mut o, n, 2, |_| &fact_n / qi(2))?;
            }
        }
        (Variant::R, 3) => {
            if odd {
                single(&mut o, qi(binom(n as u64 + 2, 3)) * f(ni - 1))?;
                add_over(&mut o, n, 3, |_| &fact_n / qi(6))?;
            } else {
                add_over(&mut o, n, 2, |_| &fact_n * qi(ni + 2) / qi(4))?;
            }
        }
        (Variant::S, 3) => {
            if odd {
                single(&mut o, qi(binom(n as u64, 3)) * f(ni - 1))?;
                add_over(&mut o, n, 3, |_| &fact_n / qi(6))?;
            } else {
                add_over(&mut o, n, 2, |_| -(&fact_n * qi(ni - 2) / qi(4)))?;
            }
        }
        (Variant::R, _) if odd && n < 9 => {
            let mm = qi(m as i64);
            let m2 = &mm * &mm;
            let c = match n {
                3 => qi(6) * &mm,
                5 => f(5) / f(3) * &mm * (&m2 + qi(5)),
                7 => f(7) / f(5) * &mm * (&m2 * &m2 + qi(35) * &m2 + qi(84)),
                _ => unreachable!("odd n below 9 and at least 2"),
            };
            single(&mut o, c)?;
        }
        (Variant::R, 4) => {
            if odd {
                single(&mut o, f(ni - 1) * qi(binom(n as u64 + 3, 4)))?;
                add_over(&mut o, n, 3, |_| &fact_n * qi(ni + 3) / qi(2 * 6))?;
            } else {
                add_over(&mut o, n, 2, |p| {
                    let a = qi(p[0]);
                    &fact_n / qi(24) * (q(3, 2) * &nn * &nn + qi(9) * &nn + qi(11) + &a * &a - qi(8) * c3(p[0]))
                })?;
                add_over(&mut o, n, 4, |_| &fact_n / qi(24))?;
            }
        }
        (Variant::R, 5) => {
            if odd {
                single(&mut o, f(ni - 1) * qi(binom(n as u64 + 4, 5)))?;
                add_over(&mut o, n, 5, |_| &fact_n / f(5))?;
                add_over(&mut o, n, 3, |p| {
                    let a = qi(p[0]);
                    &fact_n / f(4) * (&nn * &nn / qi(2) + qi(4) * &nn + qi(7) + &a * &a / qi(2) - qi(4) * c3(p[0]))
                })?;
            } else {
                add_over(&mut o, n, 2, |p| {
                    let a = qi(p[0]);
                    &fact_n / qi(3 * 24)
                        * (&nn * &nn * &nn
                            + qi(9) * &nn * &nn
                            + q(63, 2) * &nn
                            + qi(30)
                            + &a * &a * &a
                            + qi(6) * &a * &a
                            - qi(12) * (&nn + qi(4)) * c3(p[0]))
                })?;
                add_over(&mut o, n, 4, |_| &fact_n * qi(ni + 4) / qi(2 * 24))?;
            }
        }
        (Variant::R, 6) => {
            if odd {
                single(&mut o, f(ni - 1) * qi(binom(n as u64 + 5, 6)))?;
                add_over(&mut o, n, 5, |_| &fact_n * qi(ni + 5) / (qi(2) * f(5)))?;
                add_over(&mut o, n, 3, |p| {
                    let (a, b) = (qi(p[0]), qi(p[1]));
                    &fact_n / qi(4 * 24)
                        * (&nn * &nn * &nn / qi(3)
                            + &a * &a * &a
                            + qi(2) * &a * &a * &b
                            + qi(5) * &nn * &nn
                            + qi(5) * &a * &a
                            + q(68, 3) * &nn
                            + qi(30)
                            - qi(8) * c3(p[0]) * (&nn + qi(5)))
                })?;
            } else {
                add_over(&mut o, n, 6, |_| &fact_n / f(6))?;
                add_over(&mut o, n, 2, |p| {
                    let a = qi(p[0]);
                    let a2 = &a * &a;
                    let a3 = &a2 * &a;
                    let n2 = &nn * &nn;
                    let tail = q(8, 3) * &a2 * &a2
                        + qi(25) * &a3
                        + qi(85) * &a2
                        + q(675, 2) * &nn
                        + qi(274)
                        + q(5, 6) * &a3 * &nn
                        + q(5, 3) * &n2 * &n2
                        + qi(25) * &n2 * &nn
                        + q(255, 2) * &n2;
                    &fact_n / qi(6)
                        * (q(1, 3) * c3(p[0]) * c3(p[1])
                            - q(6, 5) * c5(p[0])
                            - (&n2 + qi(6) * &nn - qi(16)) / qi(3) * c3(p[0])
                            + tail / f(5))
                })?;
                add_over(&mut o, n, 4, |p| {
                    let a = qi(p[0]);
                    &fact_n / qi(144)
                        * (&a * &a + qi(3) * &nn * &nn / qi(4) + qi(15) * &nn / qi(2) + qi(17) - qi(8) * c3(p[0]))
                })?;
            }
        }
        (Variant::S, 4) => {
            if odd {
                single(&mut o, -(f(ni - 1) * qi(binom(n as u64, 4))))?;
                add_over(&mut o, n, 3, |_| -(&fact_n * qi(ni - 3) / qi(12)))?;
            } else {
                add_over(&mut o, n, 2, |p| {
                    let a = qi(p[0]);
                    &fact_n / qi(24) * (q(3, 2) * &nn * &nn - qi(9) * &nn + qi(11) + &a * &a - qi(8) * c3(p[0]))
                })?;
                add_over(&mut o, n, 4, |_| &fact_n / qi(24))?;
            }
        }
        (Variant::S, 5) => {
            if odd {
                single(&mut o, f(ni - 1) * qi(binom(n as u64, 5)))?;
                add_over(&mut o, n, 5, |_| &fact_n / f(5))?;
                add_over(&mut o, n, 3, |p| {
                    let a = qi(p[0]);
                    &fact_n / f(4) * (&nn * &nn / qi(2) - qi(4) * &nn + qi(7) + &a * &a / qi(2) - qi(4) * c3(p[0]))
                })?;
            } else {
                add_over(&mut o, n, 2, |p| {
                    let a = qi(p[0]);
                    &fact_n / qi(144)
                        * (-qi(2) * &nn * &nn * &nn + qi(18) * &nn * &nn - qi(63) * &nn + qi(60) - qi(2) * &a * &a * &a
                            + qi(12) * &a * &a
                            + qi(24) * (&nn - qi(4)) * c3(p[0]))
                })?;
                add_over(&mut o, n, 4, |_| -(&fact_n * qi(ni - 4) / qi(48)))?;
            }
        }
        (Variant::S, 6) => {
            if odd {
                // The odd branch is printed without the n! factor on its last two sums.
                single(&mut o, -(f(ni - 1) * qi(binom(n as u64, 6))))?;
                add_over(&mut o, n, 5, |_| -(qi(ni - 5) / (qi(2) * f(5))))?;
                add_over(&mut o, n, 3, |p| {
                    let (a, b) = (qi(p[0]), qi(p[1]));
                    -(Rational::one() / qi(96))
                        * (&nn * &nn * &nn / qi(3) + &a * &a * &a - qi(2) * &a * &a * &b - qi(5) * &nn * &nn
                            + qi(5) * &a * &a
                            + q(68, 3) * &nn
                            - qi(30)
                            - qi(8) * c3(p[0]) * (&nn - qi(5)))
                })?;
            } else {
                add_over(&mut o, n, 6, |_| &fact_n / f(6))?;
                add_over(&mut o, n, 2, |p| {
                    let a = qi(p[0]);
                    let a2 = &a * &a;
                    let a3 = &a2 * &a;
                    let n2 = &nn * &nn;
                    let tail = q(8, 3) * &a2 * &a2 - qi(25) * &a3 + qi(85) * &a2 - q(675, 2) * &nn
                        + qi(274)
                        + q(5, 6) * &a3 * &nn
                        + q(5, 3) * &n2 * &n2
                        - qi(25) * &n2 * &nn
                        + q(255, 2) * &n2;
                    &fact_n / qi(6)
                        * (q(1, 3) * c3(p[0]) * c3(p[1])
                            - q(6, 5) * c5(p[0])
                            - (&n2 - qi(9) * &nn - qi(16)) / qi(3) * c3(p[0])
                            + tail / f(5))
                })?;
                add_over(&mut o, n, 4, |p| {
                    let a = qi(p[0]);
                    &fact_n / qi(144)
                        * (&a * &a + qi(3) * &nn * &nn / qi(4) - qi(15) * &nn / qi(2) + qi(17) - qi(8) * c3(p[0]))
                })?;
            }
        }
        _ => unreachable!("m in 1..=6"),
    }
    Ok(o)
}

/// `γ_n^(m)(a) = (−1)^{m+a} C(n−2, m−1) (a−1)! (n−1−a)! / (n−1)!`.
pub fn gamma_coeff(n: u32, m: u32, a: u32) -> Result<Rational> {
    if n < 2 || !(1..n).contains(&a) || !(1..n).contains(&m) {
        return Err(Error::PreconditionViolated(format!(
            "γ needs 1 ≤ a, m ≤ n − 1; got n = {n}, m = {m}, a = {a}"
        )));
    }
    let sign = if (m + a).is_multiple_of(2) { 1 } else { -1 };
    let num = binom(n as u64 - 2, m as u64 - 1) * factorial(a as u64 - 1) * factorial((n - 1 - a) as u64) * sign;
    Ok(Rational::new(num, factorial(n as u64 - 1)))
}

/// `S_n^(m,2) / p = Σ_a γ_n^(m)(a) · S_n^(a,1)` as a combination.
pub fn lift_combo(n: u32, m: u32) -> Result<RationalCombo> {
    let mut out = RationalCombo::zero(n);
    for a in 1..n {
        out.add_scaled(&s_closed_form(n, a as u64)?, &gamma_coeff(n, m, a)?)?;
    }
    Ok(out)
}

/// The tabulated constants `S_n^(1,2) / p` for `8 ≤ n ≤ 12`, as printed:
/// `S_n^(m,r) = ± C(n−2, m−1) K (Σ c_t β^t) p^{r−1}` taken at `m = 1`.
pub fn known_lift_constant(n: u32) -> Result<RationalCombo> {
    let (k, terms): (i64, Vec<(Vec<u32>, i64)>) = match n {
        8 => (5376, vec![(vec![3, 5], 1)]),
        9 => (36, vec![(vec![9], 6088), (vec![3, 3, 3], 61)]),
        10 => (223200, vec![(vec![5, 5], 1), (vec![3, 7], 2)]),
        11 => (174240, vec![(vec![11], 122), (vec![3, 3, 5], 3)]),
        12 => (47520, vec![(vec![3, 9], 896), (vec![5, 7], 872), (vec![3, 3, 3, 3], 3)]),
        _ => return Err(Error::InvalidArgument(format!("no tabulated constant for n = {n}"))),
    };
    // (−1)^m at m = 1 for even n, (−1)^{m−1} for odd n
    let sign = if n.is_multiple_of(2) { -1 } else { 1 };
    let mut out = RationalCombo::zero(n);
    for (mon, c) in terms {
        out.add_term(BetaMonomial::new(mon)?, qi(sign * k * c))?;
    }
    Ok(out)
}

fn check_prediction_inputs(n: u32, m: u64, p: u64, r: u32, table: &BernoulliTable) -> Result<()> {
    if table.p() != p {
        return Err(Error::InvalidArgument(format!(
            "Bernoulli table is for p = {}, not {p}",
            table.p()
        )));
    }
    if p < n as u64 + 2 {
        return Err(Error::PreconditionViolated(format!(
            "need p ≥ n + 2, got p = {p}, n = {n}"
        )));
    }
    if m == 0 || m.is_multiple_of(p) {
        return Err(Error::PreconditionViolated(format!("need p ∤ m, got m = {m}")));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("r must be at least 1".into()));
    }
    if r >= 2 && m >= n as u64 {
        return Err(Error::PreconditionViolated(format!(
            "lifting to r ≥ 2 needs m ≤ n − 1, got m = {m}, n = {n}"
        )));
    }
    Ok(())
}

/// `p · x` in `Z/p^r` for a residue `x` mod `p`, times `p^{r−2}` more when `r ≥ 2`.
fn scale_to(x: Residue, p: u64, r: u32) -> Result<Residue> {
    let modulus = PrimePowerModulus::new(p, r)?;
    Ok(modulus.residue_u64(x.value() * p.pow(r - 1)))
}

/// The closed-form prediction of `S_n^(m)(p^r)` mod `p^r`.
pub fn predict_s(n: u32, m: u64, p: u64, r: u32, table: &BernoulliTable) -> Result<Residue> {
    check_prediction_inputs(n, m, p, r, table)?;
    match r {
        1 => s_closed_form(n, m)?.evaluate(table),
        2 => {
            let modp = table.modulus();
            let mut acc = modp.zero();
            for a in 1..n {
                let s_a = predict_s(n, a as u64, p, 1, table)?;
                acc = acc + reduce_rational(&gamma_coeff(n, m as u32, a)?, modp)? * s_a;
            }
            scale_to(acc, p, 2)
        }
        _ => {
            let base = predict_s(n, 1, p, 2, table)?.value() / p;
            let sign: i64 = if m % 2 == 1 { 1 } else { -1 };
            let c = table.modulus().residue_big(&(binom(n as u64 - 2, m - 1) * sign));
            scale_to(c * table.modulus().residue_u64(base), p, r)
        }
    }
}

/// The closed-form prediction of `R_n^(m)(p^r)` mod `p^r`.
pub fn predict_r(n: u32, m: u64, p: u64, r: u32, table: &BernoulliTable) -> Result<Residue> {
    check_prediction_inputs(n, m, p, r, table)?;
    if r == 1 {
        return r_closed_form(n, m)?.evaluate(table);
    }
    let base = predict_s(n, 1, p, 2, table)?.value() / p;
    let x = table.modulus().residue_u64(m % p) * table.modulus().residue_u64(base);
    scale_to(x, p, r)
}

/// Either prediction by variant.
pub fn predict(variant: Variant, n: u32, m: u64, p: u64, r: u32, table: &BernoulliTable) -> Result<Residue> {
    match variant {
        Variant::R => predict_r(n, m, p, r, table),
        Variant::S => predict_s(n, m, p, r, table),
    }
}

/// A polynomial in `m` with rational coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientPolynomial {
    pub monomial: BetaMonomial,
    pub poly: Vec<Rational>,
}

impl CoefficientPolynomial {
    pub fn eval(&self, m: &Rational) -> Rational {
        self.poly.iter().rev().fold(Rational::zero(), |acc, c| acc * m + c)
    }

    pub fn degree(&self) -> Option<usize> {
        self.poly.iter().rposition(|c| !c.is_zero())
    }

    /// E.g. `336·m^5 + 5040·m^3 - 5376·m`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (deg, c) in self.poly.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            if out.is_empty() {
                if c.is_negative() {
                    out.push('-');
                }
            } else {
                out.push_str(if c.is_negative() { " - " } else { " + " });
            }
            let c = c.abs();
            match deg {
                0 => {
                    let _ = write!(out, "{c}");
                }
                1 => {
                    let _ = write!(out, "{c}·m");
                }
                _ => {
                    let _ = write!(out, "{c}·m^{deg}");
                }
            }
        }
        if out.is_empty() {
            out.push('0');
        }
        out
    }
}

/// Coefficients (lowest degree first) of the polynomial through the points.
pub(crate) fn lagrange(xs: &[Rational], ys: &[Rational]) -> Vec<Rational> {
    let len = xs.len();
    let mut out = vec![Rational::zero(); len];
    for i in 0..len {
        let mut basis = vec![Rational::one()];
        let mut denom = Rational::one();
        for j in 0..len {
            if i == j {
                continue;
            }
            let mut next = vec![Rational::zero(); basis.len() + 1];
            for (d, c) in basis.iter().enumerate() {
                next[d + 1] += c;
                next[d] -= c * &xs[j];
            }
            basis = next;
            denom *= &xs[i] - &xs[j];
        }
        let scale = &ys[i] / denom;
        for (d, c) in basis.iter().enumerate() {
            out[d] += c * &scale;
        }
    }
    out
}

/// Interpolates each monomial's coefficient in `R_n^(m,1)` as a polynomial in `m`.
///
/// Uses `m = 1..=degree_bound+1` and checks the result at the next two values of `m`.
pub fn interp_coefficients(n: u32, degree_bound: u32) -> Result<Vec<CoefficientPolynomial>> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("interpolation needs n ≥ 3, got {n}")));
    }
    let support: Vec<u64> = (1..=degree_bound as u64 + 1).collect();
    let combos: Vec<RationalCombo> = support.iter().map(|&m| r_closed_form(n, m)).collect::<Result<_>>()?;
    let monomials: BTreeSet<BetaMonomial> = odd_compositions(n, None)
        .into_iter()
        .map(BetaMonomial::new)
        .collect::<Result<_>>()?;
    let xs: Vec<Rational> = support.iter().map(|&m| qi(m)).collect();
    let mut out = Vec::new();
    for mon in monomials {
        let ys: Vec<Rational> = combos.iter().map(|c| c.coefficient(&mon)).collect();
        let poly = CoefficientPolynomial {
            monomial: mon.clone(),
            poly: lagrange(&xs, &ys),
        };
        for extra in degree_bound as u64 + 2..=degree_bound as u64 + 3 {
            if poly.eval(&qi(extra)) != r_closed_form(n, extra)?.coefficient(&mon) {
                return Err(Error::InterpolationMismatch {
                    monomial: mon.to_string(),
                    m: extra as u32,
                });
            }
        }
        out.push(poly);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeOutcome {
    Pass,
    Fail,
    Inconclusive,
}

/// One comparison of the sign-flipped continuation against the `S` coefficient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeEntry {
    pub m: u64,
    pub monomial: BetaMonomial,
    /// Coefficient of the monomial in `S_n^(m,1) / n!`.
    pub s_coefficient: Rational,
    /// The continued `R` coefficient at negated parts.
    pub continued: Rational,
    pub outcome: ProbeOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeReport {
    pub n: u32,
    pub entries: Vec<ProbeEntry>,
}

impl ProbeReport {
    pub fn count(&self, outcome: ProbeOutcome) -> usize {
        self.entries.iter().filter(|e| e.outcome == outcome).count()
    }
}

/// Continues `a ↦ ordered_r_coefficient(a, m)` polynomially in every part and
/// evaluates it at `−a`.
///
/// Each part is interpolated over odd nodes above `m − ℓ + 1`, where the
/// indicator `C(k_j, a_j)` vanishes for every admissible `k_j`.
fn continued_at_negated(a: &[u32], m: u64) -> Rational {
    let ell = a.len();
    let per_axis = (m as usize + 2).saturating_sub(ell).max(1);
    let start = (m as i64 + 2 - ell as i64).max(3) | 1;
    let nodes: Vec<i64> = (0..per_axis as i64).map(|i| start + 2 * i).collect();
    let node_q: Vec<Rational> = nodes.iter().map(|&x| qi(x)).collect();
    // weights[j][i]: Lagrange basis i on axis j evaluated at −a_j
    let weights: Vec<Vec<Rational>> = a
        .iter()
        .map(|&aj| {
            let target = qi(-(aj as i64));
            (0..per_axis)
                .map(|i| {
                    let mut w = Rational::one();
                    for j in 0..per_axis {
                        if i != j {
                            w *= (&target - &node_q[j]) / (&node_q[i] - &node_q[j]);
                        }
                    }
                    w
                })
                .collect()
        })
        .collect();
    let mut total = Rational::zero();
    let mut idx = vec![0usize; ell];
    loop {
        let point: Vec<u32> = idx.iter().map(|&i| nodes[i] as u32).collect();
        let mut w = Rational::one();
        for (j, &i) in idx.iter().enumerate() {
            w *= &weights[j][i];
        }
        if !w.is_zero() {
            total += w * ordered_r_coefficient(&point, m);
        }
        let mut axis = 0;
        loop {
            if axis == ell {
                return total;
            }
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Distinct orderings of a multiset.
fn orderings(parts: &[u32]) -> Vec<Vec<u32>> {
    fn rec(counts: &mut BTreeMap<u32, usize>, len: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        let keys: Vec<u32> = counts.iter().filter(|(_, &c)| c > 0).map(|(&k, _)| k).collect();
        for k in keys {
            *counts.get_mut(&k).unwrap() -= 1;
            cur.push(k);
            rec(counts, len, cur, out);
            cur.pop();
            *counts.get_mut(&k).unwrap() += 1;
        }
    }
    let mut counts = BTreeMap::new();
    for &p in parts {
        *counts.entry(p).or_insert(0) += 1;
    }
    let mut out = Vec::new();
    rec(&mut counts, parts.len(), &mut Vec::new(), &mut out);
    out
}

/// Tests whether `S_n^(m,1)/n!` is obtained from `R_n^(m,1)/n!` by negating every part.
///
/// For `{n}` the `R` coefficient is fitted as a polynomial in the part over odd
/// values above `m`; deeper monomials are continued part by part. Monomials
/// with a part `≤ m − ℓ + 1` (where a binomial indicator can be nonzero) are
/// reported inconclusive whatever the comparison gives.
pub fn conjecture_probe(n: u32, m_max: u64) -> Result<ProbeReport> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("probe needs n ≥ 3, got {n}")));
    }
    let nf = qi(factorial(n as u64));
    let mut entries = Vec::new();
    for m in 1..=m_max {
        let s = s_closed_form(n, m)?;
        let monomials: BTreeSet<BetaMonomial> = odd_compositions(n, None)
            .into_iter()
            .map(BetaMonomial::new)
            .collect::<Result<_>>()?;
        for mon in monomials {
            let ell = mon.depth();
            let continued = if ell == 1 {
                depth_one_continuation(n, m)?
            } else {
                orderings(mon.indices())
                    .iter()
                    .map(|a| continued_at_negated(a, m))
                    .fold(Rational::zero(), |acc, x| acc + x)
            };
            let s_coefficient = s.coefficient(&mon) / &nf;
            let indicator = mon.indices()[0] as u64 <= (m + 1).saturating_sub(ell as u64);
            let outcome = if indicator {
                ProbeOutcome::Inconclusive
            } else if continued == s_coefficient {
                ProbeOutcome::Pass
            } else {
                ProbeOutcome::Fail
            };
            entries.push(ProbeEntry {
                m,
                monomial: mon,
                s_coefficient,
                continued,
                outcome,
            });
        }
    }
    Ok(ProbeReport { n, entries })
}

/// Fits `x ↦ [β_x] R_x^(m,1) / x!` over odd `x > m` and evaluates the fit at `−n`.
fn depth_one_continuation(n: u32, m: u64) -> Result<Rational> {
    let degree = m as usize; // degree m − 1, plus one spare node
    let first = (m as u32 + 1).max(3) | 1;
    let xs_u: Vec<u32> = (0..degree as u32 + 1).map(|i| first + 2 * i).collect();
    let ys: Vec<Rational> = xs_u
        .iter()
        .map(|&x| {
            let mon = BetaMonomial::new(vec![x])?;
            Ok(r_closed_form(x, m)?.coefficient(&mon) / qi(factorial(x as u64)))
        })
        .collect::<Result<_>>()?;
    let xs: Vec<Rational> = xs_u.iter().map(|&x| qi(x)).collect();
    let poly = CoefficientPolynomial {
        monomial: BetaMonomial::one(),
        poly: lagrange(&xs, &ys),
    };
    let check = first + 2 * (degree as u32 + 1);
    let mon = BetaMonomial::new(vec![check])?;
    if poly.eval(&qi(check)) != r_closed_form(check, m)?.coefficient(&mon) / qi(factorial(check as u64)) {
        return Err(Error::InterpolationMismatch {
            monomial: mon.to_string(),
            m: m as u32,
        });
    }
    Ok(poly.eval(&qi(-(n as i64))))
}

/// `(C(m+2,3) − C(m,3)) / m`, which collapses to `m`.
pub fn telescoped(m: u64) -> Rational {
    qi(binom(m + 2, 3) - binom(m, 3)) / qi(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernoulli::bernoulli_table;

    fn mon(v: &[u32]) -> BetaMonomial {
        BetaMonomial::new(v.to_vec()).unwrap()
    }

    #[test]
    fn odd_composition_examples() {
        assert_eq!(odd_compositions(8, None), vec![vec![3, 5], vec![5, 3]]);
        assert_eq!(odd_compositions(9, None), vec![vec![3, 3, 3], vec![9]]);
        assert!(odd_compositions(4, None).is_empty());
        assert_eq!(odd_compositions(9, Some(1)), vec![vec![9]]);
    }

    #[test]
    fn worked_examples() {
        for m in 1..8 {
            let c = r_closed_form(3, m).unwrap();
            assert_eq!(c.coefficient(&mon(&[3])), qi(6 * m as i64));
            assert_eq!(c.terms().len(), 1);
        }
        let nine = qi(factorial(9));
        let ten = qi(factorial(10));
        let eleven = qi(factorial(11));
        let twelve = qi(factorial(12));
        let c = r_closed_form(8, 4).unwrap();
        assert_eq!(c.coefficient(&mon(&[3, 5])), qi(645120));
        assert_eq!(c.render_text(), "645120·β3β5");
        let c = r_closed_form(9, 4).unwrap();
        assert_eq!(c.coefficient(&mon(&[9])), qi(55) * &nine);
        assert_eq!(c.coefficient(&mon(&[3, 3, 3])), nine);
        let c = r_closed_form(10, 5).unwrap();
        assert_eq!(c.coefficient(&mon(&[3, 7])), qi(70) * &ten);
        assert_eq!(c.coefficient(&mon(&[5, 5])), qi(35) * &ten);
        let c = r_closed_form(11, 5).unwrap();
        assert_eq!(c.coefficient(&mon(&[11])), qi(273) * &eleven);
        assert_eq!(c.coefficient(&mon(&[3, 3, 5])), q(29, 2) * &eleven);
        let c = r_closed_form(12, 6).unwrap();
        assert_eq!(c.coefficient(&mon(&[3, 9])), qi(333) * &twelve);
        assert_eq!(c.coefficient(&mon(&[5, 7])), qi(321) * &twelve);
        assert_eq!(c.coefficient(&mon(&[3, 3, 3, 3])), q(3, 2) * &twelve);
        assert!(r_closed_form(4, 3).unwrap().is_zero());
    }

    #[test]
    fn s_examples() {
        assert_eq!(s_closed_form(3, 2).unwrap().coefficient(&mon(&[3])), qi(-6));
        assert_eq!(
            s_closed_form(8, 2).unwrap().coefficient(&mon(&[3, 5])),
            qi(factorial(8))
        );
        for n in 2..12 {
            assert_eq!(s_closed_form(n, 1).unwrap(), r_closed_form(n, 1).unwrap());
        }
    }

    #[test]
    fn known_forms_spot_checks() {
        let c = known_closed_form(Variant::R, 7, 1).unwrap();
        assert_eq!(c.coefficient(&mon(&[7])), qi(factorial(7)));
        let c = known_closed_form(Variant::R, 9, 3).unwrap();
        assert_eq!(c.coefficient(&mon(&[9])), qi(binom(11, 3) * factorial(8)));
        assert_eq!(c.coefficient(&mon(&[3, 3, 3])), qi(factorial(9)) / qi(6));
        assert_eq!(
            known_closed_form(Variant::S, 8, 4).unwrap(),
            s_closed_form(8, 4).unwrap()
        );
        assert!(matches!(
            known_closed_form(Variant::R, 8, 7),
            Err(Error::UnsupportedM(7))
        ));
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_coeff(8, 1, 1).unwrap(), q(1, 7));
        assert_eq!(gamma_coeff(8, 1, 1).unwrap() + gamma_coeff(8, 1, 7).unwrap(), q(2, 7));
        assert_eq!(gamma_coeff(8, 1, 2).unwrap() + gamma_coeff(8, 1, 6).unwrap(), q(-1, 21));
        assert!(gamma_coeff(8, 1, 8).is_err());
    }

    #[test]
    fn lift_constants_for_eight() {
        let lift = lift_combo(8, 1).unwrap();
        assert_eq!(lift, known_lift_constant(8).unwrap());
        // −(1792/5)·B_{p−3}B_{p−5}, with B_{p−3}B_{p−5} = 15·β3β5
        assert_eq!(lift.coefficient(&mon(&[3, 5])), q(-1792, 5) * qi(15));
    }

    #[test]
    fn predictions_match_examples() {
        let t7 = bernoulli_table(7).unwrap();
        assert_eq!(predict_r(3, 2, 7, 1, &t7).unwrap().value(), 2);
        assert!(matches!(
            predict_r(6, 2, 7, 1, &t7),
            Err(Error::PreconditionViolated(_))
        ));
        let t11 = bernoulli_table(11).unwrap();
        let b5 = crate::bernoulli::beta(5, &t11).unwrap().value;
        assert_eq!(predict_r(5, 2, 11, 1, &t11).unwrap(), t11.modulus().residue(360) * b5);
        for p in [11u64, 13, 17] {
            let t = bernoulli_table(p).unwrap();
            assert!(predict_s(8, 1, p, 1, &t).unwrap().is_zero());
        }
    }

    #[test]
    fn interpolation_examples() {
        let polys = interp_coefficients(8, 8).unwrap();
        let p35 = polys.iter().find(|p| p.monomial == mon(&[3, 5])).unwrap();
        assert_eq!(p35.render(), "336·m^5 + 5040·m^3 - 5376·m");
        let polys = interp_coefficients(3, 3).unwrap();
        assert_eq!(polys[0].render(), "6·m");
    }

    #[test]
    fn rendering() {
        let c = r_closed_form(11, 5).unwrap();
        assert_eq!(c.render_text(), "578793600·β3^2β5 + 10897286400·β11");
        assert_eq!(
            c.render_latex(),
            "578793600\\beta_{3}^{2}\\beta_{5} + 10897286400\\beta_{11}"
        );
        let json = r_closed_form(8, 4).unwrap().to_json();
        assert_eq!(
            json,
            r#"{"weight":8,"terms":[{"monomial":[3,5],"num":"645120","den":"1"}]}"#
        );
        assert_eq!(RationalCombo::from_json(&json).unwrap(), r_closed_form(8, 4).unwrap());
        assert_eq!(RationalCombo::zero(4).render_text(), "0");
        let mut neg = RationalCombo::zero(3);
        neg.add_term(mon(&[3]), q(-1, 2)).unwrap();
        assert_eq!(neg.render_text(), "-1/2·β3");
        assert_eq!(neg.render_latex(), "-\\frac{1}{2}\\beta_{3}");
    }

    #[test]
    fn combo_rejects_wrong_weight() {
        let mut c = RationalCombo::zero(8);
        assert!(c.add_term(mon(&[3, 3]), qi(1)).is_err());
        c.add_term(mon(&[3, 5]), qi(2)).unwrap();
        c.add_term(mon(&[3, 5]), qi(-2)).unwrap();
        assert!(c.is_zero());
    }

    #[test]
    fn telescoping_collapse() {
        for m in 1..50 {
            assert_eq!(telescoped(m), qi(m));
        }
    }

    #[test]
    fn parity_and_weight_of_all_pipelines() {
        for n in 2..=14 {
            for m in 1..=6 {
                for c in [r_closed_form(n, m).unwrap(), s_closed_form(n, m).unwrap()] {
                    for mon in c.terms().keys() {
                        assert_eq!(mon.weight(), n);
                        assert_eq!(mon.depth() as u32 % 2, n % 2);
                    }
                }
            }
        }
    }

    #[test]
    fn depth_one_sign_flip_for_m_four() {
        // C(n) = C(n+3,4)/n and C'(n) = −C(n,4)/n
        for n in [9u32, 11, 13] {
            let report = conjecture_probe(n, 4).unwrap();
            let e = report
                .entries
                .iter()
                .find(|e| e.m == 4 && e.monomial == mon(&[n]))
                .unwrap();
            assert_eq!(e.outcome, ProbeOutcome::Pass);
            assert_eq!(e.s_coefficient, -qi(binom(n as u64, 4)) / qi(n));
        }
    }
}
