//! Direct evaluators for the auxiliary nested sums: multiple harmonic sums,
//! the window sums `U`, `Ξ`, `P`, the chain sums `T`, and the sums `V`, `M`,
//! `E`, `F` over gap data.
//!
//! These are oracles. Every evaluator follows its defining sum literally,
//! with dynamic programming only where a chain sum is summed position by
//! position. Windows are the open intervals `(αp, (α+κ)p)`; modular results
//! live in `Z/p^2` unless stated otherwise.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::budget::Budget;
use crate::directsums::binomial_saturating;
use crate::error::{Error, Result};
use crate::modarith::{inv_mod, PrimePowerModulus, Rational, Residue};

/// A tuple `(s_1, …, s_d)` of positive exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexVector(Vec<u32>);

impl IndexVector {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("index vector must have depth ≥ 1".into()));
        }
        if entries.contains(&0) {
            return Err(Error::InvalidArgument("index vector entries must be positive".into()));
        }
        Ok(IndexVector(entries))
    }

    /// `(1, …, 1)` of depth `d`.
    pub fn ones(d: usize) -> Result<Self> {
        IndexVector::new(vec![1; d])
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn weight(&self) -> u32 {
        self.0.iter().sum()
    }
}

/// The open window `(αp, (α+κ)p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowSpec {
    alpha: u64,
    kappa: u64,
    modulus: PrimePowerModulus,
}

impl WindowSpec {
    pub fn new(alpha: u64, kappa: u64, p: u64) -> Result<Self> {
        if kappa == 0 {
            return Err(Error::InvalidArgument("window width κ must be positive".into()));
        }
        let modulus = PrimePowerModulus::new(p, 2)?;
        if (alpha + kappa).checked_mul(p).is_none_or(|hi| hi >= u32::MAX as u64) {
            return Err(Error::InvalidArgument("window too large".into()));
        }
        Ok(WindowSpec { alpha, kappa, modulus })
    }

    pub fn alpha(&self) -> u64 {
        self.alpha
    }

    pub fn kappa(&self) -> u64 {
        self.kappa
    }

    pub fn p(&self) -> u64 {
        self.modulus.p()
    }

    /// The ring `Z/p^2` the window sums are reported in.
    pub fn modulus(&self) -> PrimePowerModulus {
        self.modulus
    }

    /// The integers in the window that are prime to `p`, ascending.
    pub fn units(&self) -> Vec<u64> {
        let p = self.p();
        (self.alpha * p + 1..(self.alpha + self.kappa) * p)
            .filter(|l| l % p != 0)
            .collect()
    }
}

fn inverses(values: &[u64], q: u64) -> Vec<u64> {
    values
        .iter()
        .map(|&v| inv_mod(v % q, q).expect("value is prime to p"))
        .collect()
}

fn pow_mod(mut base: u64, mut exp: u32, q: u64) -> u64 {
    let mut acc = 1 % q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % q;
        }
        base = base * base % q;
        exp >>= 1;
    }
    acc
}

fn rational_pow_inv(v: u64, e: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::from(v).pow(e))
}

/// `H_n(s) = Σ_{0<k_1<…<k_d<n} Π k_i^{−s_i}` as an exact rational.
///
/// With `restrict_to = Some(p)` only indices prime to `p` are used.
pub fn mhs(n: u64, s: &IndexVector, restrict_to: Option<u64>) -> Rational {
    let keep = |k: u64| restrict_to.is_none_or(|p| !k.is_multiple_of(p));
    let ks: Vec<u64> = (1..n).filter(|&k| keep(k)).collect();
    // level[i]: sum over chains of the exponents so far whose last index is ks[i]
    let mut level: Option<Vec<Rational>> = None;
    for &e in s.entries() {
        let mut next = Vec::with_capacity(ks.len());
        let mut below = Rational::zero();
        for (i, &k) in ks.iter().enumerate() {
            let prefix = if level.is_none() {
                Rational::one()
            } else {
                below.clone()
            };
            next.push(prefix * rational_pow_inv(k, e));
            if let Some(prev) = &level {
                below += &prev[i];
            }
        }
        level = Some(next);
    }
    let level = level.unwrap_or_default();
    level.into_iter().fold(Rational::zero(), |acc, x| acc + x)
}

/// `H_n(s)` reduced modulo `p^r`.
///
/// Without `restricted`, an index divisible by `p` is an error.
pub fn mhs_mod(n: u64, s: &IndexVector, modulus: PrimePowerModulus, restricted: bool) -> Result<Residue> {
    let p = modulus.p();
    let q = modulus.modulus();
    if !restricted && n > p {
        return Err(Error::NotAUnit {
            value: p.to_string(),
            modulus: q,
        });
    }
    let ks: Vec<u64> = (1..n).filter(|k| k % p != 0).collect();
    let inv = inverses(&ks, q);
    let exps = s.entries();
    let weights = vec![0u64; exps.len()];
    let (plain, _) = weighted_chain_sum(&inv, exps, &weights, q);
    Ok(modulus.residue_u64(plain))
}

/// Chain sums over strictly increasing picks from a sorted list.
///
/// With `inv[k]` the inverse of the `k`-th value, returns
/// `Σ Π_j u_j^{−e_j}` and `Σ Π_j u_j^{−e_j} · Σ_j w_j / u_j`, both mod `q`.
fn weighted_chain_sum(inv: &[u64], exps: &[u32], weights: &[u64], q: u64) -> (u64, u64) {
    let len = inv.len();
    let mut plain = vec![1 % q; len];
    let mut weighted = vec![0u64; len];
    for (j, (&e, &w)) in exps.iter().zip(weights).enumerate() {
        let mut next_plain = vec![0u64; len];
        let mut next_weighted = vec![0u64; len];
        let (mut run_plain, mut run_weighted) = (0u64, 0u64);
        for k in 0..len {
            let (below_plain, below_weighted) = if j == 0 { (1 % q, 0) } else { (run_plain, run_weighted) };
            let factor = pow_mod(inv[k], e, q);
            next_plain[k] = below_plain * factor % q;
            next_weighted[k] = (below_weighted + below_plain * (w % q) % q * inv[k]) % q * factor % q;
            run_plain = (run_plain + plain[k]) % q;
            run_weighted = (run_weighted + weighted[k]) % q;
        }
        plain = next_plain;
        weighted = next_weighted;
    }
    if exps.is_empty() {
        return (1 % q, 0);
    }
    (
        plain.iter().fold(0, |a, &x| (a + x) % q),
        weighted.iter().fold(0, |a, &x| (a + x) % q),
    )
}

/// `U_{α;κ}(s)`: ordered tuples of pairwise distinct window units, `Σ Π l_i^{−s_i}` mod `p^2`.
pub fn u_sum(w: &WindowSpec, s: &IndexVector, budget: &Budget) -> Result<Residue> {
    let units = w.units();
    let d = s.depth() as u32;
    Budget::check((units.len() as u128).saturating_pow(d), budget.nested)?;
    let q = w.modulus().modulus();
    let inv = inverses(&units, q);
    let table: Vec<Vec<u64>> = s
        .entries()
        .iter()
        .map(|&e| inv.iter().map(|&x| pow_mod(x, e, q)).collect())
        .collect();

    fn walk(pos: usize, prefix: u64, table: &[Vec<u64>], used: &mut [bool], q: u64, acc: &mut u64) {
        if pos == table.len() {
            *acc = (*acc + prefix) % q;
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                walk(pos + 1, prefix * table[pos][k] % q, table, used, q, acc);
                used[k] = false;
            }
        }
    }

    let mut acc = 0;
    let mut used = vec![false; units.len()];
    walk(0, 1 % q, &table, &mut used, q, &mut acc);
    Ok(w.modulus().residue_u64(acc))
}

fn check_chain_length(n: u32) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument("chain sums need n ≥ 2".into()));
    }
    Ok(())
}

/// `Ξ_{α;κ}(n)`: chains `u_1 < … < u_{n−1}` in the window with all entries and
/// all consecutive differences prime to `p`, `Σ 1/(u_1 ··· u_{n−1})` mod `p^2`.
pub fn xi_sum(w: &WindowSpec, n: u32, budget: &Budget) -> Result<Residue> {
    check_chain_length(n)?;
    let units = w.units();
    let len = units.len();
    Budget::check(n as u128 * (len as u128).pow(2), budget.nested)?;
    let p = w.p();
    let q = w.modulus().modulus();
    let inv = inverses(&units, q);
    let mut dp = inv.clone();
    for _ in 1..n - 1 {
        let mut next = vec![0u64; len];
        for v in 0..len {
            let mut below = 0u64;
            for u in 0..v {
                if !(units[v] - units[u]).is_multiple_of(p) {
                    below = (below + dp[u]) % q;
                }
            }
            next[v] = below * inv[v] % q;
        }
        dp = next;
    }
    Ok(w.modulus().residue_u64(dp.iter().fold(0, |a, &x| (a + x) % q)))
}

/// `P^g_{α;κ}(n)`: sum over gap positions `1 < b_1 < … < b_g < n` and chains
/// `u_1 < … < u_{n−1}` of window units with `p | u_{b_i} − u_{b_i − 1}`, mod `p^2`.
pub fn pgap_sum(w: &WindowSpec, g: u32, n: u32, budget: &Budget) -> Result<Residue> {
    check_chain_length(n)?;
    check_gap_count(w.kappa(), g, n)?;
    let units = w.units();
    let len = units.len();
    Budget::check((g as u128 + 1) * n as u128 * (len as u128).pow(2), budget.nested)?;
    let p = w.p();
    let q = w.modulus().modulus();
    let inv = inverses(&units, q);
    let g = g as usize;
    // dp[c][v]: chains ending at units[v] with c gap positions chosen so far
    let mut dp = vec![vec![0u64; len]; g + 1];
    dp[0].clone_from(&inv);
    for _ in 1..n - 1 {
        let mut next = vec![vec![0u64; len]; g + 1];
        for v in 0..len {
            for u in 0..v {
                let gap = (units[v] - units[u]).is_multiple_of(p);
                for c in 0..=g {
                    let x = dp[c][u];
                    if x == 0 {
                        continue;
                    }
                    let add = x * inv[v] % q;
                    next[c][v] = (next[c][v] + add) % q;
                    if gap && c < g {
                        next[c + 1][v] = (next[c + 1][v] + add) % q;
                    }
                }
            }
        }
        dp = next;
    }
    Ok(w.modulus().residue_u64(dp[g].iter().fold(0, |a, &x| (a + x) % q)))
}

fn check_gap_count(kappa: u64, g: u32, n: u32) -> Result<()> {
    let max = (kappa.saturating_sub(1)).min(n.saturating_sub(2) as u64) as u32;
    if g < 1 || g > max {
        return Err(Error::InvalidGapCount { g, max });
    }
    Ok(())
}

/// `T_{n,ℓ}^{(m)}(p)` exactly: chains `0 < u_1 < … < u_{n−1} < mp` with all
/// consecutive differences prime to `p`, exactly `ℓ−1` entries at multiples
/// `k p` (`0 < k < m`) in positions `2..=n−2`, all other entries prime to `p`.
pub fn t_sum(n: u32, ell: u32, m: u64, p: u64, budget: &Budget) -> Result<Rational> {
    check_chain_length(n)?;
    if ell < 1 || ell > n / 2 {
        return Err(Error::PreconditionViolated(format!("ℓ = {ell} outside 1..={}", n / 2)));
    }
    if m == 0 || m.is_multiple_of(p) {
        return Err(Error::PreconditionViolated(format!("need p ∤ m, got m = {m}")));
    }
    let top = m * p;
    Budget::check(binomial_saturating(top - 1, n as u64 - 1), budget.enumeration)?;

    struct Ctx {
        len: usize,
        top: u64,
        p: u64,
        pinned: usize,
    }

    fn walk(pos: usize, prev: u64, pinned: usize, prefix: &BigInt, ctx: &Ctx, acc: &mut Rational) {
        if pos == ctx.len {
            if pinned == ctx.pinned {
                *acc += Rational::new(BigInt::one(), prefix.clone());
            }
            return;
        }
        let slots_after = (ctx.len - pos - 1) as u64;
        for u in prev + 1..ctx.top - slots_after {
            if (u - prev).is_multiple_of(ctx.p) && pos > 0 {
                continue;
            }
            let multiple = u % ctx.p == 0;
            if multiple && (pos == 0 || pos == ctx.len - 1 || pinned == ctx.pinned) {
                continue;
            }
            walk(
                pos + 1,
                u,
                pinned + multiple as usize,
                &(prefix * BigInt::from(u)),
                ctx,
                acc,
            );
        }
    }

    let ctx = Ctx {
        len: n as usize - 1,
        top,
        p,
        pinned: ell as usize - 1,
    };
    let mut acc = Rational::zero();
    walk(0, 0, 0, &BigInt::one(), &ctx, &mut acc);
    Ok(acc)
}

/// Strictly increasing tuples `lo ≤ t_1 < … < t_len ≤ hi`, lexicographic.
pub(crate) fn increasing_tuples(lo: u64, hi: u64, len: usize) -> Vec<Vec<u64>> {
    fn rec(start: u64, hi: u64, len: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        let remaining = (len - cur.len()) as u64;
        if hi + 1 < start + remaining {
            return;
        }
        for t in start..=hi + 1 - remaining {
            cur.push(t);
            rec(t + 1, hi, len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(lo, hi, len, &mut Vec::with_capacity(len), &mut out);
    out
}

/// Nondecreasing tuples `lo ≤ t_1 ≤ … ≤ t_len ≤ hi`, lexicographic.
pub(crate) fn nondecreasing_tuples(lo: u64, hi: u64, len: usize) -> Vec<Vec<u64>> {
    fn rec(start: u64, hi: u64, len: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for t in start..=hi {
            cur.push(t);
            rec(t, hi, len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if lo <= hi || len == 0 {
        rec(lo, hi, len, &mut Vec::with_capacity(len), &mut out);
    }
    out
}

/// Compositions of `w` into exactly `d` positive parts, lexicographic.
pub(crate) fn compositions_exact(w: u32, d: usize) -> Vec<Vec<u32>> {
    fn rec(rest: u32, d: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() + 1 == d {
            if rest >= 1 {
                cur.push(rest);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        let slots = (d - cur.len() - 1) as u32;
        for part in 1..=rest.saturating_sub(slots) {
            cur.push(part);
            rec(rest - part, d, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        if w == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(w, d, &mut Vec::with_capacity(d), &mut out);
    out
}

/// The exponent vector of a gap multiset: `s_j = 1 + #{i : b_i = j}` for `j = 1..=d`.
pub(crate) fn rho(b: &[u64], d: usize) -> Vec<u32> {
    let mut s = vec![1u32; d];
    for &j in b {
        s[j as usize - 1] += 1;
    }
    s
}

/// Which of the four gap-data sums to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GapSum {
    V,
    M,
    E,
    F,
}

/// Common loop of `V`, `M`, `E`, `F`: over `0 < a_1 < … < a_g < κ`,
/// `1 ≤ b_1 ≤ … ≤ b_g ≤ d` and chains `0 < u_1 < … < u_d < (κ − a_g)p` of units,
/// the summand `1/(u_1 ··· u_d · u_{b_1} ··· u_{b_g})` times a bracket.
fn gap_data_sum(kind: GapSum, kappa: u64, g: u32, n: u32, p: u64, budget: &Budget) -> Result<Residue> {
    check_gap_count(kappa, g, n)?;
    let d = (n - g - 1) as usize;
    let sq = PrimePowerModulus::new(p, 2)?;
    let q = sq.modulus();
    let a_chains = increasing_tuples(1, kappa - 1, g as usize);
    let b_multisets = nondecreasing_tuples(1, d as u64, g as usize);
    Budget::check(
        a_chains.len() as u128 * b_multisets.len() as u128 * d as u128 * (kappa * p) as u128,
        budget.nested,
    )?;
    let mut total = 0u64;
    for a in &a_chains {
        let window = WindowSpec::new(0, kappa - a[g as usize - 1], p)?;
        let inv = inverses(&window.units(), q);
        for b in &b_multisets {
            let exps = rho(b, d);
            let weights: Vec<u64> = match kind {
                GapSum::V => vec![0; d],
                GapSum::E => vec![1; d],
                GapSum::F => exps.iter().map(|&s| s as u64 - 1).collect(),
                GapSum::M => (1..=d as u64)
                    .map(|j| {
                        (0..g as usize)
                            .filter(|&i| {
                                let upper = if i + 1 < g as usize { b[i + 1] } else { d as u64 };
                                b[i] <= j && j <= upper
                            })
                            .map(|i| a[i])
                            .sum()
                    })
                    .collect(),
            };
            let (plain, weighted) = weighted_chain_sum(&inv, &exps, &weights, q);
            total = (total + if kind == GapSum::V { plain } else { weighted }) % q;
        }
    }
    let value = sq.residue_u64(total);
    Ok(match kind {
        GapSum::V => value,
        _ => PrimePowerModulus::prime(p)?.residue_u64(value.value()),
    })
}

/// `V^g_κ(n)` mod `p^2`.
pub fn v_sum(kappa: u64, g: u32, n: u32, p: u64, budget: &Budget) -> Result<Residue> {
    gap_data_sum(GapSum::V, kappa, g, n, p, budget)
}

/// `M^g_κ(n)` mod `p`: the bracket is `Σ_i a_i Σ_{j=b_i}^{b_{i+1}} 1/u_j` with `b_{g+1} = d`.
pub fn m_sum(kappa: u64, g: u32, n: u32, p: u64, budget: &Budget) -> Result<Residue> {
    gap_data_sum(GapSum::M, kappa, g, n, p, budget)
}

/// `E^g_κ(n)` mod `p`: the bracket is `Σ_j 1/u_j`.
pub fn e_sum(kappa: u64, g: u32, n: u32, p: u64, budget: &Budget) -> Result<Residue> {
    gap_data_sum(GapSum::E, kappa, g, n, p, budget)
}

/// `F^g_κ(n)` mod `p`: the bracket is `Σ_i 1/u_{b_i}`.
pub fn f_sum(kappa: u64, g: u32, n: u32, p: u64, budget: &Budget) -> Result<Residue> {
    gap_data_sum(GapSum::F, kappa, g, n, p, budget)
}

/// Both sides of `Σ_{0<a_1<…<a_g<κ} a_i = i · Σ_{a=1}^{κ−1} C(a, g)`.
pub fn chain_sum_identity(kappa: u64, g: u32, i: u32) -> Result<(BigInt, BigInt)> {
    if !(1 <= i && i <= g && (g as u64) < kappa) {
        return Err(Error::PreconditionViolated(format!(
            "need 1 ≤ i ≤ g < κ, got i = {i}, g = {g}, κ = {kappa}"
        )));
    }
    let lhs: BigInt = increasing_tuples(1, kappa - 1, g as usize)
        .iter()
        .map(|a| BigInt::from(a[i as usize - 1]))
        .sum();
    let rhs: BigInt = (1..kappa)
        .map(|a| BigInt::from(binomial_saturating(a, g as u64)))
        .sum::<BigInt>()
        * BigInt::from(i);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modarith::{rational, reduce_rational};

    fn win(alpha: u64, kappa: u64, p: u64) -> WindowSpec {
        WindowSpec::new(alpha, kappa, p).unwrap()
    }

    fn iv(v: &[u32]) -> IndexVector {
        IndexVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(mhs(3, &iv(&[1]), None), rational(3, 2));
        assert_eq!(mhs(4, &iv(&[1, 1]), None), rational(1, 1));
        assert_eq!(mhs(5, &iv(&[2, 1]), None), {
            // pairs (k1 < k2) from 1..4
            let mut t = Rational::zero();
            for k1 in 1..5i64 {
                for k2 in k1 + 1..5 {
                    t += rational(1, k1 * k1 * k2);
                }
            }
            t
        });
        let m49 = PrimePowerModulus::new(7, 2).unwrap();
        assert_eq!(mhs_mod(7, &iv(&[1, 1]), m49, false).unwrap().value(), 42);
        assert!(mhs_mod(8, &iv(&[1]), m49, false).is_err());
        let restricted = mhs(15, &iv(&[1, 2]), Some(7));
        assert_eq!(
            mhs_mod(15, &iv(&[1, 2]), m49, true).unwrap(),
            reduce_rational(&restricted, m49).unwrap()
        );
    }

    #[test]
    fn window_examples() {
        let b = Budget::default();
        assert_eq!(u_sum(&win(0, 1, 7), &iv(&[2]), &b).unwrap().value(), 14);
        assert_eq!(u_sum(&win(1, 1, 7), &iv(&[2]), &b).unwrap().value(), 14);
        assert_eq!(u_sum(&win(0, 1, 11), &iv(&[1]), &b).unwrap().value(), 0);
        assert_eq!(xi_sum(&win(0, 1, 7), 3, &b).unwrap().value(), 42);
        assert_eq!(xi_sum(&win(0, 1, 7), 4, &b).unwrap().value(), 0);
        assert_eq!(
            xi_sum(&win(2, 2, 11), 3, &b).unwrap(),
            xi_sum(&win(0, 2, 11), 3, &b).unwrap()
        );
        assert_eq!(xi_sum(&win(0, 2, 11), 3, &b).unwrap().value(), 22);
        assert_eq!(pgap_sum(&win(0, 2, 7), 1, 3, &b).unwrap().value(), 14);
        assert_eq!(pgap_sum(&win(0, 2, 11), 1, 4, &b).unwrap().value(), 0);
        assert_eq!(
            pgap_sum(&win(1, 3, 11), 2, 4, &b).unwrap(),
            pgap_sum(&win(0, 3, 11), 2, 4, &b).unwrap()
        );
    }

    #[test]
    fn gap_counts_are_validated() {
        let b = Budget::default();
        assert!(matches!(
            pgap_sum(&win(0, 1, 7), 1, 4, &b),
            Err(Error::InvalidGapCount { g: 1, max: 0 })
        ));
        assert!(matches!(
            v_sum(3, 2, 3, 7, &b),
            Err(Error::InvalidGapCount { g: 2, max: 1 })
        ));
    }

    fn brute_pgap(w: &WindowSpec, g: usize, n: usize) -> u64 {
        let p = w.p();
        let q = p * p;
        let units = w.units();
        let mut total = 0;
        for idx in increasing_tuples(0, units.len() as u64 - 1, n - 1) {
            let chain: Vec<u64> = idx.iter().map(|&i| units[i as usize]).collect();
            let gaps = (1..chain.len())
                .filter(|&i| (chain[i] - chain[i - 1]).is_multiple_of(p))
                .count();
            let choices = binomial_saturating(gaps as u64, g as u64) as u64;
            let prod = chain.iter().fold(1u64, |a, &u| a * inv_mod(u % q, q).unwrap() % q);
            total = (total + choices % q * prod) % q;
        }
        total
    }

    #[test]
    fn pgap_matches_chain_enumeration() {
        let b = Budget::default();
        for (alpha, kappa, g, n, p) in [(0, 2, 1, 3, 7), (1, 3, 2, 4, 5), (0, 3, 1, 5, 5), (2, 2, 1, 4, 7)] {
            let w = win(alpha, kappa, p);
            assert_eq!(
                pgap_sum(&w, g, n, &b).unwrap().value(),
                brute_pgap(&w, g as usize, n as usize)
            );
        }
    }

    #[test]
    fn t_sums_rebuild_r() {
        let b = Budget::default();
        let t = t_sum(3, 1, 1, 5, &b).unwrap();
        assert_eq!(t * rational(6, 5), rational(7, 4));
        for (n, m, p) in [(2u32, 1u64, 5u64), (4, 2, 5), (5, 2, 5), (4, 1, 7), (5, 2, 7)] {
            let mut total = Rational::zero();
            for ell in 1..=n / 2 {
                total += t_sum(n, ell, m, p, &b).unwrap();
            }
            let factorial: i64 = (1..=n as i64).product();
            total *= rational(factorial, (m * p) as i64);
            let r = crate::directsums::eval_brute_exact(
                &crate::directsums::SumSpec::new(
                    n,
                    m,
                    PrimePowerModulus::prime(p).unwrap(),
                    crate::directsums::Variant::R,
                )
                .unwrap(),
                &b,
            )
            .unwrap();
            assert_eq!(total, r, "n={n} m={m} p={p}");
        }
    }

    #[test]
    fn chain_identity_examples() {
        let pair = |k, g, i| {
            let (a, b) = chain_sum_identity(k, g, i).unwrap();
            (a.to_string(), b.to_string())
        };
        assert_eq!(pair(4, 2, 1), ("4".into(), "4".into()));
        assert_eq!(pair(4, 2, 2), ("8".into(), "8".into()));
        assert_eq!(pair(5, 1, 1), ("10".into(), "10".into()));
        let (a, b) = chain_sum_identity(6, 3, 2).unwrap();
        assert_eq!(a, b);
        assert!(chain_sum_identity(3, 3, 1).is_err());
    }

    #[test]
    fn dw_and_rho() {
        assert_eq!(compositions_exact(4, 2), vec![vec![1, 3], vec![2, 2], vec![3, 1]]);
        assert_eq!(compositions_exact(2, 3), Vec::<Vec<u32>>::new());
        for d in 1..=4usize {
            for g in 0..=4usize {
                let mut images: Vec<Vec<u32>> =
                    nondecreasing_tuples(1, d as u64, g).iter().map(|b| rho(b, d)).collect();
                images.sort();
                let mut dw = compositions_exact((d + g) as u32, d);
                dw.sort();
                assert_eq!(images, dw, "d={d} g={g}");
            }
        }
    }

    /// Σ_{s ∈ DW(d, w)} H_{ap}(s) = Σ_{s ∈ DW(d, w)} U_{0;a}(s) / d!.
    #[test]
    fn orbit_stabilizer() {
        let b = Budget::default();
        for p in [5u64, 7, 11, 13] {
            let sq = PrimePowerModulus::new(p, 2).unwrap();
            for d in 1..=3usize {
                for w in d as u32..=5 {
                    for a in 1..=2u64 {
                        let mut chains = sq.zero();
                        let mut unordered = sq.zero();
                        for s in compositions_exact(w, d) {
                            let s = IndexVector::new(s).unwrap();
                            chains = chains + mhs_mod(a * p, &s, sq, true).unwrap();
                            unordered = unordered + u_sum(&win(0, a, p), &s, &b).unwrap();
                        }
                        let d_fact: i64 = (1..=d as i64).product();
                        let rhs = unordered * crate::modarith::mod_inverse(d_fact, sq).unwrap();
                        assert_eq!(chains, rhs, "p={p} d={d} w={w} a={a}");
                    }
                }
            }
        }
    }

    #[test]
    fn v_sum_matches_dw_form() {
        let b = Budget::default();
        for (kappa, g, n, p) in [(2u64, 1u32, 3u32, 7u64), (3, 2, 5, 7), (3, 1, 4, 11)] {
            let sq = PrimePowerModulus::new(p, 2).unwrap();
            let d = (n - g - 1) as usize;
            let mut expected = sq.zero();
            for a in increasing_tuples(1, kappa - 1, g as usize) {
                for s in compositions_exact(n - 1, d) {
                    let s = IndexVector::new(s).unwrap();
                    expected = expected + mhs_mod((kappa - a[g as usize - 1]) * p, &s, sq, true).unwrap();
                }
            }
            assert_eq!(v_sum(kappa, g, n, p, &b).unwrap(), expected);
        }
    }

    #[test]
    fn gap_sum_spot_values() {
        let b = Budget::default();
        assert_eq!(v_sum(2, 1, 3, 7, &b).unwrap().value(), 14);
        assert!(m_sum(2, 1, 3, 11, &b).unwrap().is_zero());
        assert!(e_sum(2, 1, 4, 11, &b).unwrap().is_zero());
        assert!(f_sum(2, 1, 4, 11, &b).unwrap().is_zero());
    }

    #[test]
    fn p_gap_splits_into_v_and_m() {
        let b = Budget::default();
        for (kappa, g, n, p) in [(2u64, 1u32, 3u32, 7u64), (3, 2, 4, 11), (3, 1, 5, 11), (4, 2, 5, 13)] {
            let sq = PrimePowerModulus::new(p, 2).unwrap();
            let pg = pgap_sum(&win(0, kappa, p), g, n, &b).unwrap();
            let v = v_sum(kappa, g, n, p, &b).unwrap();
            let m = m_sum(kappa, g, n, p, &b).unwrap();
            assert_eq!(pg, v - sq.residue_u64(p * m.value()), "κ={kappa} g={g} n={n} p={p}");
            for alpha in 1..=2u64 {
                let shifted = pgap_sum(&win(alpha, kappa, p), g, n, &b).unwrap();
                let ef = e_sum(kappa, g, n, p, &b).unwrap() + f_sum(kappa, g, n, p, &b).unwrap();
                assert_eq!(pg - shifted, sq.residue_u64(alpha * p * ef.value()));
            }
        }
    }
}
