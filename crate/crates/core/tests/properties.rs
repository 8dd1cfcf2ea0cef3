use num_bigint::BigInt;
use num_traits::{One, Zero};
use proptest::prelude::*;

use supercong_core::bernoulli::{bernoulli_table, beta};
use supercong_core::closedforms::{closed_form, r_closed_form, telescoped, RationalCombo};
use supercong_core::directsums::{eval_brute, eval_conv, SumSpec, Variant};
use supercong_core::modarith::{is_prime, mod_inverse, primes_in_range, rational, reduce_rational};
use supercong_core::nestedsums::{chain_sum_identity, pgap_sum, u_sum, xi_sum, IndexVector, WindowSpec};
use supercong_core::verifier::{verify_main, MainConfig, SweepReport, VerifyOptions};
use supercong_core::{Budget, PrimePowerModulus, Rational};

const PRIMES: [u64; 8] = [5, 7, 11, 13, 17, 19, 23, 29];

/// Exact Bernoulli numbers (`B_1 = −1/2`) from the Akiyama–Tanigawa transform.
fn exact_bernoulli(count: usize) -> Vec<Rational> {
    let mut row: Vec<Rational> = Vec::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    for m in 0..count {
        row.push(Rational::new(BigInt::one(), BigInt::from(m + 1)));
        for j in (1..=m).rev() {
            row[j - 1] = Rational::from_integer(BigInt::from(j)) * (&row[j - 1] - &row[j]);
        }
        out.push(row[0].clone());
    }
    // The transform yields B_1 = +1/2.
    if count > 1 {
        out[1] = -out[1].clone();
    }
    out
}

#[test]
fn bernoulli_tables_match_exact_values() {
    let exact = exact_bernoulli(98);
    assert_eq!(exact[2], rational(1, 6));
    assert_eq!(exact[4], rational(-1, 30));
    assert_eq!(exact[12], rational(-691, 2730));
    for p in primes_in_range(5, 101) {
        let table = bernoulli_table(p).unwrap();
        assert_eq!(table.values().len() as u64, p - 2);
        for (k, b) in exact.iter().enumerate().take((p - 2) as usize) {
            let expected = reduce_rational(b, table.modulus()).unwrap();
            assert_eq!(table.get(k).unwrap(), expected, "B_{k} mod {p}");
        }
    }
}

#[test]
fn closed_forms_have_weight_and_parity() {
    for variant in [Variant::R, Variant::S] {
        for n in 2..=14 {
            for m in 1..=6 {
                let combo = closed_form(variant, n, m).unwrap();
                assert_eq!(combo.weight(), n);
                for (mon, coeff) in combo.terms() {
                    assert_eq!(mon.weight(), n);
                    assert_eq!(mon.depth() % 2, n as usize % 2);
                    assert!(!coeff.is_zero());
                }
            }
        }
    }
}

fn prime_power() -> impl Strategy<Value = PrimePowerModulus> {
    (prop::sample::select(PRIMES.to_vec()), 1u32..=3).prop_map(|(p, r)| PrimePowerModulus::new(p, r).unwrap())
}

proptest! {
    #[test]
    fn inverse_is_an_involution(modulus in prime_power(), a in 1i64..1_000_000) {
        prop_assume!(!(a as u64).is_multiple_of(modulus.p()));
        let inv = mod_inverse(a, modulus).unwrap();
        prop_assert_eq!(inv.inverse().unwrap(), modulus.residue(a));
        prop_assert_eq!((inv * modulus.residue(a)).value(), 1);
    }

    #[test]
    fn rational_reduction_is_additive(
        modulus in prime_power(),
        (a, b) in (-10_000i64..10_000, 1i64..1000),
        (c, d) in (-10_000i64..10_000, 1i64..1000),
    ) {
        let (x, y) = (rational(a, b), rational(c, d));
        let p = modulus.p() as i64;
        prop_assume!(b % p != 0 && d % p != 0);
        let sum = reduce_rational(&(&x + &y), modulus).unwrap();
        prop_assert_eq!(sum, reduce_rational(&x, modulus).unwrap() + reduce_rational(&y, modulus).unwrap());
    }

    #[test]
    fn sieve_matches_trial_division(lo in 0u64..10_000, len in 0u64..2_000) {
        let hi = (lo + len).min(10_000);
        let expected: Vec<u64> = (lo..hi)
            .filter(|&n| n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0))
            .collect();
        prop_assert_eq!(primes_in_range(lo, hi), expected.clone());
        prop_assert!(expected.iter().all(|&q| is_prime(q)));
    }

    #[test]
    fn beta_rejects_even_indices(p in prop::sample::select(PRIMES.to_vec()), k in 1u32..20) {
        let table = bernoulli_table(p).unwrap();
        let value = beta(2 * k, &table);
        prop_assert!(value.is_err());
        if let Ok(b) = beta(2 * k + 1, &table) {
            prop_assert!(b.value.is_zero() || b.value.inverse().is_ok());
        }
    }

    #[test]
    fn single_multiplier_collapses_variants(n in 1u32..=8, modulus in prime_power()) {
        prop_assume!(modulus.modulus() <= 2_000);
        let b = Budget::default();
        let r = eval_conv(&SumSpec::new(n, 1, modulus, Variant::R).unwrap(), &b).unwrap();
        let s = eval_conv(&SumSpec::new(n, 1, modulus, Variant::S).unwrap(), &b).unwrap();
        prop_assert_eq!(r, s);
    }

    #[test]
    fn convolution_matches_enumeration(
        n in 1u32..=3,
        m in 1u64..=3,
        p in prop::sample::select(vec![5u64, 7, 11]),
        r in 1u32..=2,
        variant in prop::sample::select(vec![Variant::R, Variant::S]),
    ) {
        prop_assume!(m % p != 0);
        let spec = SumSpec::new(n, m, PrimePowerModulus::new(p, r).unwrap(), variant).unwrap();
        let b = Budget::default();
        prop_assert_eq!(eval_conv(&spec, &b).unwrap(), eval_brute(&spec, &b).unwrap());
    }

    #[test]
    fn telescoping_identity(m in 1u64..500) {
        prop_assert_eq!(telescoped(m), Rational::from_integer(BigInt::from(m)));
    }

    #[test]
    fn combo_json_round_trips(n in 2u32..=14, m in 1u64..=8) {
        let combo = r_closed_form(n, m).unwrap();
        let text = combo.to_json();
        let back = RationalCombo::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json(), text);
        prop_assert_eq!(back, combo);
    }

    #[test]
    fn window_sums_do_not_depend_on_alpha(
        p in prop::sample::select(vec![7u64, 11, 13]),
        kappa in 1u64..=3,
        alpha in 1u64..=2,
        n in 3u32..=5,
        s in prop::collection::vec(1u32..=2, 1..=2),
    ) {
        let b = Budget::default();
        let base = WindowSpec::new(0, kappa, p).unwrap();
        let shifted = WindowSpec::new(alpha, kappa, p).unwrap();
        let s = IndexVector::new(s).unwrap();
        prop_assert_eq!(u_sum(&base, &s, &b).unwrap(), u_sum(&shifted, &s, &b).unwrap());
        prop_assume!(p >= n as u64 + 2);
        prop_assert_eq!(xi_sum(&base, n, &b).unwrap(), xi_sum(&shifted, n, &b).unwrap());
        for g in 1..=(kappa.saturating_sub(1)).min(n as u64 - 2) as u32 {
            prop_assert_eq!(pgap_sum(&base, g, n, &b).unwrap(), pgap_sum(&shifted, g, n, &b).unwrap());
        }
    }

    #[test]
    fn chain_sums_agree(kappa in 2u64..=12, g_seed in 0u32..100, i_seed in 0u32..100) {
        let g = 1 + g_seed % (kappa as u32 - 1);
        let i = 1 + i_seed % g;
        let (left, right) = chain_sum_identity(kappa, g, i).unwrap();
        prop_assert_eq!(left, right);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reports_round_trip_and_ignore_threads(
        n_max in 2u32..=6,
        m_max in 1u64..=3,
        p_max in 6u64..40,
        threads in 1usize..=6,
    ) {
        let config = MainConfig::new(n_max, m_max, 5, p_max, 1);
        let serial = verify_main(&config, &VerifyOptions { threads: Some(1), ..VerifyOptions::default() }).unwrap();
        let parallel = verify_main(&config, &VerifyOptions { threads: Some(threads), ..VerifyOptions::default() }).unwrap();
        let text = serial.to_json();
        prop_assert_eq!(&parallel.to_json(), &text);
        prop_assert_eq!(SweepReport::from_json(&text).unwrap().to_json(), text);
        prop_assert_eq!(serial.summary.total(), serial.records.len());
        prop_assert_eq!(serial.summary.fail, 0);
    }
}
