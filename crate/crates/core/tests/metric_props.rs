//! Metric functions against independent brute-force oracles.

use std::collections::HashSet;

use milrw_core::analytics::{mww_test, rouge_l_recall, unique_ngrams};
use proptest::prelude::*;

fn lcs_oracle(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    t[a.len()][b.len()]
}

fn tokens(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "sky", "blue"]), 0..=max)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

/// Midranks computed by counting, no sorting.
fn ranks_oracle(all: &[f64]) -> Vec<f64> {
    all.iter()
        .map(|&x| {
            let below = all.iter().filter(|&&y| y < x).count() as f64;
            let equal = all.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Two-sided permutation p: share of group labelings whose rank sum is at
/// least as far from its mean as the observed one.
fn exact_oracle(a: &[f64], b: &[f64]) -> f64 {
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = ranks_oracle(&all);
    let (n, na) = (all.len(), a.len());
    let mean = na as f64 * (n as f64 + 1.0) / 2.0;
    let observed = (ranks[..na].iter().sum::<f64>() - mean).abs();
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        total += 1;
        let sum: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if (sum - mean).abs() >= observed - 1e-9 {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

fn u_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            u += if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
        }
    }
    u
}

fn int_sample(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0..8i32, 1..=max_len).prop_map(|v| v.into_iter().map(f64::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rouge_matches_dp(s in tokens(20), c in tokens(20)) {
        prop_assume!(!s.is_empty());
        let expected = lcs_oracle(&s, &c) as f64 / s.len() as f64;
        prop_assert_eq!(rouge_l_recall(&s, &c).unwrap(), expected);
    }

    #[test]
    fn ngrams_match_enumeration(words in tokens(12), n in 1..5usize) {
        let text = words.join(" ");
        let expected = if words.len() < n { 0 } else {
            (0..=words.len() - n).map(|i| words[i..i + n].join(" ")).collect::<HashSet<_>>().len()
        };
        prop_assert_eq!(unique_ngrams(&text, n), expected);
    }

    #[test]
    fn exact_p_matches_enumeration(a in int_sample(7), b in int_sample(7)) {
        let r = mww_test(&a, &b).unwrap();
        prop_assert_eq!(r.u, u_oracle(&a, &b));
        if !r.degenerate {
            let p = r.p_exact.expect("small samples get an exact p");
            prop_assert!((p - exact_oracle(&a, &b)).abs() < 1e-12, "{} vs {}", p, exact_oracle(&a, &b));
        }
    }

    #[test]
    fn u_invariant_under_affine_maps(a in int_sample(9), b in int_sample(9), scale in 0.1..50.0f64, shift in -100.0..100.0f64) {
        let f = |v: &[f64]| v.iter().map(|x| x * scale + shift).collect::<Vec<_>>();
        let (r0, r1) = (mww_test(&a, &b).unwrap(), mww_test(&f(&a), &f(&b)).unwrap());
        prop_assert_eq!(r0.u, r1.u);
        prop_assert!((r0.p_two_sided - r1.p_two_sided).abs() < 1e-12);
    }

    #[test]
    fn normal_close_to_exact_without_ties(
        (a, b) in (3..=7usize, 3..=7usize).prop_flat_map(|(na, nb)| {
            Just((0..(na + nb) as u32).collect::<Vec<_>>()).prop_shuffle().prop_map(move |v| {
                let v: Vec<f64> = v.into_iter().map(f64::from).collect();
                (v[..na].to_vec(), v[na..].to_vec())
            })
        })
    ) {
        let r = mww_test(&a, &b).unwrap();
        prop_assert!((r.p_normal - r.p_exact.unwrap()).abs() <= 0.05);
    }
}

#[test]
fn separated_samples_worked_example() {
    let r = mww_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert_eq!(r.u, 0.0);
    assert!((r.p_exact.unwrap() - 0.1).abs() < 1e-15);
    assert!((exact_oracle(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]) - 0.1).abs() < 1e-15);
}
