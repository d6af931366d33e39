//! Mann-Whitney-Wilcoxon rank-sum test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::AnalyticsError;

/// Exact p-values are computed when `n_a * n_b` is at most this.
pub const EXACT_MAX_PRODUCT: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwwResult {
    pub n_a: usize,
    pub n_b: usize,
    /// U statistic of sample `a`: pairs (x in a, y in b) with x > y, ties count half.
    pub u: f64,
    pub z: f64,
    /// Normal approximation with tie-corrected variance and continuity correction.
    pub p_normal: f64,
    /// Exact permutation p-value, when the samples are small enough.
    pub p_exact: Option<f64>,
    /// The reported p-value: exact when available, normal otherwise.
    pub p_two_sided: f64,
    /// Every value in both samples is the same; p is 1.
    pub degenerate: bool,
}

impl MwwResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_two_sided < alpha
    }
}

/// Midranks of `values` (1-based), ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn mww_test(a: &[f64], b: &[f64]) -> Result<MwwResult, AnalyticsError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalyticsError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFiniteValue);
    }
    let (n_a, n_b) = (a.len(), b.len());
    let n = n_a + n_b;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..n_a].iter().sum();
    let u = rank_sum_a - (n_a * (n_a + 1)) as f64 / 2.0;

    let degenerate = pooled.iter().all(|v| *v == pooled[0]);
    if degenerate {
        return Ok(MwwResult { n_a, n_b, u, z: 0.0, p_normal: 1.0, p_exact: Some(1.0), p_two_sided: 1.0, degenerate });
    }

    let (na, nb, nf) = (n_a as f64, n_b as f64, n as f64);
    let tie_term: f64 = tie_sizes(&pooled).iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = na * nb / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let mean = na * nb / 2.0;
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    let p_normal = (2.0 * normal.sf(z)).min(1.0);

    let p_exact = (n_a * n_b <= EXACT_MAX_PRODUCT).then(|| exact_p(&ranks, n_a));
    Ok(MwwResult {
        n_a,
        n_b,
        u,
        z,
        p_normal,
        p_exact,
        p_two_sided: p_exact.unwrap_or(p_normal),
        degenerate,
    })
}

fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let j = v[i..].iter().take_while(|x| **x == v[i]).count();
        sizes.push(j);
        i += j;
    }
    sizes
}

/// Two-sided exact p-value: the share of all ways to pick `n_a` of the pooled
/// ranks whose rank sum lies at least as far from its mean as the observed one.
/// Works on doubled ranks so midranks stay integral.
fn exact_p(ranks: &[f64], n_a: usize) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let n = doubled.len();
    let max_sum: usize = doubled.iter().sum();
    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0u128; max_sum + 1]; n_a + 1];
    ways[0][0] = 1;
    for &r in &doubled {
        for k in (1..=n_a).rev() {
            for s in (r..=max_sum).rev() {
                let add = ways[k - 1][s - r];
                if add > 0 {
                    ways[k][s] += add;
                }
            }
        }
    }
    let observed: usize = doubled[..n_a].iter().sum();
    // mean of the doubled rank sum: n_a * (n + 1)
    let center = (n_a * (n + 1)) as i64;
    let dev = (observed as i64 - center).abs();
    let total: u128 = ways[n_a].iter().sum();
    let extreme: u128 = ways[n_a]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as i64 - center).abs() >= dev)
        .map(|(_, c)| *c)
        .sum();
    (extreme as f64 / total as f64).min(1.0)
}
