//! Oracles shared by the integration tests. Nothing here calls into the
//! crate: laws come from enumerating permutations directly.

#![allow(dead_code)]

use std::collections::BTreeMap;

/// Cycle-count vector `(c_1, ..., c_n)` of a permutation image.
pub fn cycle_counts(image: &[usize]) -> Vec<usize> {
    let n = image.len();
    let mut seen = vec![false; n];
    let mut counts = vec![0usize; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = image[i];
            len += 1;
        }
        counts[len - 1] += 1;
    }
    counts
}

/// Number of permutations of `0..n` with each cycle-count vector, by Heap's
/// algorithm over all `n!` permutations.
pub fn permutation_census(n: usize) -> BTreeMap<Vec<usize>, u64> {
    let mut census = BTreeMap::new();
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    *census.entry(cycle_counts(&a)).or_insert(0) += 1;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            *census.entry(cycle_counts(&a)).or_insert(0) += 1;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    census
}

/// Law of the cycle-count vector under the conditioned Ewens measure, and
/// `Z_{n,alpha} = sum_{admissible} theta^{cycles} / n!`.
pub struct EnumeratedLaw {
    pub probs: BTreeMap<Vec<usize>, f64>,
    pub z: f64,
}

pub fn enumerated_law(census: &BTreeMap<Vec<usize>, u64>, alpha: usize, theta: f64) -> EnumeratedLaw {
    let n = census.keys().next().map_or(0, Vec::len);
    let mut weights = BTreeMap::new();
    let mut total = 0.0;
    for (counts, &perms) in census {
        if counts.iter().enumerate().any(|(i, &c)| c > 0 && i + 1 > alpha) {
            continue;
        }
        let k: usize = counts.iter().sum();
        let w = perms as f64 * theta.powi(k as i32);
        total += w;
        weights.insert(counts.clone(), w);
    }
    let factorial: f64 = (1..=n).map(|v| v as f64).product();
    EnumeratedLaw {
        probs: weights.into_iter().map(|(k, w)| (k, w / total)).collect(),
        z: total / factorial,
    }
}

/// Marginal law of `(C_1, ..., C_b)`.
pub fn prefix_marginal(law: &EnumeratedLaw, b: usize) -> BTreeMap<Vec<usize>, f64> {
    let mut out = BTreeMap::new();
    for (counts, p) in &law.probs {
        *out.entry(counts[..b].to_vec()).or_insert(0.0) += p;
    }
    out
}

/// Root of `theta sum_{j<=alpha} x^j = target` by plain bisection.
pub fn saddle_by_bisection(theta: f64, alpha: usize, target: f64) -> f64 {
    let f = |x: f64| theta * (1..=alpha).map(|j| x.powi(j as i32)).sum::<f64>() - target;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn poisson_pmf(k: usize, mu: f64) -> f64 {
    let mut p = (-mu).exp();
    for i in 1..=k {
        p *= mu / i as f64;
    }
    p
}

/// `sum_c (P(c) - Q(c))_+` with `Q` the product of Poisson laws with means
/// `theta x^j / j`; only the support of `P` can contribute.
pub fn tv_to_poisson(marginal: &BTreeMap<Vec<usize>, f64>, theta: f64, x: f64) -> f64 {
    marginal
        .iter()
        .map(|(c, &p)| {
            let q: f64 = c
                .iter()
                .enumerate()
                .map(|(i, &cj)| poisson_pmf(cj, theta * x.powi(i as i32 + 1) / (i + 1) as f64))
                .product();
            (p - q).max(0.0)
        })
        .sum()
}

/// Every prefix vector `(c_1..c_b)` with `sum j c_j <= n`.
pub fn all_prefixes(n: usize, b: usize) -> Vec<Vec<usize>> {
    fn rec(j: usize, b: usize, rem: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if j > b {
            out.push(cur.clone());
            return;
        }
        for c in 0..=rem / j {
            cur.push(c);
            rec(j + 1, b, rem - c * j, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, b, n, &mut Vec::new(), &mut out);
    out
}
