//! Goodness-of-fit statistics and mergeable accumulators.
//!
//! Accumulators hold integer sums only, so merging is exact and the result of
//! a parallel fold does not depend on how the work was split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::numerics::poisson_ln_pmf;

/// Smallest expected count per chi-square bin.
pub const MIN_EXPECTED: f64 = 5.0;

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Number of bins after merging.
    pub bins: usize,
}

/// Pearson chi-square of `observed` against category probabilities.
///
/// Categories are merged left to right until each merged bin expects at least
/// [`MIN_EXPECTED`] counts; a short final run joins the previous bin. Any
/// probability mass missing from `probs` forms one extra bin with zero
/// observations.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> ChiSquare {
    assert_eq!(observed.len(), probs.len(), "observed and probs differ in length");
    let total: u64 = observed.iter().sum();
    let nf = total as f64;
    let mut obs: Vec<f64> = observed.iter().map(|&o| o as f64).collect();
    let mut exp: Vec<f64> = probs.iter().map(|p| p * nf).collect();
    let missing = 1.0 - probs.iter().sum::<f64>();
    if missing * nf > 1e-9 {
        obs.push(0.0);
        exp.push(missing * nf);
    }

    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut cur = (0.0, 0.0);
    for (o, e) in obs.into_iter().zip(exp) {
        cur.0 += o;
        cur.1 += e;
        if cur.1 >= MIN_EXPECTED {
            bins.push(cur);
            cur = (0.0, 0.0);
        }
    }
    if cur.1 > 0.0 || cur.0 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += cur.0;
                last.1 += cur.1;
            }
            None => bins.push(cur),
        }
    }
    let statistic: f64 = bins
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e) * (o - e) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else if statistic.is_infinite() {
        0.0
    } else {
        ChiSquared::new(dof as f64).map_or(f64::NAN, |d| d.sf(statistic))
    };
    ChiSquare {
        statistic,
        dof,
        p_value,
        bins: bins.len(),
    }
}

/// Chi-square of integer observations against `Poisson(mean)`; the last bin
/// collects the upper tail.
pub fn chi_square_poisson(histogram: &Histogram, mean: f64) -> ChiSquare {
    let max = histogram.max().unwrap_or(0);
    let ln_mean = mean.ln();
    let mut probs: Vec<f64> = (0..=max).map(|k| poisson_ln_pmf(k, ln_mean).exp()).collect();
    let head: f64 = probs[..probs.len() - 1].iter().sum();
    *probs.last_mut().expect("nonempty") = (1.0 - head).max(0.0);
    let observed: Vec<u64> = (0..=max).map(|k| histogram.get(k)).collect();
    chi_square(&observed, &probs)
}

/// Asymptotic Kolmogorov p-value for statistic `d` on `n` points, with the
/// usual small-sample correction of the argument.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ks {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample KS statistic of `samples` against a continuous `cdf`.
pub fn ks_continuous<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Ks {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let mut d = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    Ks {
        statistic: d,
        p_value: kolmogorov_pvalue(d, n),
        n,
    }
}

/// Sup distance between a discrete law given by `(location, mass)` atoms and
/// a continuous distribution function.
pub fn ks_discrete_vs_continuous<F: Fn(f64) -> f64>(atoms: &[(f64, f64)], cdf: F) -> f64 {
    let mut atoms = atoms.to_vec();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut below = 0.0;
    let mut d = 0.0_f64;
    for (x, p) in atoms {
        let g = cdf(x);
        let above = below + p;
        d = d.max((g - below).abs()).max((above - g).abs());
        below = above;
    }
    d
}

/// Sup distance between two distribution functions on `0, 1, 2, ...` given
/// by their pmfs.
pub fn ks_lattice(p: &[f64], q: &[f64]) -> f64 {
    let (mut fp, mut fq, mut d) = (0.0, 0.0, 0.0_f64);
    for k in 0..p.len().max(q.len()) {
        fp += p.get(k).copied().unwrap_or(0.0);
        fq += q.get(k).copied().unwrap_or(0.0);
        d = d.max((fp - fq).abs());
    }
    d
}

/// Total variation distance between two pmfs on a common index set.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * (0..p.len().max(q.len()))
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Counts of nonnegative integer observations.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: u64) {
        *self.counts.entry(value).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: Histogram) {
        for (k, c) in other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        self.total += other.total;
    }

    pub fn get(&self, value: u64) -> u64 {
        self.counts.get(&value).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn max(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&k, &c)| (k, c))
    }

    /// Empirical pmf on `0..=max`.
    pub fn pmf(&self) -> Vec<f64> {
        let Some(max) = self.max() else {
            return Vec::new();
        };
        let t = self.total as f64;
        (0..=max).map(|k| self.get(k) as f64 / t).collect()
    }
}

/// Exact integer first and second moments of one integer variable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: i128,
    pub sum_sq: i128,
}

impl Moments {
    pub fn push(&mut self, v: i64) {
        self.n += 1;
        self.sum += i128::from(v);
        self.sum_sq += i128::from(v) * i128::from(v);
    }

    pub fn merge(&mut self, o: Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        let centered = self.sum_sq as f64 - (self.sum as f64) * (self.sum as f64) / n;
        (centered / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Exact integer cross moments of a pair of integer variables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMoments {
    pub x: Moments,
    pub y: Moments,
    pub sum_xy: i128,
}

impl PairMoments {
    pub fn push(&mut self, x: i64, y: i64) {
        self.x.push(x);
        self.y.push(y);
        self.sum_xy += i128::from(x) * i128::from(y);
    }

    pub fn merge(&mut self, o: PairMoments) {
        self.x.merge(o.x);
        self.y.merge(o.y);
        self.sum_xy += o.sum_xy;
    }

    /// Pearson correlation; 0 when either variable is constant.
    pub fn correlation(&self) -> f64 {
        let n = self.x.n as f64;
        let cov = self.sum_xy as f64 - self.x.sum as f64 * self.y.sum as f64 / n;
        let vx = self.x.sum_sq as f64 - (self.x.sum as f64).powi(2) / n;
        let vy = self.y.sum_sq as f64 - (self.y.sum as f64).powi(2) / n;
        if vx <= 0.0 || vy <= 0.0 {
            return 0.0;
        }
        cov / (vx * vy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_exact_fit() {
        let r = chi_square(&[250, 750], &[0.25, 0.75]);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 1);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_known_value() {
        // (60-50)^2/50 + (40-50)^2/50 = 4, dof 1: p = erfc(sqrt(2)) = 0.0455
        let r = chi_square(&[60, 40], &[0.5, 0.5]);
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - erfc(2f64.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn chi_square_merges_small_bins() {
        let r = chi_square(&[90, 5, 3, 2], &[0.9, 0.05, 0.03, 0.02]);
        assert_eq!(r.bins, 3);
        assert!(r.statistic.abs() < 1e-12);
        let r = chi_square(&[10, 0], &[0.999, 0.0]);
        assert_eq!(r.bins, 1);
    }

    #[test]
    fn poisson_histogram() {
        let mut h = Histogram::new();
        for (k, c) in [(0u64, 368u64), (1, 368), (2, 184), (3, 61), (4, 15), (5, 4)] {
            for _ in 0..c {
                h.push(k);
            }
        }
        let r = chi_square_poisson(&h, 1.0);
        assert!(r.p_value > 0.5, "{r:?}");
        assert_eq!(h.total(), 1000);
    }

    #[test]
    fn kolmogorov_values() {
        // Q(1.36) ~ 0.049, Q(1.63) ~ 0.0098
        let n = 1_000_000;
        let scale = (n as f64).sqrt() + 0.12 + 0.11 / (n as f64).sqrt();
        assert!((kolmogorov_pvalue(1.36 / scale, n) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_pvalue(1.63 / scale, n) - 0.0098).abs() < 1e-3);
        assert_eq!(kolmogorov_pvalue(0.0, 10), 1.0);
    }

    #[test]
    fn ks_uniform() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_continuous(&xs, |x| x.clamp(0.0, 1.0));
        assert!((r.statistic - 0.0005).abs() < 1e-12);
    }

    #[test]
    fn ks_discrete_point_mass() {
        let d = ks_discrete_vs_continuous(&[(0.0, 1.0)], normal_cdf);
        assert!((d - 0.5).abs() < 1e-15);
        assert_eq!(ks_lattice(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert!((total_variation(&[1.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn moments_merge_exactly() {
        let mut a = Moments::default();
        let mut b = Moments::default();
        let mut all = Moments::default();
        for v in 0..100i64 {
            if v % 3 == 0 { a.push(v) } else { b.push(v) }
            all.push(v);
        }
        a.merge(b);
        assert_eq!(a, all);
        assert!((all.mean() - 49.5).abs() < 1e-12);
        let mut p = PairMoments::default();
        for v in 0..50i64 {
            p.push(v, 2 * v + 1);
        }
        assert!((p.correlation() - 1.0).abs() < 1e-12);
    }
}
