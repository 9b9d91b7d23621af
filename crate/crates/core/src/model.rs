//! Constraint model, cycle weights, cycle types and permutations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ln_factorial, LogReal};

/// How the maximal cycle length depends on `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// `alpha = floor(n^beta)` with `beta` in (0, 1), clamped to `[1, n]`.
    Exponent(f64),
    /// Explicit `n -> alpha` table.
    Table(BTreeMap<usize, usize>),
}

/// Evaluates an alpha rule at `n`.
pub fn alpha_of(rule: &AlphaRule, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    match rule {
        AlphaRule::Exponent(beta) => {
            if !(*beta > 0.0 && *beta < 1.0) {
                return Err(Error::Config(format!("beta must lie in (0,1), got {beta}")));
            }
            let raw = (n as f64).powf(*beta);
            // powf can land a hair below an exact integer power
            let mut alpha = raw.floor() as usize;
            if ((alpha + 1) as f64 - raw).abs() < 1e-9 * raw {
                alpha += 1;
            }
            Ok(alpha.clamp(1, n))
        }
        AlphaRule::Table(table) => table
            .get(&n)
            .copied()
            .ok_or_else(|| Error::Config(format!("alpha table has no entry for n={n}"))),
    }
}

/// The triple `(n, alpha, theta)` defining the conditioned Ewens measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintModel {
    n: usize,
    alpha: usize,
    theta: f64,
    alpha_rule: Option<AlphaRule>,
}

impl ConstraintModel {
    pub fn new(n: usize, alpha: usize, theta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if alpha == 0 || alpha > n {
            return Err(Error::Config(format!(
                "alpha must satisfy 1 <= alpha <= n, got alpha={alpha}, n={n}"
            )));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Config(format!("theta must be positive, got {theta}")));
        }
        Ok(Self {
            n,
            alpha,
            theta,
            alpha_rule: None,
        })
    }

    pub fn with_rule(n: usize, rule: AlphaRule, theta: f64) -> Result<Self> {
        let alpha = alpha_of(&rule, n)?;
        let mut model = Self::new(n, alpha, theta)?;
        model.alpha_rule = Some(rule);
        Ok(model)
    }

    /// `alpha = floor(n^beta)`.
    pub fn from_beta(n: usize, beta: f64, theta: f64) -> Result<Self> {
        Self::with_rule(n, AlphaRule::Exponent(beta), theta)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn alpha_rule(&self) -> Option<&AlphaRule> {
        self.alpha_rule.as_ref()
    }

    /// The Ewens weight row `q_j = theta` for `j <= alpha`.
    pub fn weights(&self) -> WeightArray {
        WeightArray::ewens(self.theta, self.alpha)
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            n: self.n,
            beta: match &self.alpha_rule {
                Some(AlphaRule::Exponent(b)) => Some(*b),
                _ => None,
            },
            alpha: match &self.alpha_rule {
                Some(AlphaRule::Exponent(_)) => None,
                _ => Some(self.alpha),
            },
            theta: self.theta,
        }
    }
}

/// Wire form of a [`ConstraintModel`]: exactly one of `beta` / `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    pub beta: Option<f64>,
    pub alpha: Option<usize>,
    pub theta: f64,
}

impl TryFrom<ModelSpec> for ConstraintModel {
    type Error = Error;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        match (spec.beta, spec.alpha) {
            (Some(beta), None) => ConstraintModel::from_beta(spec.n, beta, spec.theta),
            (None, Some(alpha)) => ConstraintModel::new(spec.n, alpha, spec.theta),
            _ => Err(Error::Config(
                "exactly one of beta or alpha must be given".into(),
            )),
        }
    }
}

/// One row `q_1..q_alpha` of nonnegative cycle weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightArray {
    q: Vec<f64>,
}

impl WeightArray {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        if !q.iter().any(|&v| v > 0.0) {
            return Err(Error::DegenerateWeights(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(Self { q })
    }

    /// `q_j = theta` for `j <= alpha`.
    pub fn ewens(theta: f64, alpha: usize) -> Self {
        assert!(theta > 0.0 && alpha >= 1);
        Self {
            q: vec![theta; alpha],
        }
    }

    /// Copy with `q_j` replaced (1-based index).
    pub fn with_entry(&self, j: usize, value: f64) -> Result<Self> {
        if j == 0 || j > self.q.len() {
            return Err(Error::Constraint(format!(
                "index {j} outside 1..={}",
                self.q.len()
            )));
        }
        let mut q = self.q.clone();
        q[j - 1] = value;
        Self::new(q)
    }

    /// Length `alpha` of the row.
    pub fn alpha(&self) -> usize {
        self.q.len()
    }

    /// `q_j`, 1-based; zero past the end of the row.
    pub fn get(&self, j: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        self.q.get(j - 1).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    /// `ln q_j` for `j = 1..=alpha`.
    pub fn ln_weights(&self) -> Vec<f64> {
        self.q.iter().map(|v| v.ln()).collect()
    }
}

/// Cycle counts `(c_1, ..., c_n)` with `sum j c_j = n`.
///
/// Stored sparsely as `(length, multiplicity)` pairs in increasing length
/// order; only nonzero multiplicities are kept.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CycleType {
    n: usize,
    parts: Vec<(usize, usize)>,
}

impl CycleType {
    /// From a dense vector, `counts[j-1] = c_j`.
    pub fn from_counts(counts: &[usize]) -> Self {
        let parts: Vec<(usize, usize)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i + 1, c))
            .collect();
        let n = parts.iter().map(|(j, c)| j * c).sum();
        Self { n, parts }
    }

    /// From `(length, multiplicity)` pairs in any order; repeated lengths add.
    pub fn from_parts<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (j, c) in pairs {
            if j == 0 {
                return Err(Error::Structural("cycle length 0".into()));
            }
            if c > 0 {
                *map.entry(j).or_insert(0usize) += c;
            }
        }
        let parts: Vec<(usize, usize)> = map.into_iter().collect();
        let n = parts.iter().map(|(j, c)| j * c).sum();
        Ok(Self { n, parts })
    }

    /// From an unordered list of cycle lengths.
    pub fn from_lengths(lengths: &mut [usize]) -> Self {
        lengths.sort_unstable();
        let mut parts: Vec<(usize, usize)> = Vec::new();
        for &len in lengths.iter() {
            match parts.last_mut() {
                Some((j, c)) if *j == len => *c += 1,
                _ => parts.push((len, 1)),
            }
        }
        let n = lengths.iter().sum();
        Self { n, parts }
    }

    /// `sum_j j c_j`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// `c_j`.
    pub fn count(&self, j: usize) -> usize {
        match self.parts.binary_search_by_key(&j, |&(len, _)| len) {
            Ok(i) => self.parts[i].1,
            Err(_) => 0,
        }
    }

    /// Nonzero `(length, multiplicity)` pairs, increasing in length.
    pub fn parts(&self) -> &[(usize, usize)] {
        &self.parts
    }

    pub fn num_cycles(&self) -> usize {
        self.parts.iter().map(|&(_, c)| c).sum()
    }

    pub fn max_length(&self) -> usize {
        self.parts.last().map_or(0, |&(j, _)| j)
    }

    /// Number of cycles with length strictly greater than `d`.
    pub fn cycles_longer_than(&self, d: usize) -> usize {
        let start = self.parts.partition_point(|&(j, _)| j <= d);
        self.parts[start..].iter().map(|&(_, c)| c).sum()
    }

    /// Admissible for a model iff no cycle exceeds `alpha`.
    pub fn is_admissible(&self, alpha: usize) -> bool {
        self.max_length() <= alpha
    }

    /// Dense `(c_1, ..., c_n)`.
    pub fn to_dense(&self) -> Vec<usize> {
        let mut v = vec![0; self.n];
        for &(j, c) in &self.parts {
            v[j - 1] = c;
        }
        v
    }

    /// Canonical permutation with this cycle type: consecutive blocks, each
    /// a cyclic shift.
    pub fn canonical_permutation(&self) -> Permutation {
        let mut image = Vec::with_capacity(self.n);
        let mut start = 0;
        for &(j, c) in &self.parts {
            for _ in 0..c {
                for i in 0..j {
                    image.push(start + (i + 1) % j);
                }
                start += j;
            }
        }
        Permutation { image }
    }
}

impl fmt::Display for CycleType {
    /// `len:count` pairs separated by `;`, e.g. `1:2;3:1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for &(j, c) in &self.parts {
            if !first {
                f.write_str(";")?;
            }
            write!(f, "{j}:{c}")?;
            first = false;
        }
        Ok(())
    }
}

/// A bijection on `{0, ..., n-1}` stored as its image array.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let n = image.len();
        let mut seen = vec![false; n];
        for &v in &image {
            if v >= n || seen[v] {
                return Err(Error::Structural(format!(
                    "mapping is not a bijection on 0..{n}"
                )));
            }
            seen[v] = true;
        }
        Ok(Self { image })
    }

    /// From a 1-based image list such as `(2, 1, 4, 3)`.
    pub fn from_one_based(image: &[usize]) -> Result<Self> {
        if image.contains(&0) {
            return Err(Error::Structural("one-based image contains 0".into()));
        }
        Self::new(image.iter().map(|&v| v - 1).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self {
            image: (0..n).collect(),
        }
    }

    pub(crate) fn from_image_unchecked(image: Vec<usize>) -> Self {
        Self { image }
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn apply(&self, i: usize) -> usize {
        self.image[i]
    }

    /// Cycles as element lists, each starting at its smallest element.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.image.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                cycle.push(i);
                i = self.image[i];
            }
            out.push(cycle);
        }
        out
    }
}

/// Cycle type of a permutation given as an image array (validated).
pub fn cycle_type_of_image(image: &[usize]) -> Result<CycleType> {
    let p = Permutation::new(image.to_vec())?;
    Ok(cycle_type_of(&p))
}

pub fn cycle_type_of(p: &Permutation) -> CycleType {
    let mut lengths: Vec<usize> = p.cycles().iter().map(Vec::len).collect();
    CycleType::from_lengths(&mut lengths)
}

/// `ln[ theta^{sum c_j} n! / prod_j (j^{c_j} c_j!) ]`: the total Ewens weight
/// of all permutations with cycle type `t`.
pub fn ewens_log_weight(t: &CycleType, theta: f64) -> LogReal {
    let mut ln = ln_factorial(t.n() as u64) + t.num_cycles() as f64 * theta.ln();
    for &(j, c) in t.parts() {
        ln -= c as f64 * (j as f64).ln() + ln_factorial(c as u64);
    }
    LogReal::from_ln(ln)
}

/// All cycle types of `n` with every part at most `max_part`, in reverse
/// lexicographic order of their part lists.
pub fn bounded_partitions(n: usize, max_part: usize) -> Vec<CycleType> {
    let mut out = Vec::new();
    let mut parts = Vec::new();
    fn rec(rem: usize, max: usize, parts: &mut Vec<usize>, out: &mut Vec<CycleType>) {
        if rem == 0 {
            let mut p = parts.clone();
            out.push(CycleType::from_lengths(&mut p));
            return;
        }
        for part in (1..=max.min(rem)).rev() {
            parts.push(part);
            rec(rem - part, part, parts, out);
            parts.pop();
        }
    }
    if max_part >= 1 {
        rec(n, max_part, &mut parts, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alpha_rule_examples() {
        assert_eq!(alpha_of(&AlphaRule::Exponent(0.5), 100).unwrap(), 10);
        // 1024^0.7 = 2^7 = 128 exactly
        let direct = (1024f64).powf(0.7);
        assert!((direct - 128.0).abs() < 1e-9);
        assert_eq!(alpha_of(&AlphaRule::Exponent(0.7), 1024).unwrap(), 128);
        assert_eq!(alpha_of(&AlphaRule::Exponent(0.9), 2).unwrap(), 1);
        assert!(matches!(
            alpha_of(&AlphaRule::Exponent(1.0), 10),
            Err(Error::Config(_))
        ));
        let table = AlphaRule::Table([(7usize, 3usize)].into_iter().collect());
        assert_eq!(alpha_of(&table, 7).unwrap(), 3);
        assert!(alpha_of(&table, 8).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(ConstraintModel::new(5, 6, 1.0).is_err());
        assert!(ConstraintModel::new(5, 0, 1.0).is_err());
        assert!(ConstraintModel::new(5, 3, 0.0).is_err());
        let m = ConstraintModel::from_beta(100, 0.5, 2.0).unwrap();
        assert_eq!(m.alpha(), 10);
    }

    #[test]
    fn model_spec_requires_exactly_one_of_beta_alpha() {
        let both = ModelSpec {
            n: 10,
            beta: Some(0.5),
            alpha: Some(3),
            theta: 1.0,
        };
        assert!(ConstraintModel::try_from(both).is_err());
        let none = ModelSpec {
            n: 10,
            beta: None,
            alpha: None,
            theta: 1.0,
        };
        assert!(ConstraintModel::try_from(none).is_err());
        let ok = ModelSpec {
            n: 10,
            beta: None,
            alpha: Some(3),
            theta: 1.0,
        };
        let m = ConstraintModel::try_from(ok.clone()).unwrap();
        assert_eq!(m.spec(), ok);
    }

    #[test]
    fn cycle_type_examples() {
        let id = Permutation::identity(4);
        assert_eq!(cycle_type_of(&id).to_dense(), vec![4, 0, 0, 0]);
        let five = Permutation::new(vec![1, 2, 3, 4, 0]).unwrap();
        assert_eq!(cycle_type_of(&five).to_dense(), vec![0, 0, 0, 0, 1]);
        let swaps = Permutation::from_one_based(&[2, 1, 4, 3]).unwrap();
        assert_eq!(cycle_type_of(&swaps).to_dense(), vec![0, 2, 0, 0]);
        assert!(matches!(
            cycle_type_of_image(&[0, 0, 1]),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn ewens_weight_examples() {
        let n = 6;
        let id = CycleType::from_counts(&[n]);
        assert!(ewens_log_weight(&id, 1.0).ln().abs() < 1e-14);
        let long = CycleType::from_parts([(n, 1)]).unwrap();
        assert!((ewens_log_weight(&long, 1.0).ln() - ln_factorial(5)).abs() < 1e-12);
        // enumerate S_3: permutations of type (1,1) are the 3 transpositions,
        // each with 2 cycles, so the total weight at theta = 2 is 3 * 2^2
        let t = CycleType::from_counts(&[1, 1, 0]);
        let mut total = 0.0;
        for p in all_perms(3) {
            let ct = cycle_type_of(&p);
            if ct == t {
                total += 2f64.powi(ct.num_cycles() as i32);
            }
        }
        assert_eq!(total, 12.0);
        assert!((ewens_log_weight(&t, 2.0).ln() - 12f64.ln()).abs() < 1e-14);
    }

    fn all_perms(n: usize) -> Vec<Permutation> {
        fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
            let n = used.len();
            if cur.len() == n {
                out.push(Permutation::new(cur.clone()).unwrap());
                return;
            }
            for v in 0..n {
                if !used[v] {
                    used[v] = true;
                    cur.push(v);
                    rec(cur, used, out);
                    cur.pop();
                    used[v] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; n], &mut out);
        out
    }

    #[test]
    fn ewens_weights_sum_to_factorial() {
        for n in 1..=9usize {
            let total: f64 = bounded_partitions(n, n)
                .iter()
                .map(|t| ewens_log_weight(t, 1.0).value())
                .sum();
            let fact: f64 = (1..=n).map(|i| i as f64).product();
            assert!((total - fact).abs() < 1e-9 * fact, "n={n}");
        }
    }

    #[test]
    fn partition_counts() {
        // p(12) = 77; partitions of 5 with parts <= 3: 5
        assert_eq!(bounded_partitions(12, 12).len(), 77);
        assert_eq!(bounded_partitions(5, 3).len(), 5);
        assert!(bounded_partitions(7, 2).iter().all(|t| t.is_admissible(2)));
    }

    #[test]
    fn cycles_longer_than_counts_tail() {
        let t = CycleType::from_counts(&[1, 2, 0, 1]);
        assert_eq!(t.cycles_longer_than(0), 4);
        assert_eq!(t.cycles_longer_than(1), 3);
        assert_eq!(t.cycles_longer_than(3), 1);
        assert_eq!(t.cycles_longer_than(4), 0);
        assert_eq!(t.to_string(), "1:1;2:2;4:1");
    }

    proptest! {
        #[test]
        fn canonical_permutation_round_trips(counts in prop::collection::vec(0usize..4, 1..8)) {
            let t = CycleType::from_counts(&counts);
            let p = t.canonical_permutation();
            prop_assert_eq!(p.len(), t.n());
            prop_assert_eq!(cycle_type_of(&p), t);
        }
    }
}
