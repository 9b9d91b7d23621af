//! Exact laws computed by positive recurrences.
//!
//! Every quantity here reduces to one recurrence, `k a_k = sum_j w_j a_{k-j}`,
//! run in [`positive_recurrence`]:
//!
//! - generating-function coefficients use `w_j = q_j x^j`, `a_0 = 1`
//! - compound Poisson laws `T = sum_j j Y_j` use `w_j = j mu_j`,
//!   `a_0 = exp(-sum_j mu_j)`
//!
//! With `mu_j = theta x^j / j` at the saddle tilt the two are related by
//! `P[T_{0,alpha} = k] = exp(-lambda_0) x^k h_k`, which is what makes the
//! tilt the natural working scale.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bounded_partitions, ewens_log_weight, ConstraintModel, CycleType, WeightArray};
use crate::numerics::{compensated_sum, log_sum_exp_f64, positive_recurrence, poisson_ln_pmf, LogReal};
use crate::saddle::{model_saddle, SaddleSolution};

/// Largest `n` accepted by [`brute_force_distribution`].
pub const BRUTE_FORCE_MAX_N: usize = 12;

/// Coefficients `h_0..h_N` of `exp(sum_j q_j z^j / j)`, stored tilted.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTable {
    /// `ln(h_k x^k)`.
    ln_tilted: Vec<f64>,
    ln_tilt: f64,
    q: WeightArray,
}

impl CoefficientTable {
    /// Number of coefficients (`N + 1`).
    pub fn len(&self) -> usize {
        self.ln_tilted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_tilted.is_empty()
    }

    /// `x`, or 1 for an untilted table.
    pub fn tilt(&self) -> f64 {
        self.ln_tilt.exp()
    }

    pub fn ln_tilt(&self) -> f64 {
        self.ln_tilt
    }

    pub fn weights(&self) -> &WeightArray {
        &self.q
    }

    /// `ln(h_k x^k)`.
    pub fn ln_tilted(&self, k: usize) -> f64 {
        self.ln_tilted[k]
    }

    pub fn tilted_logs(&self) -> &[f64] {
        &self.ln_tilted
    }

    /// `h_k` with the tilt removed.
    pub fn h(&self, k: usize) -> LogReal {
        let t = self.ln_tilted[k];
        if t == f64::NEG_INFINITY {
            return LogReal::ZERO;
        }
        LogReal::from_ln(t - k as f64 * self.ln_tilt)
    }

    pub fn values(&self) -> Vec<LogReal> {
        (0..self.len()).map(|k| self.h(k)).collect()
    }
}

/// Runs `k h_k = sum_{j <= min(alpha, k)} q_j h_{k-j}` for `k <= n_max`,
/// optionally on the tilted row `q_j x^j`.
pub fn egf_coefficients(q: &WeightArray, n_max: usize, tilt: Option<f64>) -> Result<CoefficientTable> {
    let ln_tilt = match tilt {
        None => 0.0,
        Some(x) if x > 0.0 && x.is_finite() => x.ln(),
        Some(x) => return Err(Error::Domain(format!("tilt must be positive, got {x}"))),
    };
    if !q.as_slice().iter().any(|&v| v > 0.0) {
        return Err(Error::DegenerateWeights("all weights are zero".into()));
    }
    let ln_w: Vec<f64> = q
        .ln_weights()
        .iter()
        .enumerate()
        .map(|(i, lq)| lq + (i + 1) as f64 * ln_tilt)
        .collect();
    let ln_tilted = positive_recurrence(&ln_w, 0.0, n_max + 1);
    Ok(CoefficientTable {
        ln_tilted,
        ln_tilt,
        q: q.clone(),
    })
}

/// `ln Z_{n,alpha}`, computed at the saddle tilt.
pub fn partition_function(model: &ConstraintModel) -> Result<LogReal> {
    let sol = model_saddle(model)?;
    let table = egf_coefficients(&model.weights(), model.n(), Some(sol.x))?;
    Ok(table.h(model.n()))
}

/// Law of `T = sum_{j=b1+1}^{b2} j Y_j` with independent `Y_j ~ Poisson(mu_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompoundPoissonDist {
    ln_pmf: Vec<f64>,
    means: Vec<f64>,
    offset: usize,
    tail: f64,
}

impl CompoundPoissonDist {
    /// `ln P[T = k]` for `k = 0..=N`.
    pub fn ln_pmf(&self) -> &[f64] {
        &self.ln_pmf
    }

    pub fn pmf(&self, k: usize) -> f64 {
        self.ln_pmf.get(k).map_or(0.0, |v| v.exp())
    }

    pub fn ln_p(&self, k: usize) -> f64 {
        self.ln_pmf.get(k).copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// `mu_{b1+1}, ..., mu_{b2}`.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// `(b1, b2)`.
    pub fn range(&self) -> (usize, usize) {
        (self.offset, self.offset + self.means.len())
    }

    /// `1 - sum_{k <= N} P[T = k]`, clamped at zero.
    pub fn tail_mass(&self) -> f64 {
        self.tail
    }

    /// `sum_j j mu_j`.
    pub fn mean(&self) -> f64 {
        compensated_sum(
            self.means
                .iter()
                .enumerate()
                .map(|(i, m)| (self.offset + i + 1) as f64 * m),
        )
    }

    /// `P[T >= k]` from the table and the reported tail.
    pub fn upper_tail(&self, k: usize) -> f64 {
        let inside = compensated_sum(self.ln_pmf.iter().skip(k).map(|v| v.exp()));
        inside + self.tail
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,log_p,p")?;
        for (k, lp) in self.ln_pmf.iter().enumerate() {
            writeln!(out, "{k},{lp:.17e},{:.17e}", lp.exp())?;
        }
        Ok(())
    }
}

/// Exact pmf on `0..=n_max` of the compound Poisson variable with means
/// `means[i] = mu_{b1 + 1 + i}`.
pub fn compound_poisson_pmf(b1: usize, means: &[f64], n_max: usize) -> Result<CompoundPoissonDist> {
    if let Some(m) = means.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
        return Err(Error::Domain(format!("means must be finite and nonnegative, got {m}")));
    }
    let width = b1 + means.len();
    let mut ln_w = vec![f64::NEG_INFINITY; width];
    for (i, &m) in means.iter().enumerate() {
        let j = b1 + i + 1;
        ln_w[j - 1] = (j as f64).ln() + m.ln();
    }
    let total = compensated_sum(means.iter().copied());
    Ok(from_ln_weights(b1, means.to_vec(), &ln_w, -total, n_max))
}

fn from_ln_weights(offset: usize, means: Vec<f64>, ln_w: &[f64], ln_p0: f64, n_max: usize) -> CompoundPoissonDist {
    let ln_pmf = if ln_w.iter().all(|w| *w == f64::NEG_INFINITY) {
        let mut v = vec![f64::NEG_INFINITY; n_max + 1];
        v[0] = 0.0;
        v
    } else {
        positive_recurrence(ln_w, ln_p0, n_max + 1)
    };
    let mass = compensated_sum(ln_pmf.iter().map(|v| v.exp()));
    CompoundPoissonDist {
        ln_pmf,
        means,
        offset,
        tail: (1.0 - mass).max(0.0),
    }
}

/// Compound Poisson law with `mu_j = theta x^j / j` on `(b1, b2]`, built from
/// log weights so that no mean has to be representable on its own.
fn tilted_compound(model: &ConstraintModel, sol: &SaddleSolution, b1: usize, b2: usize, n_max: usize) -> CompoundPoissonDist {
    let ln_theta = model.theta().ln();
    let mut ln_w = vec![f64::NEG_INFINITY; b2];
    let mut ln_mus = Vec::with_capacity(b2 - b1);
    for j in (b1 + 1)..=b2 {
        let lw = ln_theta + j as f64 * sol.ln_x;
        ln_w[j - 1] = lw;
        ln_mus.push(lw - (j as f64).ln());
    }
    let ln_total = log_sum_exp_f64(&ln_mus);
    let means = ln_mus.iter().map(|v| v.exp()).collect();
    from_ln_weights(b1, means, &ln_w, -ln_total.exp(), n_max)
}

/// `mu_j = theta x^j / j` for `j = 1..=b` at the model's saddle tilt.
pub fn saddle_means(model: &ConstraintModel, sol: &SaddleSolution, b: usize) -> Vec<f64> {
    (1..=b)
        .map(|j| (model.theta().ln() + j as f64 * sol.ln_x - (j as f64).ln()).exp())
        .collect()
}

/// Precomputed pieces of the conditioning identity for a prefix of length `b`.
#[derive(Clone, Debug)]
pub struct JointLaw {
    model: ConstraintModel,
    b: usize,
    ln_mu: Vec<f64>,
    /// `ln P[T_{b,alpha} = k]`, `k = 0..=n`.
    ln_rest: Vec<f64>,
    /// `ln P[T_{0,alpha} = n]`.
    ln_total_n: f64,
}

impl JointLaw {
    pub fn new(model: &ConstraintModel, b: usize) -> Result<Self> {
        if b > model.alpha() {
            return Err(Error::Constraint(format!(
                "prefix length {b} exceeds alpha = {}",
                model.alpha()
            )));
        }
        let sol = model_saddle(model)?;
        let n = model.n();
        let rest = tilted_compound(model, &sol, b, model.alpha(), n);
        let full = tilted_compound(model, &sol, 0, model.alpha(), n);
        let ln_mu = (1..=b)
            .map(|j| model.theta().ln() + j as f64 * sol.ln_x - (j as f64).ln())
            .collect();
        Ok(Self {
            model: model.clone(),
            b,
            ln_mu,
            ln_rest: rest.ln_pmf,
            ln_total_n: full.ln_pmf[n],
        })
    }

    pub fn prefix_len(&self) -> usize {
        self.b
    }

    /// `ln P[(C_1..C_b) = prefix]`.
    pub fn logpmf(&self, prefix: &[usize]) -> Result<LogReal> {
        if prefix.len() != self.b {
            return Err(Error::Constraint(format!(
                "prefix has length {}, expected {}",
                prefix.len(),
                self.b
            )));
        }
        let mut r = 0usize;
        for (i, &c) in prefix.iter().enumerate() {
            r = match c.checked_mul(i + 1).and_then(|v| v.checked_add(r)) {
                Some(v) => v,
                None => return Ok(LogReal::ZERO),
            };
        }
        let n = self.model.n();
        if r > n {
            return Ok(LogReal::ZERO);
        }
        let mut ln = self.ln_rest[n - r] - self.ln_total_n;
        for (&c, &lm) in prefix.iter().zip(&self.ln_mu) {
            ln += poisson_ln_pmf(c as u64, lm);
        }
        Ok(LogReal::from_ln(ln))
    }
}

/// `ln P_{n,alpha}[(C_1, ..., C_b) = prefix]` with `b = prefix.len()`.
pub fn joint_cycle_count_logpmf(model: &ConstraintModel, prefix: &[usize]) -> Result<LogReal> {
    JointLaw::new(model, prefix.len())?.logpmf(prefix)
}

/// Exact total variation distance between `(C_1..C_b)` and independent
/// Poisson variables with the saddle means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TVReport {
    pub n: usize,
    pub alpha: usize,
    pub theta: f64,
    pub b: usize,
    pub tv: f64,
    pub terms_summed: usize,
    pub mu_used: Vec<f64>,
}

impl TVReport {
    pub fn model(&self) -> Result<ConstraintModel> {
        ConstraintModel::new(self.n, self.alpha, self.theta)
    }
}

pub fn exact_tv_distance(model: &ConstraintModel, b: usize) -> Result<TVReport> {
    let alpha = model.alpha();
    if b > alpha {
        return Err(Error::Constraint(format!("b = {b} exceeds alpha = {alpha}")));
    }
    let report = |tv: f64, terms_summed: usize, mu_used: Vec<f64>| TVReport {
        n: model.n(),
        alpha,
        theta: model.theta(),
        b,
        tv,
        terms_summed,
        mu_used,
    };
    if b == 0 {
        return Ok(report(0.0, 0, Vec::new()));
    }
    let n = model.n();
    let sol = model_saddle(model)?;
    let head = tilted_compound(model, &sol, 0, b, n);
    let rest = tilted_compound(model, &sol, b, alpha, n);
    let full = tilted_compound(model, &sol, 0, alpha, n);
    let ln_total_n = full.ln_pmf[n];

    let terms = (0..=n).map(|r| {
        let ln_ratio = rest.ln_pmf[n - r] - ln_total_n;
        let gap = -ln_ratio.exp_m1();
        if gap > 0.0 {
            head.ln_pmf[r].exp() * gap
        } else {
            0.0
        }
    });
    let tv = (compensated_sum(terms) + head.tail).clamp(0.0, 1.0);
    Ok(report(tv, n + 1, head.means))
}

/// `ln exp(m (rho - rho ln rho) / b)` with `m = sum_j j mu_j`: an upper
/// bound for `P[T_{0b} >= rho m]`.
pub fn chernoff_tail_bound(means: &[f64], rho: f64) -> Result<LogReal> {
    if !(rho > 1.0) {
        return Err(Error::Domain(format!("rho must exceed 1, got {rho}")));
    }
    if means.is_empty() {
        return Err(Error::Domain("means must be nonempty".into()));
    }
    let m = compensated_sum(means.iter().enumerate().map(|(i, mu)| (i + 1) as f64 * mu));
    Ok(LogReal::from_ln(m * (rho - rho * rho.ln()) / means.len() as f64))
}

/// Normalised law of the cycle type by enumeration of bounded partitions.
pub fn brute_force_distribution(model: &ConstraintModel) -> Result<BTreeMap<CycleType, LogReal>> {
    if model.n() > BRUTE_FORCE_MAX_N {
        return Err(Error::SizeGuard(format!(
            "brute force needs n <= {BRUTE_FORCE_MAX_N}, got {}",
            model.n()
        )));
    }
    let types = bounded_partitions(model.n(), model.alpha());
    let logs: Vec<f64> = types.iter().map(|t| ewens_log_weight(t, model.theta()).ln()).collect();
    let ln_norm = log_sum_exp_f64(&logs);
    Ok(types
        .into_iter()
        .zip(logs)
        .map(|(t, l)| (t, LogReal::from_ln(l - ln_norm)))
        .collect())
}

/// `ln Z_{n,alpha}` from the enumeration, for cross-checks.
pub fn brute_force_partition_function(model: &ConstraintModel) -> Result<LogReal> {
    if model.n() > BRUTE_FORCE_MAX_N {
        return Err(Error::SizeGuard(format!(
            "brute force needs n <= {BRUTE_FORCE_MAX_N}, got {}",
            model.n()
        )));
    }
    let logs: Vec<f64> = bounded_partitions(model.n(), model.alpha())
        .iter()
        .map(|t| ewens_log_weight(t, model.theta()).ln())
        .collect();
    Ok(LogReal::from_ln(
        log_sum_exp_f64(&logs) - crate::numerics::ln_factorial(model.n() as u64),
    ))
}

/// Exact law of a single count `C_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountLaw {
    pub m: usize,
    /// `mu_m` at the saddle tilt.
    pub mu: f64,
    /// `P[C_m = c]` for `c = 0..=n/m`.
    pub pmf: Vec<f64>,
}

impl CountLaw {
    pub fn mean(&self) -> f64 {
        compensated_sum(self.pmf.iter().enumerate().map(|(c, p)| c as f64 * p))
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        compensated_sum(
            self.pmf
                .iter()
                .enumerate()
                .map(|(c, p)| (c as f64 - mean).powi(2) * p),
        )
    }
}

/// `P[C_m = c] = Poisson(c; mu_m) P[T^{(m)} = n - m c] / P[T_{0,alpha} = n]`
/// where `T^{(m)}` omits length `m`.
pub fn cycle_count_distribution(model: &ConstraintModel, m: usize) -> Result<CountLaw> {
    let alpha = model.alpha();
    if m == 0 || m > alpha {
        return Err(Error::Constraint(format!("cycle length {m} outside 1..={alpha}")));
    }
    let n = model.n();
    let sol = model_saddle(model)?;
    let ln_theta = model.theta().ln();
    let full = tilted_compound(model, &sol, 0, alpha, n);
    let mut ln_w: Vec<f64> = (1..=alpha).map(|j| ln_theta + j as f64 * sol.ln_x).collect();
    ln_w[m - 1] = f64::NEG_INFINITY;
    let ln_mus: Vec<f64> = (1..=alpha)
        .filter(|&j| j != m)
        .map(|j| ln_w[j - 1] - (j as f64).ln())
        .collect();
    let ln_p0 = if ln_mus.is_empty() {
        0.0
    } else {
        -log_sum_exp_f64(&ln_mus).exp()
    };
    let others = from_ln_weights(0, Vec::new(), &ln_w, ln_p0, n);
    let ln_mu = ln_theta + m as f64 * sol.ln_x - (m as f64).ln();
    let ln_total_n = full.ln_pmf[n];
    let pmf = (0..=n / m)
        .map(|c| (poisson_ln_pmf(c as u64, ln_mu) + others.ln_pmf[n - m * c] - ln_total_n).exp())
        .collect();
    Ok(CountLaw {
        m,
        mu: ln_mu.exp(),
        pmf,
    })
}

/// `E[C_m] = (theta / m) Z_{n-m} / Z_n`, from a single coefficient table.
pub fn expected_cycle_count(model: &ConstraintModel, m: usize) -> Result<f64> {
    let alpha = model.alpha();
    if m == 0 || m > alpha {
        return Err(Error::Constraint(format!("cycle length {m} outside 1..={alpha}")));
    }
    let n = model.n();
    if m > n {
        return Ok(0.0);
    }
    let sol = model_saddle(model)?;
    let table = egf_coefficients(&model.weights(), n, Some(sol.x))?;
    let ln = model.theta().ln() - (m as f64).ln() + table.h(n - m).ln() - table.h(n).ln();
    Ok(ln.exp())
}

/// Factorial moments of cycle counts from one coefficient table:
/// `E[C_i] = (theta/i) Z_{n-i}/Z_n` and
/// `E[C_i C_j] = (theta^2/(i j)) Z_{n-i-j}/Z_n` for `i != j` (for `i = j` the
/// same expression gives `E[C_i (C_i - 1)]`).
#[derive(Clone, Debug)]
pub struct MomentTable {
    n: usize,
    alpha: usize,
    ln_theta: f64,
    /// `ln Z_k`, `k = 0..=n`.
    ln_z: Vec<f64>,
}

impl MomentTable {
    pub fn new(model: &ConstraintModel) -> Result<Self> {
        let sol = model_saddle(model)?;
        let table = egf_coefficients(&model.weights(), model.n(), Some(sol.x))?;
        Ok(Self {
            n: model.n(),
            alpha: model.alpha(),
            ln_theta: model.theta().ln(),
            ln_z: table.values().iter().map(|v| v.ln()).collect(),
        })
    }

    fn ratio(&self, removed: usize) -> f64 {
        if removed > self.n {
            0.0
        } else {
            (self.ln_z[self.n - removed] - self.ln_z[self.n]).exp()
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if i == 0 || i > self.alpha {
            return 0.0;
        }
        (self.ln_theta - (i as f64).ln()).exp() * self.ratio(i)
    }

    /// `E[C_i C_j]` for `i != j`, `E[C_i (C_i - 1)]` for `i == j`.
    pub fn factorial_moment2(&self, i: usize, j: usize) -> f64 {
        if i == 0 || j == 0 || i > self.alpha || j > self.alpha {
            return 0.0;
        }
        (2.0 * self.ln_theta - (i as f64).ln() - (j as f64).ln()).exp() * self.ratio(i + j)
    }

    /// Mean of `sum_{i in a} C_i` for an inclusive length window.
    pub fn window_mean(&self, a: (usize, usize)) -> f64 {
        compensated_sum((a.0..=a.1).map(|i| self.mean(i)))
    }

    /// `Cov(sum_{i in a} C_i, sum_{j in b} C_j)` for inclusive windows.
    pub fn window_covariance(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        let mut second = compensated_sum(
            (a.0..=a.1).flat_map(|i| (b.0..=b.1).map(move |j| (i, j))).map(|(i, j)| self.factorial_moment2(i, j)),
        );
        // diagonal terms contribute E[C_i^2] = E[C_i(C_i-1)] + E[C_i]
        let lo = a.0.max(b.0);
        let hi = a.1.min(b.1);
        if lo <= hi {
            second += self.window_mean((lo, hi));
        }
        second - self.window_mean(a) * self.window_mean(b)
    }
}
