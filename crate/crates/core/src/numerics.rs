//! Log-domain arithmetic.
//!
//! Every probability and partition function in this crate is carried as a
//! [`LogReal`]: a nonnegative number stored as its natural logarithm, with
//! `-inf` encoding an exact zero. Values such as `Z_{n,alpha}` span thousands
//! of orders of magnitude for `n` in the millions, far outside binary64.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// A nonnegative real number `exp(ln)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogReal(f64);

impl LogReal {
    pub const ZERO: LogReal = LogReal(f64::NEG_INFINITY);
    pub const ONE: LogReal = LogReal(0.0);

    /// Wraps a logarithm. NaN is rejected in debug builds.
    pub fn from_ln(ln: f64) -> Self {
        debug_assert!(!ln.is_nan(), "LogReal from NaN");
        LogReal(ln)
    }

    /// Converts a nonnegative value.
    pub fn from_value(v: f64) -> Self {
        debug_assert!(v >= 0.0, "LogReal from negative value {v}");
        LogReal(v.ln())
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    /// The represented value; overflows to `inf` or underflows to `0`.
    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn powi(self, k: i32) -> Self {
        if self.is_zero() {
            return if k == 0 { LogReal::ONE } else { LogReal::ZERO };
        }
        LogReal(self.0 * f64::from(k))
    }
}

impl Default for LogReal {
    fn default() -> Self {
        LogReal::ZERO
    }
}

impl fmt::Display for LogReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exp({})", self.0)
    }
}

impl PartialOrd for LogReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl Mul for LogReal {
    type Output = LogReal;
    fn mul(self, rhs: LogReal) -> LogReal {
        if self.is_zero() || rhs.is_zero() {
            return LogReal::ZERO;
        }
        LogReal(self.0 + rhs.0)
    }
}

impl Div for LogReal {
    type Output = LogReal;
    /// Division by zero yields `+inf` in the log, i.e. an infinite value.
    fn div(self, rhs: LogReal) -> LogReal {
        if self.is_zero() {
            return LogReal::ZERO;
        }
        LogReal(self.0 - rhs.0)
    }
}

impl Add for LogReal {
    type Output = LogReal;
    fn add(self, rhs: LogReal) -> LogReal {
        LogReal(ln_add(self.0, rhs.0))
    }
}

impl Sum for LogReal {
    fn sum<I: Iterator<Item = LogReal>>(iter: I) -> LogReal {
        let terms: Vec<LogReal> = iter.collect();
        log_sum_exp(&terms)
    }
}

/// `ln(exp(a) + exp(b))`.
pub fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

const PAIRWISE_BLOCK: usize = 8;

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `ln(sum exp(t_i))` with a max shift and pairwise summation.
///
/// The reduction tree depends only on the length of the input, so the result
/// is bit-identical for identical input order.
pub fn log_sum_exp(terms: &[LogReal]) -> LogReal {
    let logs: Vec<f64> = terms.iter().map(|t| t.0).collect();
    LogReal(log_sum_exp_f64(&logs))
}

/// Same as [`log_sum_exp`] on raw logarithms.
pub fn log_sum_exp_f64(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let shifted: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

// Below this many factors the falling factorial is a direct compensated sum of
// logarithms; above it the result is large enough that the log-gamma
// difference keeps relative error under 1e-12.
const DIRECT_FALLING_LIMIT: u64 = 100_000;

/// `ln(n (n-1) ... (n-k+1))`.
pub fn log_falling_factorial(n: u64, k: u64) -> Result<LogReal> {
    if k > n {
        return Err(Error::Domain(format!(
            "falling factorial needs k <= n, got n={n}, k={k}"
        )));
    }
    if k <= DIRECT_FALLING_LIMIT {
        let s = compensated_sum((0..k).map(|i| ((n - i) as f64).ln()));
        return Ok(LogReal(s));
    }
    Ok(LogReal(
        ln_gamma(n as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0),
    ))
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n <= 170 {
        return compensated_sum((2..=n).map(|i| (i as f64).ln()));
    }
    ln_gamma(n as f64 + 1.0)
}

/// `ln P[Poisson(mu) = k]` given `ln mu`.
pub fn poisson_ln_pmf(k: u64, ln_mu: f64) -> f64 {
    let mu = ln_mu.exp();
    if k == 0 {
        return -mu;
    }
    if ln_mu == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    k as f64 * ln_mu - mu - ln_factorial(k)
}

// Values in the sliding window are renormalised whenever they leave
// [RESCALE_LOW, RESCALE_HIGH].
const RESCALE_HIGH: f64 = 1e100;
const RESCALE_LOW: f64 = 1e-100;

/// Solves `k a_k = sum_{j=1}^{min(J,k)} w_j a_{k-j}` for `k < len`.
///
/// `ln_weights[j-1] = ln w_j` (`-inf` for a zero weight) and `ln_a0` is the
/// starting value. Returns `ln a_k` for `k = 0..len`.
///
/// The inner loop runs in linear arithmetic: weights are geometrically
/// normalised (`w_j rho^{-j} <= 1`) and the trailing window of `J` values is
/// rescaled whenever it drifts out of range, so no value overflows and the
/// summation order is fixed.
pub fn positive_recurrence(ln_weights: &[f64], ln_a0: f64, len: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; len];
    if len == 0 {
        return out;
    }
    out[0] = ln_a0;
    let width = ln_weights.len();
    let ln_rho = ln_weights
        .iter()
        .enumerate()
        .filter(|(_, w)| w.is_finite())
        .map(|(i, &w)| w / (i + 1) as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    if ln_rho == f64::NEG_INFINITY || ln_a0 == f64::NEG_INFINITY {
        return out;
    }

    // reversed[width - j] = w_j / rho^j, so a window slice ascending in k
    // pairs with an ascending slice of `reversed`.
    let mut reversed = vec![0.0_f64; width];
    for (i, &lw) in ln_weights.iter().enumerate() {
        let j = i + 1;
        reversed[width - j] = (lw - j as f64 * ln_rho).exp();
    }

    let mut lin = vec![0.0_f64; len];
    lin[0] = 1.0;
    let mut scale = 0.0_f64;
    let mut last_low_check = 0usize;
    let low_stride = (width / 8).max(1);

    for k in 1..len {
        let jmax = width.min(k);
        let window = &lin[k - jmax..k];
        let weights = &reversed[width - jmax..];
        let s = dot(window, weights);
        let v = s / k as f64;
        lin[k] = v;

        let needs_high = v > RESCALE_HIGH;
        let needs_low = v > 0.0 && v < RESCALE_LOW && k - last_low_check >= low_stride;
        if needs_high || needs_low {
            last_low_check = k;
            let start = (k + 1).saturating_sub(width);
            let max = lin[start..=k].iter().copied().fold(0.0_f64, f64::max);
            if max > 0.0 && !(RESCALE_LOW..=RESCALE_HIGH).contains(&max) {
                let inv = 1.0 / max;
                for x in &mut lin[start..=k] {
                    *x *= inv;
                }
                scale += max.ln();
            }
        }
        let v = lin[k];
        out[k] = if v > 0.0 {
            ln_a0 + v.ln() + scale + k as f64 * ln_rho
        } else {
            f64::NEG_INFINITY
        };
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0_f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let rem_a = chunks_a.remainder();
    let rem_b = chunks_b.remainder();
    for (x, y) in chunks_a.zip(chunks_b) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in rem_a.iter().zip(rem_b) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn lse_examples() {
        let two = log_sum_exp(&[LogReal::ONE, LogReal::ONE]);
        assert!((two.ln() - 2f64.ln()).abs() < 1e-15);
        assert!(log_sum_exp(&[]).is_zero());
        let q = LogReal::from_value(0.25);
        assert!(log_sum_exp(&[q, q, q, q]).ln().abs() < 1e-15);
    }

    #[test]
    fn lse_handles_huge_logs() {
        let a = LogReal::from_ln(1234.0);
        let b = LogReal::from_ln(1232.0);
        let expected = 1234.126_928_011_043;
        assert!((log_sum_exp(&[a, b]).ln() - expected).abs() < 1e-12);
        assert!(((a + b).ln() - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_is_absorbing() {
        let z = LogReal::ZERO;
        let x = LogReal::from_value(3.0);
        assert!((z * x).is_zero());
        assert_eq!((z + x).ln(), x.ln());
        assert!((z / x).is_zero());
    }

    #[test]
    fn falling_factorial_examples() {
        assert_eq!(log_falling_factorial(5, 0).unwrap().ln(), 0.0);
        assert!((log_falling_factorial(5, 5).unwrap().ln() - 120f64.ln()).abs() < 1e-14);
        // 100 * 99 * 98 as an integer product
        let direct: u64 = 100 * 99 * 98;
        assert_eq!(direct, 970_200);
        let got = log_falling_factorial(100, 3).unwrap().ln();
        assert!(close(got, (direct as f64).ln(), 1e-14));
        assert!(matches!(log_falling_factorial(3, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn falling_factorial_large_n_is_accurate() {
        // Both sides of the direct/log-gamma switch at n = 10^7.
        let n = 10_000_000u64;
        for k in [1u64, 17, 99_999, 100_000, 100_001, 2_000_000] {
            let got = log_falling_factorial(n, k).unwrap().ln();
            let oracle: f64 = {
                // Kahan-compensated sum of logs, independent of the cutoff.
                let mut s = 0.0f64;
                let mut c = 0.0f64;
                for i in 0..k {
                    let y = ((n - i) as f64).ln() - c;
                    let t = s + y;
                    c = (t - s) - y;
                    s = t;
                }
                s
            };
            assert!(close(got, oracle, 1e-12), "k={k}: {got} vs {oracle}");
        }
    }

    #[test]
    fn recurrence_reproduces_exponential_series() {
        // k a_k = theta a_{k-1}, a_0 = 1  =>  a_k = theta^k / k!
        let theta: f64 = 2.5;
        let out = positive_recurrence(&[theta.ln()], 0.0, 200);
        for (k, &l) in out.iter().enumerate() {
            let expected = k as f64 * theta.ln() - ln_factorial(k as u64);
            assert!((l - expected).abs() < 1e-10 * expected.abs().max(1.0), "k={k}");
        }
    }

    #[test]
    fn recurrence_survives_enormous_dynamic_range() {
        // a_k = x^k / k! for x = e^50 spans far beyond binary64.
        let out = positive_recurrence(&[50.0], 0.0, 3000);
        for k in [10usize, 500, 2999] {
            let expected = 50.0 * k as f64 - ln_factorial(k as u64);
            assert!(close(out[k], expected, 1e-12), "k={k}");
        }
        // and a decaying Poisson tail
        let out = positive_recurrence(&[0.0], -1.0, 400);
        let expected = -1.0 - ln_factorial(399);
        assert!(close(out[399], expected, 1e-12));
    }

    proptest! {
        #[test]
        fn lse_matches_direct_sum(v in prop::collection::vec(0.0f64..1e3, 1..200)) {
            let terms: Vec<LogReal> = v.iter().map(|&x| LogReal::from_value(x)).collect();
            let got = log_sum_exp(&terms).value();
            let direct = compensated_sum(v.iter().copied());
            prop_assert!(close(got, direct, 1e-12));
        }

        #[test]
        fn lse_is_permutation_invariant(mut v in prop::collection::vec(-50.0f64..50.0, 1..100)) {
            let terms: Vec<LogReal> = v.iter().map(|&x| LogReal::from_ln(x)).collect();
            let a = log_sum_exp(&terms);
            v.reverse();
            let rev: Vec<LogReal> = v.iter().map(|&x| LogReal::from_ln(x)).collect();
            let b = log_sum_exp(&rev);
            prop_assert!(close(a.value(), b.value(), 1e-12));
            prop_assert_eq!(a.ln().to_bits(), log_sum_exp(&terms).ln().to_bits());
        }
    }
}
