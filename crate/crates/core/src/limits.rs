//! Longest-cycle statistics, the long-cycle counting process and the
//! statistical batteries that compare sampled laws with their limits.
//!
//! Every battery first classifies the model with [`regime_report`] and
//! refuses to run when the classification contradicts the hypothesis of the
//! limit theorem it checks.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::exact::{cycle_count_distribution, MomentTable};
use crate::model::{ConstraintModel, CycleType};
use crate::saddle::{clt_h_calculus, model_saddle, mu, regime_report, Regime, RegimeReport};
use crate::sampler::Sampler;
use crate::stats::{
    chi_square_poisson, ks_continuous, ks_discrete_vs_continuous, normal_cdf, ChiSquare, Histogram, Ks,
    Moments, PairMoments,
};

/// `(l_1, ..., l_K)`, the K longest cycle lengths with multiplicity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongestVector {
    pub ell: Vec<usize>,
}

impl LongestVector {
    pub fn k(&self) -> usize {
        self.ell.len()
    }

    /// `l_k`, 1-based.
    pub fn get(&self, k: usize) -> usize {
        self.ell[k - 1]
    }
}

/// The `K` longest cycle lengths; missing entries are 0.
pub fn longest_k(t: &CycleType, k: usize) -> LongestVector {
    let mut ell = Vec::with_capacity(k);
    for &(len, count) in t.parts().iter().rev() {
        for _ in 0..count {
            if ell.len() == k {
                return LongestVector { ell };
            }
            ell.push(len);
        }
    }
    ell.resize(k, 0);
    LongestVector { ell }
}

/// `d_t(n) = max(alpha - floor(t / mu_alpha), 0)`.
pub fn d_t(alpha: usize, mu_alpha: f64, t: f64) -> usize {
    let steps = (t / mu_alpha).floor();
    if steps >= alpha as f64 {
        0
    } else {
        alpha - steps as usize
    }
}

/// Values of `P_t` on a grid for one cycle type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessPath {
    pub grid: Vec<f64>,
    pub counts: Vec<usize>,
    pub d_values: Vec<usize>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::Domain("grid values must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `P_t = sum_{j = d_t + 1}^{alpha} c_j` at every grid point.
pub fn build_process(t: &CycleType, model: &ConstraintModel, mu_alpha: f64, grid: &[f64]) -> Result<ProcessPath> {
    check_grid(grid)?;
    if !(mu_alpha > 0.0) {
        return Err(Error::Domain(format!("mu_alpha must be positive, got {mu_alpha}")));
    }
    let d_values: Vec<usize> = grid.iter().map(|&s| d_t(model.alpha(), mu_alpha, s)).collect();
    let counts = d_values.iter().map(|&d| t.cycles_longer_than(d)).collect();
    Ok(ProcessPath {
        grid: grid.to_vec(),
        counts,
        d_values,
    })
}

fn regularized_upper(k: usize, z: f64) -> f64 {
    if z <= 0.0 {
        1.0
    } else {
        gamma_ur(k as f64, z)
    }
}

/// `Q(k, d mu) - Q(k, (d+1) mu)`: the probability that a Gamma(k, 1)
/// variable divided by `mu` has integer part `d`.
pub fn gamma_floor_pmf(k: usize, mu: f64, d: usize) -> f64 {
    assert!(k >= 1 && mu > 0.0, "gamma_floor_pmf needs k >= 1 and mu > 0");
    let lo = d as f64 * mu;
    (regularized_upper(k, lo) - regularized_upper(k, lo + mu)).max(0.0)
}

/// Fails with a regime error unless the model is classified as `expected`.
pub fn require_regime(model: &ConstraintModel, expected: Regime, thresholds: (f64, f64)) -> Result<RegimeReport> {
    let report = regime_report(model, thresholds)?;
    if report.classification != expected {
        return Err(Error::Regime(format!(
            "model (n={}, alpha={}, theta={}) has mu_alpha = {:.4e}, classified {:?}; this check needs {:?}",
            model.n(),
            model.alpha(),
            model.theta(),
            report.mu_alpha,
            report.classification,
            expected
        )));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergingReport {
    pub k: usize,
    pub samples: usize,
    pub hits: u64,
    pub fraction: f64,
    pub regime: RegimeReport,
}

/// Fraction of samples whose `K` longest cycles all have length `alpha`.
pub fn check_longest_diverging(
    sampler: &Sampler,
    samples: usize,
    seed: u64,
    k: usize,
    thresholds: (f64, f64),
) -> Result<DivergingReport> {
    let model = sampler.model();
    let regime = require_regime(model, Regime::Diverging, thresholds)?;
    let alpha = model.alpha();
    let hits = sampler.fold_batch(
        samples,
        seed,
        || 0u64,
        |acc, _, t| {
            if t.count(alpha) >= k {
                *acc += 1;
            }
        },
        |a, b| *a += b,
    );
    let fraction = if samples == 0 { 1.0 } else { hits as f64 / samples as f64 };
    Ok(DivergingReport {
        k,
        samples,
        hits,
        fraction,
        regime,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalRow {
    pub d: usize,
    pub empirical: f64,
    pub theoretical: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalReport {
    pub k: usize,
    pub mu_alpha: f64,
    pub samples: usize,
    pub rows: Vec<CriticalRow>,
    /// Empirical `P[alpha - l_k > d_max]`.
    pub empirical_remainder: f64,
    pub theoretical_remainder: f64,
    /// Total variation over `0..=d_max` plus the remainder bin.
    pub tv: f64,
    pub regime: RegimeReport,
}

/// Empirical law of `alpha - l_k` against the gamma-floor law with the exact
/// finite-`n` `mu_alpha`.
pub fn check_longest_critical(
    sampler: &Sampler,
    samples: usize,
    seed: u64,
    k: usize,
    d_max: usize,
    thresholds: (f64, f64),
) -> Result<CriticalReport> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let model = sampler.model();
    let regime = require_regime(model, Regime::Critical, thresholds)?;
    let mu_alpha = regime.mu_alpha;
    let alpha = model.alpha();
    let hist = sampler.fold_batch(
        samples,
        seed,
        Histogram::new,
        |h, _, t| {
            let d = alpha - longest_k(t, k).get(k);
            h.push(d.min(d_max + 1) as u64);
        },
        Histogram::merge,
    );
    let total = samples.max(1) as f64;
    let rows: Vec<CriticalRow> = (0..=d_max)
        .map(|d| CriticalRow {
            d,
            empirical: hist.get(d as u64) as f64 / total,
            theoretical: gamma_floor_pmf(k, mu_alpha, d),
        })
        .collect();
    let empirical_remainder = hist.get(d_max as u64 + 1) as f64 / total;
    let theoretical_remainder = regularized_upper(k, (d_max + 1) as f64 * mu_alpha);
    let tv = 0.5
        * (rows.iter().map(|r| (r.empirical - r.theoretical).abs()).sum::<f64>()
            + (empirical_remainder - theoretical_remainder).abs());
    Ok(CriticalReport {
        k,
        mu_alpha,
        samples,
        rows,
        empirical_remainder,
        theoretical_remainder,
        tv,
        regime,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementTest {
    pub from: f64,
    pub to: f64,
    pub mean: f64,
    pub expected_mean: f64,
    pub chi_square: ChiSquare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub first: usize,
    pub second: usize,
    pub correlation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessReport {
    pub grid: Vec<f64>,
    pub mu_alpha: f64,
    pub samples: usize,
    pub increments: Vec<IncrementTest>,
    pub correlations: Vec<CorrelationEntry>,
    /// KS of `mu_alpha (alpha - l_1)` against Exp(1).
    pub first_gap: Option<Ks>,
    /// KS of `mu_alpha (l_k - l_{k+1})` against Exp(1), `k = 1..K-1`.
    pub spacings: Vec<Ks>,
    pub regime: RegimeReport,
}

#[derive(Default)]
struct ProcessAcc {
    hists: Vec<Histogram>,
    pairs: Vec<PairMoments>,
    gaps: Vec<Vec<u64>>,
}

fn exp_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x).exp_m1()
    }
}

/// Checks the finite-dimensional laws of `P_t` against a rate-one Poisson
/// process, their pairwise correlations, and the exponential limits of the
/// scaled gaps between the `spacings_k` longest cycles.
pub fn poisson_process_battery(
    sampler: &Sampler,
    samples: usize,
    seed: u64,
    grid: &[f64],
    spacings_k: usize,
    thresholds: (f64, f64),
) -> Result<ProcessReport> {
    check_grid(grid)?;
    let model = sampler.model();
    let regime = require_regime(model, Regime::Vanishing, thresholds)?;
    let mu_alpha = regime.mu_alpha;
    let alpha = model.alpha();
    let points: Vec<f64> = grid.iter().copied().filter(|&t| t > 0.0).collect();
    let d_values: Vec<usize> = points.iter().map(|&t| d_t(alpha, mu_alpha, t)).collect();
    let m = points.len();
    let n_pairs = m * m.saturating_sub(1) / 2;
    let kk = spacings_k.max(1);

    let init = || ProcessAcc {
        hists: vec![Histogram::new(); m],
        pairs: vec![PairMoments::default(); n_pairs],
        gaps: vec![Vec::new(); kk],
    };
    let acc = sampler.fold_batch(
        samples,
        seed,
        init,
        |acc, _, t| {
            let mut prev = 0usize;
            let incs: Vec<i64> = d_values
                .iter()
                .map(|&d| {
                    let p = t.cycles_longer_than(d);
                    let inc = (p - prev) as i64;
                    prev = p;
                    inc
                })
                .collect();
            for (h, &v) in acc.hists.iter_mut().zip(&incs) {
                h.push(v as u64);
            }
            let mut idx = 0;
            for i in 0..m {
                for j in (i + 1)..m {
                    acc.pairs[idx].push(incs[i], incs[j]);
                    idx += 1;
                }
            }
            let ell = longest_k(t, kk + 1);
            acc.gaps[0].push((alpha - ell.get(1)) as u64);
            for k in 1..kk {
                acc.gaps[k].push((ell.get(k) - ell.get(k + 1)) as u64);
            }
        },
        |a, b| {
            for (x, y) in a.hists.iter_mut().zip(b.hists) {
                x.merge(y);
            }
            for (x, y) in a.pairs.iter_mut().zip(b.pairs) {
                x.merge(y);
            }
            for (x, mut y) in a.gaps.iter_mut().zip(b.gaps) {
                x.append(&mut y);
            }
        },
    );

    let mut increments = Vec::with_capacity(m);
    let mut from = 0.0;
    for (h, &to) in acc.hists.iter().zip(&points) {
        let total = h.total().max(1) as f64;
        let mean = h.iter().map(|(v, c)| v as f64 * c as f64).sum::<f64>() / total;
        increments.push(IncrementTest {
            from,
            to,
            mean,
            expected_mean: to - from,
            chi_square: chi_square_poisson(h, to - from),
        });
        from = to;
    }
    let mut correlations = Vec::with_capacity(n_pairs);
    let mut idx = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            correlations.push(CorrelationEntry {
                first: i,
                second: j,
                correlation: acc.pairs[idx].correlation(),
            });
            idx += 1;
        }
    }
    let scaled = |v: &[u64]| v.iter().map(|&g| g as f64 * mu_alpha).collect::<Vec<f64>>();
    let (first_gap, spacings) = if samples == 0 {
        (None, Vec::new())
    } else {
        let first = ks_continuous(&scaled(&acc.gaps[0]), exp_cdf);
        let rest = acc.gaps[1..]
            .iter()
            .map(|g| ks_continuous(&scaled(g), exp_cdf))
            .collect();
        (Some(first), rest)
    };
    Ok(ProcessReport {
        grid: grid.to_vec(),
        mu_alpha,
        samples,
        increments,
        correlations,
        first_gap,
        spacings,
        regime,
    })
}

/// Exact finite-`n` moments of the grid increments of `P_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactIncrements {
    pub mu_alpha: f64,
    /// `(from, to, E[P_to - P_from])`.
    pub means: Vec<(f64, f64, f64)>,
    pub correlations: Vec<CorrelationEntry>,
}

/// Means and pairwise correlations of `P_{t_k} - P_{t_{k-1}}` under the
/// conditioned measure itself, from factorial moments of the cycle counts.
pub fn exact_increment_moments(model: &ConstraintModel, grid: &[f64]) -> Result<ExactIncrements> {
    check_grid(grid)?;
    let sol = model_saddle(model)?;
    let alpha = model.alpha();
    let mu_alpha = mu(&sol, model.theta(), alpha)?;
    let table = MomentTable::new(model)?;
    let points: Vec<f64> = grid.iter().copied().filter(|&t| t > 0.0).collect();
    // increment k counts lengths in (d_k, d_{k-1}]
    let mut windows = Vec::with_capacity(points.len());
    let mut upper = alpha;
    for &t in &points {
        let d = d_t(alpha, mu_alpha, t);
        windows.push((d + 1, upper));
        upper = d;
    }
    let mean_of = |w: (usize, usize)| if w.0 > w.1 { 0.0 } else { table.window_mean(w) };
    let cov_of = |a: (usize, usize), b: (usize, usize)| {
        if a.0 > a.1 || b.0 > b.1 {
            0.0
        } else {
            table.window_covariance(a, b)
        }
    };
    let mut means = Vec::with_capacity(points.len());
    let mut from = 0.0;
    for (&to, &w) in points.iter().zip(&windows) {
        means.push((from, to, mean_of(w)));
        from = to;
    }
    let mut correlations = Vec::new();
    for i in 0..windows.len() {
        for j in (i + 1)..windows.len() {
            let v = cov_of(windows[i], windows[i]) * cov_of(windows[j], windows[j]);
            let correlation = if v > 0.0 { cov_of(windows[i], windows[j]) / v.sqrt() } else { 0.0 };
            correlations.push(CorrelationEntry {
                first: i,
                second: j,
                correlation,
            });
        }
    }
    Ok(ExactIncrements {
        mu_alpha,
        means,
        correlations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessEstimate {
    pub t1: f64,
    pub t: f64,
    pub t2: f64,
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of `E[(P_t - P_t1)^2 (P_t2 - P_t)^2]`.
pub fn tightness_moment_estimate(
    sampler: &Sampler,
    samples: usize,
    seed: u64,
    (t1, t, t2): (f64, f64, f64),
    thresholds: (f64, f64),
) -> Result<TightnessEstimate> {
    if !(0.0 <= t1 && t1 <= t && t <= t2 && t2.is_finite()) {
        return Err(Error::Domain(format!("need 0 <= t1 <= t <= t2, got ({t1}, {t}, {t2})")));
    }
    let model = sampler.model();
    let regime = require_regime(model, Regime::Vanishing, thresholds)?;
    let alpha = model.alpha();
    let d = [t1, t, t2].map(|s| d_t(alpha, regime.mu_alpha, s));
    let moments = sampler.fold_batch(
        samples,
        seed,
        Moments::default,
        |acc, _, ct| {
            let p = d.map(|di| ct.cycles_longer_than(di) as i64);
            let a = p[1] - p[0];
            let b = p[2] - p[1];
            acc.push(a * a * b * b);
        },
        |a, b| a.merge(b),
    );
    let (mean, std_error) = if moments.n == 0 {
        (0.0, 0.0)
    } else if moments.n == 1 {
        (moments.mean(), 0.0)
    } else {
        (moments.mean(), moments.std_error())
    };
    Ok(TightnessEstimate {
        t1,
        t,
        t2,
        mean,
        std_error,
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessScaling {
    /// Estimates in the order given, coarsest first.
    pub estimates: Vec<TightnessEstimate>,
    /// `C` fitted on the coarsest triple: estimate / (t2 - t1)^2.
    pub constant: f64,
    /// Whether every finer estimate stays below `C (t2 - t1)^2` plus two
    /// standard errors.
    pub bound_holds: bool,
}

/// Fits `C` on the first triple and checks `estimate <= C (t2 - t1)^2` on the
/// others, within two standard errors.
pub fn tightness_scaling_check(
    sampler: &Sampler,
    samples: usize,
    seed: u64,
    triples: &[(f64, f64, f64)],
    thresholds: (f64, f64),
) -> Result<TightnessScaling> {
    if triples.is_empty() {
        return Err(Error::Domain("at least one triple is needed".into()));
    }
    let estimates = triples
        .iter()
        .map(|&tr| tightness_moment_estimate(sampler, samples, seed, tr, thresholds))
        .collect::<Result<Vec<_>>>()?;
    let first = &estimates[0];
    let width = first.t2 - first.t1;
    let constant = if width > 0.0 { first.mean / (width * width) } else { 0.0 };
    let bound_holds = estimates[1..].iter().all(|e| {
        let w = e.t2 - e.t1;
        e.mean <= constant * w * w + 2.0 * (e.std_error + first.std_error * (w / width).powi(2))
    });
    Ok(TightnessScaling {
        estimates,
        constant,
        bound_holds,
    })
}

/// Sup distance between the exact law of `(C_m - mu_m) / sqrt(mu_m)` and the
/// standard normal distribution.
pub fn exact_standardized_ks(model: &ConstraintModel, m: usize) -> Result<f64> {
    let law = cycle_count_distribution(model, m)?;
    let root = law.mu.sqrt();
    let atoms: Vec<(f64, f64)> = law
        .pmf
        .iter()
        .enumerate()
        .map(|(c, &p)| ((c as f64 - law.mu) / root, p))
        .collect();
    Ok(ks_discrete_vs_continuous(&atoms, normal_cdf))
}

/// Largest `n` for which [`clt_battery`] adds the exact marginal law.
pub const CLT_EXACT_MAX_N: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltEntry {
    pub m: usize,
    pub mu_m: f64,
    pub ks: Ks,
    pub standardized_mean: f64,
    pub exact_ks: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub samples: usize,
    pub min_mu: f64,
    pub entries: Vec<CltEntry>,
    pub correlations: Vec<CorrelationEntry>,
}

/// Sampled laws of the standardised counts `C_m` against the standard
/// normal, plus pairwise correlations.
pub fn clt_battery(sampler: &Sampler, m_list: &[usize], samples: usize, seed: u64, min_mu: f64) -> Result<CltReport> {
    let model = sampler.model();
    let sol = model_saddle(model)?;
    let mut mus = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let mu_m = mu(&sol, model.theta(), m)?;
        if mu_m < min_mu {
            return Err(Error::Regime(format!(
                "mu_{m} = {mu_m:.4e} is below the CLT threshold {min_mu}"
            )));
        }
        mus.push(mu_m);
    }
    let k = m_list.len();
    let counts: Vec<Vec<u64>> = sampler.fold_batch(
        samples,
        seed,
        || vec![Vec::new(); k],
        |acc, _, t| {
            for (v, &m) in acc.iter_mut().zip(m_list) {
                v.push(t.count(m) as u64);
            }
        },
        |a, b| {
            for (x, mut y) in a.iter_mut().zip(b) {
                x.append(&mut y);
            }
        },
    );
    let mut entries = Vec::with_capacity(k);
    for ((&m, &mu_m), c) in m_list.iter().zip(&mus).zip(&counts) {
        let root = mu_m.sqrt();
        let z: Vec<f64> = c.iter().map(|&v| (v as f64 - mu_m) / root).collect();
        let standardized_mean = z.iter().sum::<f64>() / z.len().max(1) as f64;
        let exact_ks = if model.n() <= CLT_EXACT_MAX_N {
            Some(exact_standardized_ks(model, m)?)
        } else {
            None
        };
        entries.push(CltEntry {
            m,
            mu_m,
            ks: ks_continuous(&z, normal_cdf),
            standardized_mean,
            exact_ks,
        });
    }
    let mut correlations = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let mut p = PairMoments::default();
            for (&a, &b) in counts[i].iter().zip(&counts[j]) {
                p.push(a as i64, b as i64);
            }
            correlations.push(CorrelationEntry {
                first: m_list[i],
                second: m_list[j],
                correlation: p.correlation(),
            });
        }
    }
    Ok(CltReport {
        samples,
        min_mu,
        entries,
        correlations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub s: f64,
    pub step: f64,
    /// Relative gaps between analytic and central-difference `h', h'', h'''`.
    pub rel_errors: [f64; 3],
}

/// Compares the analytic derivatives of `h_n(s)` with central differences of
/// the next lower derivative.
pub fn clt_derivative_check(model: &ConstraintModel, m: usize, s: f64, step: f64) -> Result<DerivativeCheck> {
    let at = clt_h_calculus(model, m, s)?;
    let up = clt_h_calculus(model, m, s + step)?;
    let down = clt_h_calculus(model, m, s - step)?;
    let fd = |a: f64, b: f64| (a - b) / (2.0 * step);
    let rel = |analytic: f64, numeric: f64| (analytic - numeric).abs() / analytic.abs().max(f64::MIN_POSITIVE);
    Ok(DerivativeCheck {
        s,
        step,
        rel_errors: [
            rel(at.h1, fd(up.h, down.h)),
            rel(at.h2, fd(up.h1, down.h1)),
            rel(at.h3, fd(up.h2, down.h2)),
        ],
    })
}
