//! Saddle points of the tilt equations and the asymptotic formulas built on
//! them.
//!
//! The central equation is `n = sum_j q_j x^j` for a weight row `q`. Its
//! positive root `x` is found in the variable `y = ln x`, where the left side
//! becomes a log-sum-exp of affine functions: increasing and convex, so a
//! bracketed bisection followed by Newton from the right converges without
//! any assumption on the size of `x`.

use std::f64::consts::{E, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::egf_coefficients;
use crate::model::{ConstraintModel, WeightArray};
use crate::numerics::{log_sum_exp_f64, LogReal};

/// Relative residual required of every returned root.
pub const ROOT_TOLERANCE: f64 = 1e-12;

const BISECTION_WIDTH: f64 = 1e-3;
const MAX_ITERATIONS: usize = 400;

/// Solution of `target = sum_j q_j x^j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub x: f64,
    pub ln_x: f64,
    /// `sum_j q_j x^j / target - 1`.
    pub residual: f64,
    /// `lambda_p = sum_j q_j j^{p-1} x^j` for `p = 0..=3`.
    pub lambdas: [LogReal; 4],
    pub q: WeightArray,
    pub target: f64,
}

impl SaddleSolution {
    pub fn lambda(&self, p: usize) -> f64 {
        self.lambdas[p].value()
    }

    pub fn alpha(&self) -> usize {
        self.q.alpha()
    }
}

/// `ln sum_j exp(ln_q[j-1] + (p-1) ln j + j y)`.
pub(crate) fn ln_lambda(ln_q: &[f64], y: f64, p: i32) -> f64 {
    let terms: Vec<f64> = ln_q
        .iter()
        .enumerate()
        .map(|(i, &lq)| {
            let j = (i + 1) as f64;
            if lq == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                lq + f64::from(p - 1) * j.ln() + j * y
            }
        })
        .collect();
    log_sum_exp_f64(&terms)
}

/// Root `y = ln x` of `ln(sum_j q_j e^{j y}) = ln_target`.
pub(crate) fn solve_ln_tilt(ln_q: &[f64], ln_target: f64) -> Result<f64> {
    if !ln_q.iter().any(|v| v.is_finite()) {
        return Err(Error::DegenerateWeights("all weights are zero".into()));
    }
    if !ln_target.is_finite() {
        return Err(Error::Domain(format!("target must be positive, got ln={ln_target}")));
    }
    let f = |y: f64| ln_lambda(ln_q, y, 1) - ln_target;

    let f0 = f(0.0);
    if f0 == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = if f0 < 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    let mut expansions = 0;
    if f0 < 0.0 {
        while f(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > 2000 || !hi.is_finite() {
                return Err(Error::Numerical(format!("no upper bracket found (last {hi})")));
            }
        }
    } else {
        while f(lo) > 0.0 {
            hi = lo;
            lo *= 2.0;
            expansions += 1;
            if expansions > 2000 || !lo.is_finite() {
                return Err(Error::Numerical(format!("no lower bracket found (last {lo})")));
            }
        }
    }

    let mut iterations = 0;
    while hi - lo > BISECTION_WIDTH * lo.abs().max(hi.abs()) && iterations < MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }

    // Newton from the right end of the bracket; safeguarded by bisection.
    let mut y = hi;
    for _ in 0..MAX_ITERATIONS {
        let fy = f(y);
        if fy.abs() <= 1e-15 {
            return Ok(y);
        }
        if fy < 0.0 {
            lo = lo.max(y);
        } else {
            hi = hi.min(y);
        }
        let slope = (ln_lambda(ln_q, y, 2) - ln_lambda(ln_q, y, 1)).exp();
        let mut next = y - fy / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - y).abs();
        y = next;
        if step <= 4.0 * f64::EPSILON * y.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let residual = f(y).exp_m1();
    if residual.abs() > ROOT_TOLERANCE || !residual.is_finite() {
        return Err(Error::Numerical(format!(
            "tilt root residual {residual:e} exceeds tolerance; bracket [{lo}, {hi}]"
        )));
    }
    Ok(y)
}

fn solution_from_ln_x(q: &WeightArray, ln_q: &[f64], target: f64, ln_x: f64) -> SaddleSolution {
    let lambdas = [0, 1, 2, 3].map(|p| LogReal::from_ln(ln_lambda(ln_q, ln_x, p)));
    let residual = (lambdas[1].ln() - target.ln()).exp_m1();
    SaddleSolution {
        x: ln_x.exp(),
        ln_x,
        residual,
        lambdas,
        q: q.clone(),
        target,
    }
}

/// Solves `n = sum_j q_j x^j`.
pub fn solve_saddle(q: &WeightArray, n: usize) -> Result<SaddleSolution> {
    solve_saddle_target(q, n as f64)
}

/// Same as [`solve_saddle`] for a real right-hand side.
pub fn solve_saddle_target(q: &WeightArray, target: f64) -> Result<SaddleSolution> {
    if !(target > 0.0) {
        return Err(Error::Domain(format!("target must be positive, got {target}")));
    }
    let ln_q = q.ln_weights();
    let ln_x = solve_ln_tilt(&ln_q, target.ln())?;
    Ok(solution_from_ln_x(q, &ln_q, target, ln_x))
}

/// The saddle point `x_{n,alpha}` of a model.
pub fn model_saddle(model: &ConstraintModel) -> Result<SaddleSolution> {
    solve_saddle(&model.weights(), model.n())
}

/// `mu_m = theta x^m / m`.
pub fn mu(sol: &SaddleSolution, theta: f64, m: usize) -> Result<f64> {
    Ok(ln_mu(sol, theta, m)?.exp())
}

pub(crate) fn ln_mu(sol: &SaddleSolution, theta: f64, m: usize) -> Result<f64> {
    if m == 0 || m > sol.alpha() {
        return Err(Error::Constraint(format!(
            "cycle length {m} outside 1..={}",
            sol.alpha()
        )));
    }
    Ok(theta.ln() + m as f64 * sol.ln_x - (m as f64).ln())
}

/// Leading-order tilt for `c n = theta sum_{j<=alpha} x^j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticTilt {
    pub x: f64,
    /// `alpha ln x`.
    pub alpha_ln_x: f64,
    /// Predicted `lambda_2 ~ c n alpha / theta`.
    pub lambda2: f64,
}

pub fn asymptotic_x(c: f64, n: usize, alpha: usize, theta: f64) -> Result<AsymptoticTilt> {
    let a = c * n as f64 / (theta * alpha as f64);
    let inner = a * a.ln();
    if !(inner > 1.0) {
        return Err(Error::Regime(format!(
            "c n/(theta alpha) = {a} is too small for the leading-order tilt"
        )));
    }
    let alpha_ln_x = inner.ln();
    Ok(AsymptoticTilt {
        x: (alpha_ln_x / alpha as f64).exp(),
        alpha_ln_x,
        lambda2: c * n as f64 * alpha as f64 / theta,
    })
}

/// Both roots `0 < y0 <= y` of `theta e^{alpha y} = n y`.
pub fn solve_y(n: f64, alpha: usize, theta: f64) -> Result<(f64, f64)> {
    if !(n > 0.0 && theta > 0.0 && alpha >= 1) {
        return Err(Error::Domain("solve_y needs n, theta > 0 and alpha >= 1".into()));
    }
    let a = alpha as f64;
    // g(y) = ln(theta e^{alpha y} / (n y)); convex on y > 0 with minimum at 1/alpha
    let g = |y: f64| theta.ln() + a * y - n.ln() - y.ln();
    let y_star = 1.0 / a;
    let g_star = g(y_star);
    if g_star.abs() <= 1e-12 {
        return Ok((y_star, y_star));
    }
    if g_star > 0.0 {
        return Err(Error::NoRealRoots(format!(
            "n/(theta alpha) = {} is below e",
            n / (theta * a)
        )));
    }
    let bisect = |mut inside: f64, mut outside: f64| {
        // g(inside) < 0 < g(outside)
        for _ in 0..2000 {
            let mid = 0.5 * (inside + outside);
            if mid == inside || mid == outside {
                break;
            }
            if g(mid) < 0.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        // Newton polish; g'(y) = alpha - 1/y
        let mut y = 0.5 * (inside + outside);
        for _ in 0..4 {
            let d = a - 1.0 / y;
            if d == 0.0 {
                break;
            }
            let next = y - g(y) / d;
            if next.is_finite() && next > 0.0 && g(next).abs() <= g(y).abs() {
                y = next;
            }
        }
        y
    };

    let mut lo = 0.5 * y_star;
    while g(lo) <= 0.0 {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::Numerical("lower branch bracket underflow".into()));
        }
    }
    let mut hi = 2.0 * y_star;
    while g(hi) <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical("upper branch bracket overflow".into()));
        }
    }
    let y0 = bisect(y_star, lo);
    let y1 = bisect(y_star, hi);
    for y in [y0, y1] {
        let rel = g(y).exp_m1();
        if rel.abs() > ROOT_TOLERANCE {
            return Err(Error::Numerical(format!("solve_y residual {rel:e} at y={y}")));
        }
    }
    Ok((y0, y1))
}

/// Tilt for the equation restricted to lengths in `(b, alpha]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSaddle {
    /// Root of `n = theta sum_{j=b+1}^{alpha} x^j`.
    pub x: f64,
    pub residual: f64,
    /// `x_{n,alpha}` (all lengths up to alpha).
    pub x_full: f64,
    /// `x_{n,alpha-b}` (lengths up to alpha - b).
    pub x_reduced: f64,
    /// Whether `x_full <= x <= x_reduced` holds.
    pub sandwich_holds: bool,
}

pub fn solve_truncated_saddle(
    n: usize,
    alpha: usize,
    b: usize,
    theta: f64,
) -> Result<TruncatedSaddle> {
    if b >= alpha {
        return Err(Error::Constraint(format!("need b < alpha, got b={b}, alpha={alpha}")));
    }
    let mut q = vec![theta; alpha];
    for v in q.iter_mut().take(b) {
        *v = 0.0;
    }
    let truncated = solve_saddle(&WeightArray::new(q)?, n)?;
    let full = solve_saddle(&WeightArray::ewens(theta, alpha), n)?;
    let reduced = solve_saddle(&WeightArray::ewens(theta, alpha - b), n)?;
    let slack = 1e-12;
    let sandwich_holds = full.x <= truncated.x * (1.0 + slack)
        && truncated.x <= reduced.x * (1.0 + slack);
    Ok(TruncatedSaddle {
        x: truncated.x,
        residual: truncated.residual,
        x_full: full.x,
        x_reduced: reduced.x,
        sandwich_holds,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Diverging,
    Critical,
    Vanishing,
}

/// Thresholds used when a caller does not supply its own.
pub const DEFAULT_REGIME_THRESHOLDS: (f64, f64) = (0.1, 10.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// Exact `mu_alpha = theta x^alpha / alpha`.
    pub mu_alpha: f64,
    /// `n ln n / alpha^2`.
    pub approx: f64,
    pub classification: Regime,
    pub thresholds: (f64, f64),
    /// Always `"finite-n heuristic"`: the regimes are limits in `n`.
    pub note: String,
}

pub fn regime_report(model: &ConstraintModel, thresholds: (f64, f64)) -> Result<RegimeReport> {
    let (lo, hi) = thresholds;
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::Config(format!("invalid regime thresholds ({lo}, {hi})")));
    }
    let sol = model_saddle(model)?;
    let mu_alpha = mu(&sol, model.theta(), model.alpha())?;
    let n = model.n() as f64;
    let a = model.alpha() as f64;
    let classification = if mu_alpha < lo {
        Regime::Vanishing
    } else if mu_alpha > hi {
        Regime::Diverging
    } else {
        Regime::Critical
    };
    Ok(RegimeReport {
        mu_alpha,
        approx: n * n.ln() / (a * a),
        classification,
        thresholds,
        note: "finite-n heuristic".into(),
    })
}

/// A perturbation `f` evaluated on the complex plane.
pub trait ProbeFunction: Sync {
    fn value(&self, z: Complex64) -> Complex64;
    fn derivative(&self, z: Complex64) -> Complex64;
}

/// `f(z) = c`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantProbe(pub f64);

impl ProbeFunction for ConstantProbe {
    fn value(&self, _z: Complex64) -> Complex64 {
        Complex64::new(self.0, 0.0)
    }
    fn derivative(&self, _z: Complex64) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
}

/// `f(z) = z^r`.
#[derive(Clone, Copy, Debug)]
pub struct MonomialProbe(pub u32);

impl ProbeFunction for MonomialProbe {
    fn value(&self, z: Complex64) -> Complex64 {
        z.powu(self.0)
    }
    fn derivative(&self, z: Complex64) -> Complex64 {
        if self.0 == 0 {
            return Complex64::new(0.0, 0.0);
        }
        z.powu(self.0 - 1) * f64::from(self.0)
    }
}

/// `f(z) = exp(sum_j a_j z^j)` with `coefficients[j-1] = a_j`.
#[derive(Clone, Debug)]
pub struct ExpPolynomialProbe {
    pub coefficients: Vec<f64>,
}

impl ExpPolynomialProbe {
    fn exponent(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        let mut zj = Complex64::new(1.0, 0.0);
        for (i, &a) in self.coefficients.iter().enumerate() {
            let j = (i + 1) as f64;
            dp += zj * (a * j);
            zj *= z;
            p += zj * a;
        }
        (p, dp)
    }
}

impl ProbeFunction for ExpPolynomialProbe {
    fn value(&self, z: Complex64) -> Complex64 {
        self.exponent(z).0.exp()
    }
    fn derivative(&self, z: Complex64) -> Complex64 {
        let (p, dp) = self.exponent(z);
        p.exp() * dp
    }
}

const PROBE_ANGLES: usize = 129;

/// Finite-`n` quantities behind the admissibility conditions. No verdict is
/// given: admissibility is a statement about `n -> infinity`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub x: f64,
    /// `alpha ln x / ln(n/alpha)`.
    pub saddle_ratio: f64,
    /// `lambda_2 / (n alpha)`.
    pub lambda2_ratio: f64,
    /// `min_{j >= tail_start} q_j`.
    pub min_tail_weight: f64,
    /// `|||f|||_n`.
    pub probe_norm: f64,
}

pub fn admissibility_report(
    q: &WeightArray,
    n: usize,
    tail_start: usize,
    probe: &dyn ProbeFunction,
) -> Result<AdmissibilityReport> {
    let sol = solve_saddle(q, n)?;
    let alpha = q.alpha() as f64;
    let nf = n as f64;
    let min_tail_weight = q
        .as_slice()
        .iter()
        .skip(tail_start.saturating_sub(1))
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(AdmissibilityReport {
        x: sol.x,
        saddle_ratio: alpha * sol.ln_x / (nf / alpha).ln(),
        lambda2_ratio: sol.lambda(2) / (nf * alpha),
        min_tail_weight,
        probe_norm: probe_norm(probe, sol.x, n, q.alpha()),
    })
}

/// `delta sup_{|phi| <= delta} |f'(x e^{i phi})| / |f(x)|` with
/// `delta = n^{-5/12} alpha^{-7/12}`, the supremum taken over a uniform grid.
pub fn probe_norm(probe: &dyn ProbeFunction, x: f64, n: usize, alpha: usize) -> f64 {
    let delta = (n as f64).powf(-5.0 / 12.0) * (alpha as f64).powf(-7.0 / 12.0);
    let base = probe.value(Complex64::new(x, 0.0)).norm();
    let sup = (0..PROBE_ANGLES)
        .map(|i| {
            let phi = -delta + 2.0 * delta * i as f64 / (PROBE_ANGLES - 1) as f64;
            probe.derivative(Complex64::from_polar(x, phi)).norm()
        })
        .fold(0.0_f64, f64::max);
    delta * sup / base
}

/// Leading saddle-point term `f(x) e^{lambda_0} / (x^n sqrt(2 pi lambda_2))`
/// for `[z^n] f(z) exp(sum_j q_j z^j / j)`.
pub fn saddle_point_coefficient(
    q: &WeightArray,
    n: usize,
    f: &dyn ProbeFunction,
) -> Result<LogReal> {
    if q.alpha() >= n {
        return Err(Error::Regime(format!(
            "alpha = {} >= n = {n}: outside the bounded-cycle regime",
            q.alpha()
        )));
    }
    let sol = solve_saddle(q, n)?;
    saddle_point_from_solution(&sol, n, f)
}

fn saddle_point_from_solution(
    sol: &SaddleSolution,
    n: usize,
    f: &dyn ProbeFunction,
) -> Result<LogReal> {
    let lambda2 = sol.lambda(2);
    if lambda2 == 0.0 {
        return Err(Error::DegenerateWeights("lambda_2 vanishes".into()));
    }
    let fx = f.value(Complex64::new(sol.x, 0.0));
    if !(fx.re > 0.0) || fx.im.abs() > 1e-12 * fx.re {
        return Err(Error::Domain("probe must be real and positive at the saddle".into()));
    }
    let ln = fx.re.ln() + sol.lambda(0) - n as f64 * sol.ln_x
        - 0.5 * (2.0 * PI).ln()
        - 0.5 * sol.lambdas[2].ln();
    Ok(LogReal::from_ln(ln))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MgfMode {
    Exact,
    Approx,
}

/// `E[exp(s C_m)]` under the conditioned measure.
///
/// Exact mode divides two coefficient runs that share the saddle tilt of the
/// unperturbed row; approximate mode divides the two saddle-point leading
/// terms.
pub fn mgf_cm(model: &ConstraintModel, m: usize, s: f64, mode: MgfMode) -> Result<f64> {
    if m == 0 || m > model.alpha() {
        return Err(Error::Constraint(format!(
            "cycle length {m} outside 1..={}",
            model.alpha()
        )));
    }
    let q = model.weights();
    let perturbed = q.with_entry(m, model.theta() * s.exp())?;
    let n = model.n();
    match mode {
        MgfMode::Exact => {
            let sol = model_saddle(model)?;
            let base = egf_coefficients(&q, n, Some(sol.x))?;
            let num = egf_coefficients(&perturbed, n, Some(sol.x))?;
            Ok((num.ln_tilted(n) - base.ln_tilted(n)).exp())
        }
        MgfMode::Approx => {
            if s < 0.0 {
                return Err(Error::Domain(format!("approx mode needs s >= 0, got {s}")));
            }
            let one = ConstantProbe(1.0);
            let num = saddle_point_coefficient(&perturbed, n, &one)?;
            let den = saddle_point_coefficient(&q, n, &one)?;
            Ok((num.ln() - den.ln()).exp())
        }
    }
}

/// `h_n(s)` and its first three derivatives for the CLT of `C_m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HCalculus {
    pub s: f64,
    pub mu_m: f64,
    /// `x_{n,q}(s)` for the row with `q_m = theta exp(s / sqrt(mu_m))`.
    pub x: f64,
    /// `x'(s) / x(s)`.
    pub dlnx_ds: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
}

/// Evaluates `h_n(s) = lambda_0(s) - n ln x(s)` and its derivatives.
pub fn clt_h_calculus(model: &ConstraintModel, m: usize, s: f64) -> Result<HCalculus> {
    if m == 0 || m > model.alpha() {
        return Err(Error::Constraint(format!(
            "cycle length {m} outside 1..={}",
            model.alpha()
        )));
    }
    let theta = model.theta();
    let base = model_saddle(model)?;
    let mu_m = mu(&base, theta, m)?;
    let root_mu = mu_m.sqrt();
    let sigma = s / root_mu;
    let q = model.weights().with_entry(m, theta * sigma.exp())?;
    let sol = solve_saddle(&q, model.n()).map_err(|e| match e {
        Error::Numerical(msg) => Error::Numerical(format!("CLT tilt at s={s}: {msg}")),
        other => other,
    })?;
    let n = model.n() as f64;
    let mf = m as f64;
    let lambda2 = sol.lambda(2);
    let lambda3 = sol.lambda(3);
    let h = sol.lambda(0) - n * sol.ln_x;
    let h1 = (theta.ln() + sigma + mf * sol.ln_x - mf.ln()).exp() / root_mu;
    let dlnx_ds = -mf * h1 / lambda2;
    let h2 = h1 / root_mu - mf * mf * h1 * h1 / lambda2;
    let dlambda2 = mf * mf * h1 + lambda3 * dlnx_ds;
    let h3 = h2 / root_mu - 2.0 * mf * mf * h1 * h2 / lambda2
        + mf * mf * h1 * h1 * dlambda2 / (lambda2 * lambda2);
    Ok(HCalculus {
        s,
        mu_m,
        x: sol.x,
        dlnx_ds,
        lambda2,
        lambda3,
        h,
        h1,
        h2,
        h3,
    })
}

/// `true` when `n/(theta alpha) > e`, the domain of [`solve_y`].
pub fn has_two_y_roots(n: f64, alpha: usize, theta: f64) -> bool {
    n / (theta * alpha as f64) > E
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain bisection on `sum q_j x^j - target`, independent of the solver.
    fn bisection_oracle(q: &[f64], target: f64) -> f64 {
        let f = |x: f64| q.iter().enumerate().map(|(i, v)| v * x.powi(i as i32 + 1)).sum::<f64>() - target;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn saddle_examples() {
        let theta = 2.5;
        let sol = solve_saddle(&WeightArray::ewens(theta, 1), 40).unwrap();
        assert!((sol.x - 40.0 / theta).abs() < 1e-12 * 16.0);

        let sol = solve_saddle(&WeightArray::new(vec![1.0, 1.0]).unwrap(), 6).unwrap();
        assert!((sol.x - 2.0).abs() < 1e-12);

        let q = vec![1.0; 10];
        let oracle = bisection_oracle(&q, 100.0);
        let sol = solve_saddle(&WeightArray::new(q).unwrap(), 100).unwrap();
        assert!((sol.x - oracle).abs() < 1e-12);
        assert!((sol.x - 1.4041).abs() < 1e-3);
        assert!(sol.residual.abs() <= ROOT_TOLERANCE);
    }

    #[test]
    fn small_n_gives_tilt_below_one() {
        let sol = solve_saddle(&WeightArray::ewens(1.0, 3), 2).unwrap();
        assert!(sol.x < 1.0);
        assert!(sol.residual.abs() <= ROOT_TOLERANCE);
    }

    #[test]
    fn lambda_identities() {
        let q = WeightArray::ewens(1.5, 40);
        let sol = solve_saddle(&q, 1000).unwrap();
        assert!((sol.lambda(1) / 1000.0 - 1.0).abs() < 1e-12);
        for p in 1..=3 {
            let bound = 1000.0 * 40f64.powi(p as i32 - 1);
            assert!(sol.lambda(p) <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn degenerate_weights_rejected() {
        assert!(matches!(
            WeightArray::new(vec![0.0, 0.0]),
            Err(Error::DegenerateWeights(_))
        ));
    }

    #[test]
    fn mu_examples() {
        let sol = solve_saddle(&WeightArray::ewens(1.0, 2), 6).unwrap();
        assert!((mu(&sol, 1.0, 2).unwrap() - 2.0).abs() < 1e-12);
        assert!((mu(&sol, 1.0, 1).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(mu(&sol, 1.0, 3), Err(Error::Constraint(_))));

        let oracle = bisection_oracle(&[1.0; 10], 100.0);
        let sol = solve_saddle(&WeightArray::ewens(1.0, 10), 100).unwrap();
        let m10 = mu(&sol, 1.0, 10).unwrap();
        assert!((m10 - oracle.powi(10) / 10.0).abs() < 1e-9);
        assert!((m10 - 2.98).abs() < 0.01);
    }

    #[test]
    fn asymptotic_x_examples() {
        let a = asymptotic_x(1.0, 1_000_000, 1000, 1.0).unwrap();
        let direct = (1000f64 * 1000f64.ln()).ln();
        assert!((a.alpha_ln_x - direct).abs() < 1e-12);
        assert!((direct - 8.8404).abs() < 1e-4);
        assert!((a.x - 1.00888).abs() < 1e-5);
        let b = asymptotic_x(2.0, 1_000_000, 1000, 1.0).unwrap();
        assert!(b.x > a.x);
        assert!(matches!(asymptotic_x(1.0, 10, 10, 1.0), Err(Error::Regime(_))));
    }

    #[test]
    fn asymptotic_x_tracks_exact_root() {
        let mut last = f64::INFINITY;
        for n in [1_000usize, 10_000, 100_000] {
            let alpha = (n as f64).powf(0.6).floor() as usize;
            let exact = solve_saddle(&WeightArray::ewens(1.0, alpha), n).unwrap();
            let approx = asymptotic_x(1.0, n, alpha, 1.0).unwrap();
            let gap = (exact.x / approx.x - 1.0).abs();
            assert!(gap < last, "n={n}: {gap} vs {last}");
            last = gap;
        }
    }

    #[test]
    fn solve_y_examples() {
        let (y0, y1) = solve_y(E, 1, 1.0).unwrap();
        assert!((y0 - 1.0).abs() < 1e-6 && (y1 - 1.0).abs() < 1e-6);

        // bisection on e^y - 100 y, upper branch
        let f = |y: f64| y.exp() - 100.0 * y;
        let (mut lo, mut hi) = (1.0, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (y0, y1) = solve_y(100.0, 1, 1.0).unwrap();
        assert!((y1 - lo).abs() < 1e-10);
        assert!((y1 - 6.47).abs() < 0.01);
        assert!(y0 > 0.0 && y0 < 1.0);
        assert!((y0.exp() / (100.0 * y0) - 1.0).abs() < 1e-12);

        // alpha y solves t = ln(1000 t); the leading term ln(A ln A) = 8.84
        // misses the ln(1 + ln ln A / ln A) correction.
        let (_, y) = solve_y(1e6, 1000, 1.0).unwrap();
        let t = 1000.0 * y;
        assert!((t - (1000.0 * t).ln()).abs() < 1e-10);
        assert!((t - 9.118).abs() < 1e-3);
        let lead = (1000f64 * 1000f64.ln()).ln();
        let second = (1.0 + 1000f64.ln().ln() / 1000f64.ln()).ln();
        assert!((t - lead - second).abs() < 0.05);

        assert!(matches!(solve_y(2.0, 1, 1.0), Err(Error::NoRealRoots(_))));
    }

    #[test]
    fn truncated_saddle() {
        let t = solve_truncated_saddle(100, 10, 0, 1.0).unwrap();
        let s = solve_saddle(&WeightArray::ewens(1.0, 10), 100).unwrap();
        assert_eq!(t.x, s.x);

        let t = solve_truncated_saddle(100, 10, 2, 1.0).unwrap();
        let oracle = bisection_oracle(&[0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 100.0);
        assert!((t.x - oracle).abs() < 1e-12);
        assert!(t.sandwich_holds);
        assert!(t.x_full <= t.x && t.x <= t.x_reduced);
        assert!((t.x - t.x_full) * 10.0 < 1.0);
        assert!(matches!(
            solve_truncated_saddle(100, 10, 10, 1.0),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn regime_examples() {
        let m = ConstraintModel::new(100_000, 100, 1.0).unwrap();
        let r = regime_report(&m, (0.1, 10.0)).unwrap();
        assert_eq!(r.classification, Regime::Diverging);
        assert!((r.approx - 115.13).abs() < 0.01);
        let oracle = bisection_oracle(&[1.0; 100], 1e5);
        assert!((r.mu_alpha - oracle.powi(100) / 100.0).abs() < 1e-6 * r.mu_alpha);

        let m = ConstraintModel::from_beta(100_000, 0.85, 1.0).unwrap();
        let r = regime_report(&m, (0.1, 10.0)).unwrap();
        assert_eq!(r.classification, Regime::Vanishing);
        assert!(r.mu_alpha < 4e-3);
        assert!(regime_report(&m, (1.0, 0.5)).is_err());
    }

    #[test]
    fn regime_ratio_is_bounded_on_a_grid() {
        for n in [1_000usize, 10_000, 100_000, 1_000_000] {
            for beta in [0.4, 0.5, 0.6, 0.7] {
                let m = ConstraintModel::from_beta(n, beta, 1.0).unwrap();
                let r = regime_report(&m, DEFAULT_REGIME_THRESHOLDS).unwrap();
                let ratio = r.mu_alpha / r.approx;
                assert!((0.05..=2.0).contains(&ratio), "n={n} beta={beta}: {ratio}");
            }
        }
    }

    #[test]
    fn probe_norms() {
        let q = WeightArray::ewens(1.0, 63);
        let r = admissibility_report(&q, 1000, 32, &ConstantProbe(1.0)).unwrap();
        assert_eq!(r.probe_norm, 0.0);
        assert_eq!(r.min_tail_weight, 1.0);

        let n = 10_000usize;
        let alpha = 251;
        let q = WeightArray::ewens(1.0, alpha);
        let r = admissibility_report(&q, n, 1, &MonomialProbe(3)).unwrap();
        let delta = (n as f64).powf(-5.0 / 12.0) * (alpha as f64).powf(-7.0 / 12.0);
        let expected = 3.0 * delta / r.x;
        assert!((r.probe_norm / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda2_ratio_band() {
        for n in [1_000usize, 10_000, 100_000] {
            let alpha = (n as f64).powf(0.6).floor() as usize;
            let r = admissibility_report(&WeightArray::ewens(1.0, alpha), n, alpha / 2, &ConstantProbe(1.0))
                .unwrap();
            assert!((0.3..=3.0).contains(&r.lambda2_ratio), "n={n}: {}", r.lambda2_ratio);
            assert!(r.saddle_ratio > 0.0);
        }
    }

    #[test]
    fn saddle_point_refuses_alpha_at_least_n() {
        let q = WeightArray::ewens(1.0, 10);
        assert!(matches!(
            saddle_point_coefficient(&q, 10, &ConstantProbe(1.0)),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn mgf_examples() {
        let m = ConstraintModel::new(4, 2, 1.0).unwrap();
        assert!((mgf_cm(&m, 2, 0.0, MgfMode::Exact).unwrap() - 1.0).abs() < 1e-14);
        let e = E;
        let expected = (1.0 + 6.0 * e + 3.0 * e * e) / 10.0;
        assert!((mgf_cm(&m, 2, 1.0, MgfMode::Exact).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 3.9477).abs() < 1e-4);

        let m = ConstraintModel::new(4, 4, 1.0).unwrap();
        let got = mgf_cm(&m, 4, 1.0, MgfMode::Exact).unwrap();
        assert!((got - (1.0 + (e - 1.0) / 4.0)).abs() < 1e-12);

        let m = ConstraintModel::new(1000, 63, 1.0).unwrap();
        assert!((mgf_cm(&m, 10, 0.0, MgfMode::Approx).unwrap() - 1.0).abs() < 1e-14);
        assert!(mgf_cm(&m, 10, -0.1, MgfMode::Approx).is_err());
        assert!(matches!(mgf_cm(&m, 64, 0.1, MgfMode::Exact), Err(Error::Constraint(_))));
    }

    #[test]
    fn h_calculus_at_zero() {
        let model = ConstraintModel::new(10_000, 100, 1.0).unwrap();
        let m = 50;
        let hc = clt_h_calculus(&model, m, 0.0).unwrap();
        assert!((hc.h1 - hc.mu_m.sqrt()).abs() < 1e-12 * hc.h1);
        let expected = 1.0 - (m * m) as f64 * hc.mu_m / hc.lambda2;
        assert!((hc.h2 - expected).abs() < 1e-12);
    }
}
