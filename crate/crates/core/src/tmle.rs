//! Targeted maximum likelihood for the time-averaged mean outcome under the
//! rule in force.
//!
//! The initial `Qbar` is updated along the logistic submodel
//! `logit Qbar_eps = logit Qbar + eps H` with clever covariate
//! `H = I(A = d(C)) / g(A | C)`. A single `eps` is fitted over all rows, the
//! estimate is the average of the updated `Qbar` at the rule arm, and the
//! interval uses the empirical second moment of the efficient influence curve.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dgp::{expit, logit};
use crate::error::{Error, Result};

pub const EPSILON_BOUND: f64 = 10.0;
const SCORE_TOL: f64 = 1e-10;

/// One time step as the estimator sees it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmleRow {
    pub y: f64,
    pub a: u8,
    /// Rule decision `d_t(C_o(t))` in force at assignment.
    pub d: u8,
    /// `g_t(a | C)` for the observed treatment.
    pub g_obs: f64,
    /// `g_t(d | C)` for the rule arm.
    pub g_rule: f64,
    /// Initial `Qbar(C, a)`.
    pub q_obs: f64,
    /// Initial `Qbar(C, d)`.
    pub q_rule: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmleInput {
    pub rows: Vec<TmleRow>,
    pub g_floor: f64,
}

impl TmleInput {
    pub fn new(rows: Vec<TmleRow>, g_floor: f64) -> Result<Self> {
        let input = Self { rows, g_floor };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::EmptyInput("TMLE needs at least one row".into()));
        }
        let (lo, hi) = (self.g_floor, 1.0 - self.g_floor);
        for r in &self.rows {
            for g in [r.g_obs, r.g_rule] {
                if !(lo..=hi).contains(&g) {
                    return Err(Error::Positivity { prob: g, floor: lo, ceil: hi });
                }
            }
            if r.a > 1 || r.d > 1 {
                return Err(Error::InvalidArgument("treatment and decision must be 0 or 1".into()));
            }
            if r.a == r.d && r.g_obs != r.g_rule {
                return Err(Error::InvalidArgument(
                    "g for the observed arm must equal g for the rule arm when a = d".into(),
                ));
            }
            for q in [r.q_obs, r.q_rule] {
                if !(q > 0.0 && q < 1.0) {
                    return Err(Error::InvalidArgument(format!("initial prediction {q} outside (0, 1)")));
                }
            }
            if !(0.0..=1.0).contains(&r.y) {
                return Err(Error::InvalidArgument(format!("outcome {} outside [0, 1]", r.y)));
            }
        }
        Ok(())
    }
}

/// `I(a = d) / g(a | C)`.
pub fn clever_covariate(a: u8, d: u8, g_of_a: f64, g_floor: f64) -> Result<f64> {
    if !(g_of_a >= g_floor) {
        return Err(Error::Positivity { prob: g_of_a, floor: g_floor, ceil: 1.0 - g_floor });
    }
    Ok(if a == d { 1.0 / g_of_a } else { 0.0 })
}

/// `expit(logit(q) + eps H)`.
pub fn fluctuate(q_init: f64, h: f64, epsilon: f64) -> f64 {
    if h == 0.0 || epsilon == 0.0 {
        return q_init;
    }
    expit(logit(q_init) + epsilon * h)
}

/// Efficient influence curve `I(a = d) / g(a | C) * (y - Qbar(C, a))`.
pub fn eic_value(y: f64, q_star_at_a: f64, a: u8, d: u8, g_of_a: f64, g_floor: f64) -> Result<f64> {
    Ok(clever_covariate(a, d, g_of_a, g_floor)? * (y - q_star_at_a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonFit {
    pub epsilon: f64,
    /// The score kept its sign over the whole interval and `eps` sits at a bound.
    pub clamped: bool,
    /// Every clever covariate was zero.
    pub degenerate: bool,
}

fn mean_score(rows: &[(f64, f64, f64)], epsilon: f64) -> (f64, f64) {
    let n = rows.len() as f64;
    let (mut score, mut info) = (0.0, 0.0);
    for &(y, q, h) in rows {
        if h == 0.0 {
            continue;
        }
        let p = fluctuate(q, h, epsilon);
        score += h * (y - p);
        info += h * h * p * (1.0 - p);
    }
    (score / n, info / n)
}

/// One-dimensional quasi-binomial MLE of `eps` with offset `logit(q_init)`
/// and covariate `H`, for rows `(y, q_init, H)`. Newton steps are kept inside
/// a bisection bracket; the mean score is driven below 1e-10.
pub fn solve_epsilon(rows: &[(f64, f64, f64)]) -> EpsilonFit {
    if rows.iter().all(|&(_, _, h)| h == 0.0) {
        return EpsilonFit { epsilon: 0.0, clamped: false, degenerate: true };
    }
    let interior = |epsilon| EpsilonFit { epsilon, clamped: false, degenerate: false };
    let (s0, _) = mean_score(rows, 0.0);
    if s0.abs() <= SCORE_TOL {
        return interior(0.0);
    }
    // The score is decreasing in eps.
    let (mut lo, mut hi) = if s0 > 0.0 { (0.0, EPSILON_BOUND) } else { (-EPSILON_BOUND, 0.0) };
    let (s_edge, _) = mean_score(rows, if s0 > 0.0 { hi } else { lo });
    if s0 > 0.0 && s_edge > 0.0 {
        return EpsilonFit { epsilon: EPSILON_BOUND, clamped: true, degenerate: false };
    }
    if s0 < 0.0 && s_edge < 0.0 {
        return EpsilonFit { epsilon: -EPSILON_BOUND, clamped: true, degenerate: false };
    }
    let mut eps = 0.0;
    for _ in 0..500 {
        let (s, info) = mean_score(rows, eps);
        if s.abs() <= SCORE_TOL {
            return interior(eps);
        }
        if s > 0.0 {
            lo = eps;
        } else {
            hi = eps;
        }
        let newton = if info > 0.0 { eps + s / info } else { f64::NAN };
        eps = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    interior(eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub psi_hat: f64,
    pub epsilon: f64,
    pub epsilon_clamped: bool,
    pub degenerate: bool,
    pub sigma2_hat: f64,
    pub ci: (f64, f64),
    /// Mean efficient influence curve after the update.
    pub score_residual: f64,
    pub n: usize,
    /// `(n, running mean of Var(D* | C))` at multiples of 100 rows and at `n`.
    pub cond_var_path: Vec<(usize, f64)>,
}

impl EstimateReport {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci.1 - self.ci.0)
    }

    /// Whether `|score_residual| <= 1e-8 * max(1, sigma_hat)`.
    pub fn score_solved(&self) -> bool {
        self.score_residual.abs() <= 1e-8 * self.sigma2_hat.sqrt().max(1.0)
    }
}

/// Standard normal quantile `q_{1 - alpha/2}`.
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf(1.0 - alpha / 2.0))
}

/// Updated predictions at both arms after fluctuation.
#[derive(Debug, Clone, PartialEq)]
pub struct Targeted {
    pub q_obs: Vec<f64>,
    pub q_rule: Vec<f64>,
    pub fit: EpsilonFit,
}

pub fn target(input: &TmleInput) -> Result<Targeted> {
    input.validate()?;
    let g_floor = input.g_floor;
    let h_obs = input
        .rows
        .iter()
        .map(|r| clever_covariate(r.a, r.d, r.g_obs, g_floor))
        .collect::<Result<Vec<_>>>()?;
    let triples: Vec<(f64, f64, f64)> =
        input.rows.iter().zip(&h_obs).map(|(r, &h)| (r.y, r.q_obs, h)).collect();
    let fit = solve_epsilon(&triples);
    let q_obs = triples.iter().map(|&(_, q, h)| fluctuate(q, h, fit.epsilon)).collect();
    let q_rule = input
        .rows
        .iter()
        .map(|r| fluctuate(r.q_rule, 1.0 / r.g_rule, fit.epsilon))
        .collect();
    Ok(Targeted { q_obs, q_rule, fit })
}

/// Running averages `(1/n) sum_{t <= n} Var(D* | C_o(t))` at each `n` in `grid`,
/// with `Var(D* | C) = Qbar*(C, d) (1 - Qbar*(C, d)) / g(d | C)`.
pub fn cond_var_path(input: &TmleInput, q_star_rule: &[f64], grid: &[usize]) -> Result<Vec<(usize, f64)>> {
    if q_star_rule.len() != input.rows.len() {
        return Err(Error::DimensionMismatch { expected: input.rows.len(), got: q_star_rule.len() });
    }
    let mut running = Vec::with_capacity(input.rows.len());
    let mut total = 0.0;
    for (r, &q) in input.rows.iter().zip(q_star_rule) {
        total += q * (1.0 - q) / r.g_rule;
        running.push(total);
    }
    grid.iter()
        .map(|&n| {
            if n == 0 || n > running.len() {
                Err(Error::InvalidArgument(format!("grid point {n} outside 1..={}", running.len())))
            } else {
                Ok((n, running[n - 1] / n as f64))
            }
        })
        .collect()
}

/// Default diagnostic grid: every 100 rows plus the last row.
pub fn default_grid(n: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (1..=n / 100).map(|k| 100 * k).collect();
    if grid.last() != Some(&n) && n > 0 {
        grid.push(n);
    }
    grid
}

/// Full TMLE at one checkpoint.
pub fn tmle_estimate(input: &TmleInput, alpha: f64) -> Result<EstimateReport> {
    let z = normal_quantile(alpha)?;
    let targeted = target(input)?;
    let n = input.rows.len();
    let nf = n as f64;
    let psi_hat = targeted.q_rule.iter().sum::<f64>() / nf;
    let eic = input
        .rows
        .iter()
        .zip(&targeted.q_obs)
        .map(|(r, &q)| eic_value(r.y, q, r.a, r.d, r.g_obs, input.g_floor))
        .collect::<Result<Vec<_>>>()?;
    let score_residual = eic.iter().sum::<f64>() / nf;
    let sigma2_hat = eic.iter().map(|d| d * d).sum::<f64>() / nf;
    let half = z * (sigma2_hat / nf).sqrt();
    let cond_var_path = cond_var_path(input, &targeted.q_rule, &default_grid(n))?;
    Ok(EstimateReport {
        psi_hat,
        epsilon: targeted.fit.epsilon,
        epsilon_clamped: targeted.fit.clamped,
        degenerate: targeted.fit.degenerate,
        sigma2_hat,
        ci: (psi_hat - half, psi_hat + half),
        score_residual,
        n,
        cond_var_path,
    })
}
