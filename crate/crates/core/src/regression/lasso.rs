//! L1-budgeted regression of blip pseudo-outcomes on zero-order indicator
//! basis functions (highly adaptive lasso restricted to the blip).
//!
//! Every non-empty subset `s` of context coordinates and every observed
//! context `c~` yields a basis function `I(c_s >= c~_s)`. The fit minimizes
//! mean squared error subject to `|intercept| + sum |beta| <= M`, solved as a
//! Lagrangian lasso by coordinate descent with the penalty bisected until the
//! L1 norm meets the budget.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `c -> I(c_j >= knot_j for every j in subset)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFunction {
    pub subset: Vec<usize>,
    pub knot: Vec<f64>,
}

impl BasisFunction {
    pub fn eval(&self, features: &[f64]) -> bool {
        self.subset.iter().zip(&self.knot).all(|(&j, &k)| features[j] >= k)
    }
}

/// All `(2^d - 1) * N` indicator functions knotted at the observed contexts,
/// ordered by subset and then by observation.
pub fn enumerate_basis(contexts: &[Vec<f64>]) -> Vec<BasisFunction> {
    let Some(d) = contexts.first().map(Vec::len) else {
        return Vec::new();
    };
    let mut basis = Vec::with_capacity(((1usize << d) - 1) * contexts.len());
    for mask in 1usize..(1 << d) {
        let subset: Vec<usize> = (0..d).filter(|j| mask & (1 << j) != 0).collect();
        for c in contexts {
            basis.push(BasisFunction {
                knot: subset.iter().map(|&j| c[j]).collect(),
                subset: subset.clone(),
            });
        }
    }
    basis
}

fn support(bf: &BasisFunction, contexts: &[Vec<f64>]) -> Vec<u32> {
    contexts
        .iter()
        .enumerate()
        .filter(|(_, c)| bf.eval(c))
        .map(|(i, _)| i as u32)
        .collect()
}

/// The enumerated basis with columns that duplicate the intercept or an
/// earlier column (on these contexts) removed. Returns each kept function
/// with the rows where it equals one.
pub fn unique_basis(contexts: &[Vec<f64>]) -> (Vec<BasisFunction>, Vec<Vec<u32>>) {
    let n = contexts.len();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut kept = Vec::new();
    let mut supports = Vec::new();
    for bf in enumerate_basis(contexts) {
        let s = support(&bf, contexts);
        if s.len() == n || s.is_empty() || !seen.insert(s.clone()) {
            continue;
        }
        kept.push(bf);
        supports.push(s);
    }
    (kept, supports)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Coordinate descent stops once no coordinate moves the gradient by more than this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Allowed gap between the achieved L1 norm and the budget.
    pub budget_tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_sweeps: 100_000, budget_tol: 1e-6 }
    }
}

/// Indicator design with an implicit leading intercept column.
struct Design {
    n: usize,
    cols: Vec<Vec<u32>>,
    scale: Vec<f64>,
}

impl Design {
    fn new(n: usize, supports: Vec<Vec<u32>>) -> Self {
        let mut cols = Vec::with_capacity(supports.len() + 1);
        cols.push((0..n as u32).collect());
        cols.extend(supports);
        let scale = cols.iter().map(|c| c.len() as f64 / n as f64).collect();
        Self { n, cols, scale }
    }

    fn corr(&self, j: usize, r: &[f64]) -> f64 {
        self.cols[j].iter().map(|&i| r[i as usize]).sum::<f64>() / self.n as f64
    }
}

fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

fn sweep(design: &Design, lambda: f64, beta: &mut [f64], resid: &mut [f64], only_active: bool) -> f64 {
    let mut max_move: f64 = 0.0;
    for j in 0..design.cols.len() {
        let a = design.scale[j];
        if a == 0.0 || (only_active && beta[j] == 0.0) {
            continue;
        }
        let rho = design.corr(j, resid) + a * beta[j];
        let new = soft_threshold(rho, lambda) / a;
        let delta = new - beta[j];
        if delta != 0.0 {
            for &i in &design.cols[j] {
                resid[i as usize] -= delta;
            }
            beta[j] = new;
            max_move = max_move.max(delta.abs() * a);
        }
    }
    max_move
}

/// Coordinate descent for `(1/2n)|y - X b|^2 + lambda |b|_1`, warm-started
/// from `beta` with matching residuals `resid`.
fn coordinate_descent(design: &Design, lambda: f64, beta: &mut [f64], resid: &mut [f64], opts: &LassoOptions) {
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        if sweep(design, lambda, beta, resid, false) < opts.tol {
            return;
        }
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            if sweep(design, lambda, beta, resid, true) < opts.tol {
                break;
            }
        }
    }
}

fn l1(beta: &[f64]) -> f64 {
    beta.iter().map(|b| b.abs()).sum()
}

struct BudgetFit {
    beta: Vec<f64>,
    penalty: f64,
}

fn solve_budget(design: &Design, y: &[f64], m: f64, opts: &LassoOptions) -> BudgetFit {
    let p = design.cols.len();
    let lambda_max = (0..p).map(|j| design.corr(j, y).abs()).fold(0.0, f64::max);
    if m == 0.0 || lambda_max == 0.0 {
        return BudgetFit { beta: vec![0.0; p], penalty: lambda_max };
    }
    let mut beta = vec![0.0; p];
    let mut resid = y.to_vec();
    coordinate_descent(design, 0.0, &mut beta, &mut resid, opts);
    if l1(&beta) <= m {
        return BudgetFit { beta, penalty: 0.0 };
    }
    let (mut lo, mut hi) = (0.0, lambda_max);
    let mut best = BudgetFit { beta: vec![0.0; p], penalty: lambda_max };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        coordinate_descent(design, mid, &mut beta, &mut resid, opts);
        let norm = l1(&beta);
        if norm <= m && m - norm <= opts.budget_tol {
            return BudgetFit { beta, penalty: mid };
        }
        if norm > m {
            lo = mid;
        } else {
            hi = mid;
            best = BudgetFit { beta: beta.clone(), penalty: mid };
        }
        if hi - lo <= 1e-15 * lambda_max {
            break;
        }
    }
    best
}

/// Fitted blip `intercept + sum beta_k phi_k(c)`; only non-zero terms are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlipModel {
    pub intercept: f64,
    pub terms: Vec<(BasisFunction, f64)>,
    pub l1_bound: f64,
    /// Lagrangian penalty at which the budget is met.
    pub penalty: f64,
}

impl BlipModel {
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.intercept
            + self
                .terms
                .iter()
                .filter(|(bf, _)| bf.eval(features))
                .map(|(_, b)| b)
                .sum::<f64>()
    }

    pub fn l1_norm(&self) -> f64 {
        self.intercept.abs() + self.terms.iter().map(|(_, b)| b.abs()).sum::<f64>()
    }
}

fn validate_rows(rows: &[(Vec<f64>, f64)], m: f64) -> Result<()> {
    if m.is_nan() || m < 0.0 {
        return Err(Error::InvalidArgument(format!("L1 budget must be non-negative, got {m}")));
    }
    let Some((first, _)) = rows.first() else {
        return Err(Error::EmptyInput("blip lasso needs at least one row".into()));
    };
    if let Some((c, _)) = rows.iter().find(|(c, _)| c.len() != first.len()) {
        return Err(Error::DimensionMismatch { expected: first.len(), got: c.len() });
    }
    if rows.iter().any(|(c, y)| !y.is_finite() || c.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("blip lasso rows must be finite".into()));
    }
    Ok(())
}

fn fit_on_basis(
    rows: &[(Vec<f64>, f64)],
    basis: Vec<BasisFunction>,
    supports: Vec<Vec<u32>>,
    m: f64,
    opts: &LassoOptions,
) -> BlipModel {
    let y: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
    let design = Design::new(rows.len(), supports);
    let fit = solve_budget(&design, &y, m, opts);
    BlipModel {
        intercept: fit.beta[0],
        terms: basis
            .into_iter()
            .zip(fit.beta[1..].iter().copied())
            .filter(|(_, b)| *b != 0.0)
            .collect(),
        l1_bound: m,
        penalty: fit.penalty,
    }
}

/// Fits the L1-budgeted indicator-basis regression of `rows = (context, pseudo_outcome)`.
pub fn fit_blip_lasso(rows: &[(Vec<f64>, f64)], m: f64, opts: &LassoOptions) -> Result<BlipModel> {
    validate_rows(rows, m)?;
    let contexts: Vec<Vec<f64>> = rows.iter().map(|(c, _)| c.clone()).collect();
    let (basis, supports) = unique_basis(&contexts);
    Ok(fit_on_basis(rows, basis, supports, m, opts))
}

/// Pointwise bootstrap band around a [`BlipModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlipCI {
    pub basis: Vec<BasisFunction>,
    /// One `(intercept, coefficients...)` vector per bootstrap replicate.
    pub replicates: Vec<Vec<f64>>,
    pub level: f64,
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BlipCI {
    /// Blip value of every replicate at `features`.
    pub fn replicate_values(&self, features: &[f64]) -> Vec<f64> {
        let active: Vec<bool> = self.basis.iter().map(|bf| bf.eval(features)).collect();
        self.replicates
            .iter()
            .map(|b| {
                b[0] + b[1..]
                    .iter()
                    .zip(&active)
                    .filter(|(_, on)| **on)
                    .map(|(c, _)| c)
                    .sum::<f64>()
            })
            .collect()
    }

    /// Half the spread between the lower and upper percentiles at `level`.
    pub fn half_width(&self, features: &[f64]) -> f64 {
        let mut values = self.replicate_values(features);
        values.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - self.level);
        let spread = quantile_sorted(&values, 1.0 - tail) - quantile_sorted(&values, tail);
        0.5 * spread.max(0.0)
    }
}

/// Nonparametric bootstrap with the basis fixed to the terms `fit` selected,
/// refitting under the same L1 budget.
pub fn bootstrap_blip_ci<R: Rng + ?Sized>(
    fit: &BlipModel,
    rows: &[(Vec<f64>, f64)],
    n_boot: usize,
    level: f64,
    opts: &LassoOptions,
    rng: &mut R,
) -> Result<BlipCI> {
    if n_boot < 2 {
        return Err(Error::InvalidArgument(format!("bootstrap needs at least 2 replicates, got {n_boot}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level must lie in (0, 1), got {level}")));
    }
    validate_rows(rows, fit.l1_bound)?;
    let basis: Vec<BasisFunction> = fit.terms.iter().map(|(bf, _)| bf.clone()).collect();
    let n = rows.len();
    let mut replicates = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let sample: Vec<(Vec<f64>, f64)> =
            (0..n).map(|_| rows[rng.random_range(0..n)].clone()).collect();
        let supports: Vec<Vec<u32>> = basis
            .iter()
            .map(|bf| {
                sample
                    .iter()
                    .enumerate()
                    .filter(|(_, (c, _))| bf.eval(c))
                    .map(|(i, _)| i as u32)
                    .collect()
            })
            .collect();
        let y: Vec<f64> = sample.iter().map(|(_, y)| *y).collect();
        let design = Design::new(n, supports);
        replicates.push(solve_budget(&design, &y, fit.l1_bound, opts).beta);
    }
    Ok(BlipCI { basis, replicates, level })
}
