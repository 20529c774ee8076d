//! Logistic working models for `Qbar(C, A)` fitted by IRLS.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgp::expit;
use crate::error::{Error, Result};
use crate::model::ContextSummary;

const MAX_ITER: usize = 100;
const COEF_TOL: f64 = 1e-8;
const RIDGE_FALLBACK: f64 = 1e-4;
/// Linear predictors beyond this magnitude mean fitted probabilities of
/// numerically 0 or 1, i.e. (quasi-)separation.
const SEPARATION_ETA: f64 = 30.0;

/// Truncation interval for predicted probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QBounds {
    pub low: f64,
    pub high: f64,
}

impl Default for QBounds {
    fn default() -> Self {
        Self { low: 0.005, high: 0.995 }
    }
}

impl QBounds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(0.0 < low && low < high && high < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "q bounds must satisfy 0 < low < high < 1, got [{low}, {high}]"
            )));
        }
        Ok(Self { low, high })
    }

    pub fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.low, self.high)
    }
}

/// Role of one coefficient in the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Intercept,
    Treatment,
    Feature(usize),
    /// Treatment times context feature.
    Interaction(usize),
}

impl Role {
    fn value(self, features: &[f64], a: u8) -> f64 {
        let a = f64::from(a);
        match self {
            Role::Intercept => 1.0,
            Role::Treatment => a,
            Role::Feature(j) => features[j],
            Role::Interaction(j) => a * features[j],
        }
    }

    fn feature_index(self) -> Option<usize> {
        match self {
            Role::Feature(j) | Role::Interaction(j) => Some(j),
            _ => None,
        }
    }
}

/// Intercept, treatment and main terms for a `dim`-dimensional context.
pub fn main_terms_layout(dim: usize) -> Vec<Role> {
    let mut roles = vec![Role::Intercept, Role::Treatment];
    roles.extend((0..dim).map(Role::Feature));
    roles
}

/// Main terms plus every treatment-by-feature interaction.
pub fn interaction_layout(dim: usize) -> Vec<Role> {
    let mut roles = main_terms_layout(dim);
    roles.extend((0..dim).map(Role::Interaction));
    roles
}

/// One observation for outcome regression.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub features: Vec<f64>,
    pub a: u8,
    pub y: f64,
}

impl DesignRow {
    pub fn new(features: Vec<f64>, a: u8, y: f64) -> Self {
        Self { features, a, y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingModel {
    pub coefficients: Vec<f64>,
    pub feature_layout: Vec<Role>,
    /// Set when the unpenalized fit failed and a ridge penalty was used.
    pub ridge_fallback: bool,
    pub iterations: usize,
}

impl WorkingModel {
    pub fn new(coefficients: Vec<f64>, feature_layout: Vec<Role>) -> Result<Self> {
        if coefficients.len() != feature_layout.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_layout.len(),
                got: coefficients.len(),
            });
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        Ok(Self {
            coefficients,
            feature_layout,
            ridge_fallback: false,
            iterations: 0,
        })
    }

    /// Context dimension the layout requires.
    pub fn context_dim(&self) -> usize {
        self.feature_layout
            .iter()
            .filter_map(|r| r.feature_index())
            .map(|j| j + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn linear_predictor(&self, features: &[f64], a: u8) -> Result<f64> {
        let need = self.context_dim();
        if features.len() < need {
            return Err(Error::DimensionMismatch { expected: need, got: features.len() });
        }
        Ok(self
            .feature_layout
            .iter()
            .zip(&self.coefficients)
            .map(|(role, b)| b * role.value(features, a))
            .sum())
    }

    /// `expit` of the linear predictor, truncated into `bounds`.
    pub fn predict_qbar(&self, context: &ContextSummary, a: u8, bounds: QBounds) -> Result<f64> {
        Ok(bounds.clamp(expit(self.linear_predictor(&context.features, a)?)))
    }

    /// `Qbar(C, 1) - Qbar(C, 0)` from truncated probabilities.
    pub fn blip(&self, context: &ContextSummary, bounds: QBounds) -> Result<f64> {
        Ok(self.predict_qbar(context, 1, bounds)? - self.predict_qbar(context, 0, bounds)?)
    }
}

/// Quasi-binomial negative log-likelihood of a prediction `q`.
pub fn quasi_nll(y: f64, q: f64) -> f64 {
    -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
}

fn design_matrix(rows: &[DesignRow], layout: &[Role]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), layout.len(), |i, j| {
        layout[j].value(&rows[i].features, rows[i].a)
    })
}

fn penalized_loglik(x: &DMatrix<f64>, y: &[f64], w: &[f64], beta: &DVector<f64>, ridge: f64) -> f64 {
    let eta = x * beta;
    let ll: f64 = eta
        .iter()
        .zip(y.iter().zip(w))
        .map(|(&e, (&yi, &wi))| {
            // y * eta - log(1 + e^eta), written to avoid overflow
            let log1pexp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            wi * (yi * e - log1pexp)
        })
        .sum();
    let wsum: f64 = w.iter().sum();
    ll - 0.5 * ridge * wsum * beta.norm_squared()
}

struct Irls {
    beta: DVector<f64>,
    iterations: usize,
    converged: bool,
}

fn irls(x: &DMatrix<f64>, y: &[f64], w: &[f64], ridge: f64) -> Irls {
    let p = x.ncols();
    let wsum: f64 = w.iter().sum();
    let mut beta = DVector::zeros(p);
    let mut current = penalized_loglik(x, y, w, &beta, ridge);
    for iter in 1..=MAX_ITER {
        let eta = x * &beta;
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..x.nrows() {
            let mu = expit(eta[i]);
            let row = x.row(i);
            let resid = w[i] * (y[i] - mu);
            let curv = w[i] * mu * (1.0 - mu);
            for j in 0..p {
                grad[j] += resid * row[j];
                for k in 0..=j {
                    hess[(j, k)] += curv * row[j] * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                hess[(k, j)] = hess[(j, k)];
            }
            hess[(j, j)] += ridge * wsum;
        }
        grad -= ridge * wsum * &beta;
        let Some(chol) = hess.cholesky() else {
            return Irls { beta, iterations: iter, converged: false };
        };
        let step = chol.solve(&grad);
        // step halving keeps the objective monotone
        let mut scale = 1.0;
        let mut next = &beta + &step;
        let mut value = penalized_loglik(x, y, w, &next, ridge);
        while value < current - 1e-12 * current.abs().max(1.0) && scale > 1e-6 {
            scale *= 0.5;
            next = &beta + scale * &step;
            value = penalized_loglik(x, y, w, &next, ridge);
        }
        let change = (scale * &step).amax();
        beta = next;
        current = value;
        if !beta.iter().all(|b| b.is_finite()) {
            return Irls { beta, iterations: iter, converged: false };
        }
        if change < COEF_TOL {
            return Irls { beta, iterations: iter, converged: true };
        }
    }
    Irls { beta, iterations: MAX_ITER, converged: false }
}

/// Maximizes the (weighted) quasi-binomial log-likelihood by IRLS.
///
/// Outcomes may be fractional in `[0, 1]`. If the unpenalized fit fails to
/// converge, diverges, or the data are separated, the fit is redone with a
/// small ridge penalty on all coefficients and `ridge_fallback` is set.
pub fn fit_logistic(rows: &[DesignRow], layout: &[Role], weights: Option<&[f64]>) -> Result<WorkingModel> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("logistic fit needs at least one row".into()));
    }
    if layout.is_empty() {
        return Err(Error::InvalidArgument("empty coefficient layout".into()));
    }
    if let Some(bad) = rows.iter().find(|r| !(0.0..=1.0).contains(&r.y)) {
        return Err(Error::InvalidArgument(format!("outcome {} outside [0, 1]", bad.y)));
    }
    let need = layout.iter().filter_map(|r| r.feature_index()).map(|j| j + 1).max().unwrap_or(0);
    if let Some(bad) = rows.iter().find(|r| r.features.len() < need) {
        return Err(Error::DimensionMismatch { expected: need, got: bad.features.len() });
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != rows.len() {
                return Err(Error::DimensionMismatch { expected: rows.len(), got: w.len() });
            }
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidArgument("weights sum to zero".into()));
            }
            w.to_vec()
        }
        None => vec![1.0; rows.len()],
    };
    let x = design_matrix(rows, layout);
    let y: Vec<f64> = rows.iter().map(|r| r.y).collect();

    let fit = irls(&x, &y, &w, 0.0);
    let separated = (&x * &fit.beta).amax() > SEPARATION_ETA;
    let (fit, fallback) = if fit.converged && !separated {
        (fit, false)
    } else {
        (irls(&x, &y, &w, RIDGE_FALLBACK), true)
    };
    if !fit.beta.iter().all(|b| b.is_finite()) {
        return Err(Error::InvalidArgument("logistic fit produced non-finite coefficients".into()));
    }
    Ok(WorkingModel {
        coefficients: fit.beta.iter().copied().collect(),
        feature_layout: layout.to_vec(),
        ridge_fallback: fallback,
        iterations: fit.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ctx(f: &[f64]) -> ContextSummary {
        ContextSummary::new(f.to_vec(), 1)
    }

    #[test]
    fn intercept_only_balanced() {
        let rows: Vec<_> = (0..20).map(|i| DesignRow::new(vec![], 0, (i % 2) as f64)).collect();
        let m = fit_logistic(&rows, &[Role::Intercept], None).unwrap();
        assert_abs_diff_eq!(m.coefficients[0], 0.0, epsilon = 1e-10);
        assert!(!m.ridge_fallback);
    }

    #[test]
    fn intercept_only_matches_logit_of_mean() {
        let rows: Vec<_> = (0..40).map(|i| DesignRow::new(vec![], 0, f64::from(i % 4 != 0))).collect();
        let m = fit_logistic(&rows, &[Role::Intercept], None).unwrap();
        // logit(0.75) = ln 3
        assert_abs_diff_eq!(m.coefficients[0], 3f64.ln(), epsilon = 1e-6);
    }

    #[test]
    fn saturated_two_cell_matches_cell_logits() {
        // cell a = 0: mean 0.25, cell a = 1: mean 0.6
        let mut rows = Vec::new();
        for i in 0..20 {
            rows.push(DesignRow::new(vec![], 0, f64::from(i % 4 == 0)));
        }
        for i in 0..20 {
            rows.push(DesignRow::new(vec![], 1, f64::from(i % 5 < 3)));
        }
        let m = fit_logistic(&rows, &[Role::Intercept, Role::Treatment], None).unwrap();
        let logit = |p: f64| (p / (1.0 - p)).ln();
        assert_abs_diff_eq!(m.coefficients[0], logit(0.25), epsilon = 1e-6);
        assert_abs_diff_eq!(m.coefficients[0] + m.coefficients[1], logit(0.6), epsilon = 1e-6);
    }

    #[test]
    fn fractional_outcomes_and_weights() {
        // weighted intercept-only: weighted mean 0.3
        let rows = vec![DesignRow::new(vec![], 0, 0.1), DesignRow::new(vec![], 0, 0.7)];
        let m = fit_logistic(&rows, &[Role::Intercept], Some(&[2.0, 1.0])).unwrap();
        assert_abs_diff_eq!(expit(m.coefficients[0]), 0.3, epsilon = 1e-8);
    }

    #[test]
    fn separation_falls_back_to_ridge() {
        let rows: Vec<_> = (0..20)
            .map(|i| {
                let x = (i % 2) as f64;
                DesignRow::new(vec![x], 0, x)
            })
            .collect();
        let m = fit_logistic(&rows, &[Role::Intercept, Role::Feature(0)], None).unwrap();
        assert!(m.ridge_fallback);
        assert!(m.coefficients.iter().all(|c| c.is_finite()));
        assert!(m.coefficients[1] > 5.0);
    }

    #[test]
    fn prediction_and_truncation() {
        let layout = main_terms_layout(2);
        let zero = WorkingModel::new(vec![0.0; 4], layout.clone()).unwrap();
        let b = QBounds::default();
        assert_eq!(zero.predict_qbar(&ctx(&[1.0, 1.0]), 1, b).unwrap(), 0.5);
        let m = WorkingModel::new(vec![1.5, 0.0, 0.0, 0.0], layout.clone()).unwrap();
        assert_abs_diff_eq!(m.predict_qbar(&ctx(&[0.0, 0.0]), 0, b).unwrap(), 0.817_574_476_193_643_7, epsilon = 1e-12);
        let m = WorkingModel::new(vec![-20.0, 0.0, 0.0, 0.0], layout).unwrap();
        assert_eq!(m.predict_qbar(&ctx(&[0.0, 0.0]), 0, b).unwrap(), 0.005);
        assert!(m.predict_qbar(&ctx(&[0.0]), 0, b).is_err());
    }

    #[test]
    fn blip_of_oracle_coefficients() {
        // Sim 1a outcome equation as a main-terms model
        let m = WorkingModel::new(vec![0.0, 1.5, 0.5, -1.1], main_terms_layout(2)).unwrap();
        let b = QBounds::default();
        assert_abs_diff_eq!(m.blip(&ctx(&[0.0, 0.0]), b).unwrap(), 0.317_574_476_193_643_7, epsilon = 1e-12);
        let no_effect = WorkingModel::new(vec![0.3, 0.0, 0.5, -1.1], main_terms_layout(2)).unwrap();
        assert_eq!(no_effect.blip(&ctx(&[1.0, 0.0]), b).unwrap(), 0.0);
    }

    #[test]
    fn recovers_generating_coefficients() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let truth = [0.2, 1.5, 0.5, -1.1];
        let rows: Vec<_> = (0..20_000)
            .map(|_| {
                let f = vec![f64::from(rng.random::<bool>()), f64::from(rng.random::<bool>())];
                let a = u8::from(rng.random::<bool>());
                let eta = truth[0] + truth[1] * f64::from(a) + truth[2] * f[0] + truth[3] * f[1];
                let y = f64::from(rng.random::<f64>() < expit(eta));
                DesignRow::new(f, a, y)
            })
            .collect();
        let m = fit_logistic(&rows, &main_terms_layout(2), None).unwrap();
        for (est, tru) in m.coefficients.iter().zip(truth) {
            assert!((est - tru).abs() < 0.1, "{est} vs {tru}");
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(fit_logistic(&[], &[Role::Intercept], None).is_err());
        let rows = vec![DesignRow::new(vec![], 0, 1.5)];
        assert!(fit_logistic(&rows, &[Role::Intercept], None).is_err());
        let rows = vec![DesignRow::new(vec![], 0, 1.0)];
        assert!(fit_logistic(&rows, &[Role::Intercept], Some(&[0.0])).is_err());
        assert!(WorkingModel::new(vec![0.0], main_terms_layout(1)).is_err());
    }
}
