//! Declarative structural-equation simulators with exact truth oracles.
//!
//! A [`DgpSpec`] lists linear predictors over lagged variables. Outcomes are
//! Bernoulli with a logistic link, binary covariates likewise, and continuous
//! covariates are Gaussian around their linear predictor. Because the
//! equations are data rather than code, the conditional mean of `Y(t)` given
//! its parents is available in closed form.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Block, ContextSpec, ContextSummary, TrialHistory, Variable};

/// Logistic function, evaluated so that neither tail overflows.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Draws a Bernoulli(`p`) variable as `0` or `1`.
pub(crate) fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

/// `coef * var(t - lag)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub var: Variable,
    pub lag: usize,
    pub coef: f64,
}

impl Term {
    pub fn new(var: Variable, lag: usize, coef: f64) -> Self {
        Self { var, lag, coef }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Marginal {
    Bernoulli { p: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Marginal {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Bernoulli { p } => f64::from(bernoulli(p, rng)),
            Marginal::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        match *self {
            Marginal::Bernoulli { p } if !(0.0..=1.0).contains(&p) => Err(Error::Specification(
                format!("{what}: Bernoulli probability {p} outside [0, 1]"),
            )),
            Marginal::Normal { sd, .. } if !(sd >= 0.0) => {
                Err(Error::Specification(format!("{what}: negative standard deviation")))
            }
            _ => Ok(()),
        }
    }
}

fn default_burn_in_blocks() -> usize {
    4
}

/// Marginal laws of the exogenous starting blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnInLaw {
    #[serde(default = "default_burn_in_blocks")]
    pub blocks: usize,
    pub a: Marginal,
    pub y: Marginal,
    pub w: Vec<Marginal>,
}

/// `logit P(Y(t) = 1 | parents) = intercept + treatment * A(t) + sum of terms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEquation {
    #[serde(default)]
    pub intercept: f64,
    pub treatment: f64,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    /// Bernoulli with logistic link.
    Binary,
    /// Identity link plus Gaussian noise with the spec's `noise_sd`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateEquation {
    pub kind: CovariateKind,
    #[serde(default)]
    pub intercept: f64,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub name: String,
    pub burn_in: BurnInLaw,
    pub y_equation: OutcomeEquation,
    pub w_equations: Vec<CovariateEquation>,
    pub noise_sd: f64,
}

fn linear_predictor(history: &TrialHistory, t: usize, terms: &[Term]) -> Result<f64> {
    terms.iter().try_fold(0.0, |acc, term| {
        let block = t
            .checked_sub(term.lag)
            .filter(|&s| s >= 1)
            .and_then(|s| history.at(s))
            .ok_or_else(|| {
                Error::MissingHistory(format!(
                    "{} at lag {} is not available at t = {t}",
                    term.var, term.lag
                ))
            })?;
        Ok(acc + term.coef * block.get(term.var)?)
    })
}

impl DgpSpec {
    /// Simulation 1a: outcome depends on `A(t)`, `Y(t-1)`, `W1(t-1)`.
    pub fn sim1a() -> Self {
        use Variable::*;
        Self {
            name: "sim1a".into(),
            burn_in: BurnInLaw {
                blocks: 4,
                a: Marginal::Bernoulli { p: 0.5 },
                y: Marginal::Bernoulli { p: 0.5 },
                w: vec![
                    Marginal::Bernoulli { p: 0.5 },
                    Marginal::Normal { mean: 0.0, sd: 1.0 },
                ],
            },
            y_equation: OutcomeEquation {
                intercept: 0.0,
                treatment: 1.5,
                terms: vec![Term::new(Y, 1, 0.5), Term::new(W(0), 1, -1.1)],
            },
            w_equations: vec![
                CovariateEquation {
                    kind: CovariateKind::Binary,
                    intercept: 0.0,
                    terms: vec![
                        Term::new(W(0), 1, 0.5),
                        Term::new(Y, 1, -0.5),
                        Term::new(W(1), 1, 0.1),
                    ],
                },
                CovariateEquation {
                    kind: CovariateKind::Gaussian,
                    intercept: 0.0,
                    terms: vec![
                        Term::new(A, 1, 0.6),
                        Term::new(Y, 1, 1.0),
                        Term::new(W(0), 1, -1.0),
                    ],
                },
            ],
            noise_sd: 1.0,
        }
    }

    /// Simulation 1b: longer-range dependence, `Y(t-3)` and `W1(t-4)`.
    pub fn sim1b() -> Self {
        use Variable::*;
        let mut spec = Self::sim1a();
        spec.name = "sim1b".into();
        spec.y_equation.terms = vec![Term::new(Y, 3, 0.5), Term::new(W(0), 4, -1.1)];
        spec.w_equations[0].terms = vec![
            Term::new(W(0), 1, 0.5),
            Term::new(Y, 1, -0.5),
            Term::new(W(1), 2, 0.1),
        ];
        spec.w_equations[1].terms = vec![
            Term::new(A, 1, 0.6),
            Term::new(Y, 1, 1.0),
            Term::new(W(0), 2, -1.0),
        ];
        spec
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "sim1a" => Some(Self::sim1a()),
            "sim1b" => Some(Self::sim1b()),
            _ => None,
        }
    }

    pub fn w_dim(&self) -> usize {
        self.w_equations.len()
    }

    fn all_terms(&self) -> impl Iterator<Item = &Term> {
        self.y_equation
            .terms
            .iter()
            .chain(self.w_equations.iter().flat_map(|e| e.terms.iter()))
    }

    pub fn max_lag(&self) -> usize {
        self.all_terms().map(|t| t.lag).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let w_dim = self.w_dim();
        if self.burn_in.w.len() != w_dim {
            return Err(Error::Specification(format!(
                "burn-in declares {} covariates but there are {w_dim} covariate equations",
                self.burn_in.w.len()
            )));
        }
        self.burn_in.a.validate("burn_in.a")?;
        self.burn_in.y.validate("burn_in.y")?;
        for (j, m) in self.burn_in.w.iter().enumerate() {
            m.validate(&format!("burn_in.w[{j}]"))?;
        }
        for term in self.all_terms() {
            if term.lag == 0 {
                return Err(Error::Specification(format!(
                    "term on {} has lag 0; equations may only reference the past",
                    term.var
                )));
            }
            if let Variable::W(j) = term.var {
                if j >= w_dim {
                    return Err(Error::Specification(format!("term references undefined {}", term.var)));
                }
            }
            if !term.coef.is_finite() {
                return Err(Error::Specification("non-finite coefficient".into()));
            }
        }
        if self.max_lag() > self.burn_in.blocks {
            return Err(Error::Specification(format!(
                "maximum lag {} exceeds the {} burn-in blocks",
                self.max_lag(),
                self.burn_in.blocks
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::Specification("noise_sd must be non-negative".into()));
        }
        Ok(())
    }

    /// Context made of exactly the lagged parents of `Y(t)`, in the order
    /// they first appear in the outcome equation. This is the layout
    /// [`true_conditional_mean`] expects.
    pub fn oracle_context_spec(&self) -> ContextSpec {
        let mut entries: Vec<(Variable, Vec<usize>)> = Vec::new();
        for term in &self.y_equation.terms {
            match entries.iter_mut().find(|(v, _)| *v == term.var) {
                Some((_, lags)) if !lags.contains(&term.lag) => lags.push(term.lag),
                Some(_) => {}
                None => entries.push((term.var, vec![term.lag])),
            }
        }
        ContextSpec::new(entries)
    }

    fn outcome_linear_predictor(&self, context: &ContextSummary, a: u8) -> Result<f64> {
        let layout = self.oracle_context_spec().layout();
        if context.dim() != layout.len() {
            return Err(Error::Specification(format!(
                "oracle context for {} has {} features, got {}",
                self.name,
                layout.len(),
                context.dim()
            )));
        }
        let eq = &self.y_equation;
        let mut lp = eq.intercept + eq.treatment * f64::from(a);
        for term in &eq.terms {
            let idx = layout
                .iter()
                .position(|&(v, l)| v == term.var && l == term.lag)
                .expect("oracle layout is built from the outcome terms");
            lp += term.coef * context.features[idx];
        }
        Ok(lp)
    }
}

/// Draws the exogenous starting blocks.
pub fn simulate_burn_in<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Vec<Block> {
    (0..spec.burn_in.blocks)
        .map(|_| {
            let a = spec.burn_in.a.draw(rng).round().clamp(0.0, 1.0) as u8;
            let y = spec.burn_in.y.draw(rng).clamp(0.0, 1.0);
            let w = spec.burn_in.w.iter().map(|m| m.draw(rng)).collect();
            Block { a, y, w }
        })
        .collect()
}

/// Draws the next block given the supplied treatment: `Y(t)` first, then
/// each `W_j(t)` in declaration order.
pub fn step<R: Rng + ?Sized>(
    spec: &DgpSpec,
    history: &TrialHistory,
    a: u8,
    rng: &mut R,
) -> Result<Block> {
    if a > 1 {
        return Err(Error::InvalidArgument(format!("treatment must be 0 or 1, got {a}")));
    }
    let t = history.len() + 1;
    let eq = &spec.y_equation;
    let lp = eq.intercept + eq.treatment * f64::from(a) + linear_predictor(history, t, &eq.terms)?;
    let y = f64::from(bernoulli(expit(lp), rng));
    let mut w = Vec::with_capacity(spec.w_dim());
    for cov in &spec.w_equations {
        let lp = cov.intercept + linear_predictor(history, t, &cov.terms)?;
        w.push(match cov.kind {
            CovariateKind::Binary => f64::from(bernoulli(expit(lp), rng)),
            CovariateKind::Gaussian => lp + spec.noise_sd * rng.sample::<f64, _>(StandardNormal),
        });
    }
    Ok(Block { a, y, w })
}

/// `E[Y(t) | C, A(t) = a]` under the spec, where `context` follows
/// [`DgpSpec::oracle_context_spec`].
pub fn true_conditional_mean(spec: &DgpSpec, context: &ContextSummary, a: u8) -> Result<f64> {
    Ok(expit(spec.outcome_linear_predictor(context, a)?))
}

pub fn true_blip(spec: &DgpSpec, context: &ContextSummary) -> Result<f64> {
    Ok(true_conditional_mean(spec, context, 1)? - true_conditional_mean(spec, context, 0)?)
}
