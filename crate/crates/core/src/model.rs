//! Time-series records and context extraction.
//!
//! A trial is a single time series of blocks `(A(t), Y(t), W(t))`. Every
//! estimator conditions on a fixed-dimensional [`ContextSummary`] assembled
//! from lagged values of earlier blocks, so the decision at time `t` never
//! sees anything recorded at or after `t`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One time step of the series: treatment, outcome, then covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub a: u8,
    pub y: f64,
    pub w: Vec<f64>,
}

impl Block {
    pub fn new(a: u8, y: f64, w: Vec<f64>) -> Result<Self> {
        if a > 1 {
            return Err(Error::InvalidArgument(format!("treatment must be 0 or 1, got {a}")));
        }
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::InvalidArgument(format!("outcome must lie in [0, 1], got {y}")));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariates must be finite".into()));
        }
        Ok(Self { a, y, w })
    }

    /// Value of `var` in this block.
    pub fn get(&self, var: Variable) -> Result<f64> {
        match var {
            Variable::A => Ok(f64::from(self.a)),
            Variable::Y => Ok(self.y),
            Variable::W(j) => self.w.get(j).copied().ok_or_else(|| {
                Error::Specification(format!(
                    "covariate {var} requested but blocks carry {} covariates",
                    self.w.len()
                ))
            }),
        }
    }
}

/// Min-max rescales a bounded continuous outcome into `[0, 1]`.
pub fn rescale_outcome(y: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(upper > lower) {
        return Err(Error::InvalidArgument(format!(
            "outcome range must satisfy lower < upper, got [{lower}, {upper}]"
        )));
    }
    Ok(((y - lower) / (upper - lower)).clamp(0.0, 1.0))
}

/// Observed history `O(1), ..., O(N)`; the first `burn_in` blocks are
/// exogenous draws that seed the lag structure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialHistory {
    blocks: Vec<Block>,
    burn_in: usize,
}

impl TrialHistory {
    pub fn new(blocks: Vec<Block>, burn_in: usize) -> Result<Self> {
        if burn_in > blocks.len() {
            return Err(Error::InvalidArgument(format!(
                "burn-in {burn_in} exceeds history length {}",
                blocks.len()
            )));
        }
        if let Some(first) = blocks.first() {
            let dim = first.w.len();
            if let Some(b) = blocks.iter().find(|b| b.w.len() != dim) {
                return Err(Error::DimensionMismatch { expected: dim, got: b.w.len() });
            }
        }
        Ok(Self { blocks, burn_in })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Block at 1-based time index `t`.
    pub fn at(&self, t: usize) -> Option<&Block> {
        t.checked_sub(1).and_then(|i| self.blocks.get(i))
    }

    pub fn push(&mut self, block: Block) -> Result<()> {
        if let Some(first) = self.blocks.first() {
            if first.w.len() != block.w.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.w.len(),
                    got: block.w.len(),
                });
            }
        }
        self.blocks.push(block);
        Ok(())
    }

    /// Copy truncated to the first `n` blocks.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.blocks.len());
        Self {
            blocks: self.blocks[..n].to_vec(),
            burn_in: self.burn_in.min(n),
        }
    }
}

/// A source variable of a block. Covariates are 0-based internally and
/// written `W1`, `W2`, ... in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    A,
    Y,
    W(usize),
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::A => f.write_str("A"),
            Variable::Y => f.write_str("Y"),
            Variable::W(j) => write!(f, "W{}", j + 1),
        }
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(Variable::A),
            "Y" => Ok(Variable::Y),
            _ => s
                .strip_prefix('W')
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(|n| Variable::W(n - 1))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown variable '{s}'"))),
        }
    }
}

impl Serialize for Variable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The lags of one source variable that enter the context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagEntry {
    pub var: Variable,
    pub lags: Vec<usize>,
}

/// Declares which lagged values make up `C_o(t)`, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSpec {
    #[serde(default)]
    pub lags: Vec<LagEntry>,
    #[serde(default)]
    pub include_blip_estimate: bool,
}

impl ContextSpec {
    pub fn new(lags: Vec<(Variable, Vec<usize>)>) -> Self {
        Self {
            lags: lags.into_iter().map(|(var, lags)| LagEntry { var, lags }).collect(),
            include_blip_estimate: false,
        }
    }

    pub fn with_blip_estimate(mut self) -> Self {
        self.include_blip_estimate = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for entry in &self.lags {
            if let Some(&l) = entry.lags.iter().find(|&&l| l == 0) {
                return Err(Error::Specification(format!(
                    "context lag {l} for {} must be >= 1",
                    entry.var
                )));
            }
        }
        Ok(())
    }

    /// Number of features produced by [`extract_context`].
    pub fn dim(&self) -> usize {
        self.lags.iter().map(|e| e.lags.len()).sum::<usize>() + usize::from(self.include_blip_estimate)
    }

    pub fn max_lag(&self) -> usize {
        self.lags.iter().flat_map(|e| e.lags.iter().copied()).max().unwrap_or(0)
    }

    /// `(variable, lag)` of each lagged coordinate, in feature order.
    pub fn layout(&self) -> Vec<(Variable, usize)> {
        self.lags
            .iter()
            .flat_map(|e| e.lags.iter().map(move |&l| (e.var, l)))
            .collect()
    }

    /// Human-readable feature names such as `Y_lag1`.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> =
            self.layout().into_iter().map(|(v, l)| format!("{v}_lag{l}")).collect();
        if self.include_blip_estimate {
            names.push("blip".into());
        }
        names
    }
}

/// Fixed-dimensional summary `C_o(t)` of the history before time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub features: Vec<f64>,
    pub time_index: usize,
}

impl ContextSummary {
    pub fn new(features: Vec<f64>, time_index: usize) -> Self {
        Self { features, time_index }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Assembles `C_o(t)` from blocks `1..t-1` in the order declared by `spec`.
///
/// When the spec asks for the blip estimate it must be supplied and is
/// appended as the last coordinate.
pub fn extract_context(
    history: &TrialHistory,
    t: usize,
    spec: &ContextSpec,
    blip_estimate: Option<f64>,
) -> Result<ContextSummary> {
    if t == 0 {
        return Err(Error::InvalidArgument("time index starts at 1".into()));
    }
    let mut features = Vec::with_capacity(spec.dim());
    for (var, lag) in spec.layout() {
        if lag == 0 {
            return Err(Error::Specification(format!("context lag for {var} must be >= 1")));
        }
        let block = t
            .checked_sub(lag)
            .filter(|&s| s >= 1)
            .and_then(|s| history.at(s))
            .ok_or_else(|| {
                Error::MissingHistory(format!("{var} at lag {lag} is not available at t = {t}"))
            })?;
        features.push(block.get(var)?);
    }
    if spec.include_blip_estimate {
        let blip = blip_estimate.ok_or_else(|| {
            Error::InvalidArgument("context includes the blip estimate but none was supplied".into())
        })?;
        features.push(blip);
    }
    Ok(ContextSummary::new(features, t))
}
