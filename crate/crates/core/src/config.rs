//! Trial configuration and its JSON schema.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "dgp_id": "sim1a",
//!   "initial_n": 1000,
//!   "checkpoint_step": 200,
//!   "max_n": 1800,
//!   "alpha": 0.05,
//!   "q_bounds": [0.005, 0.995],
//!   "g_floor": 0.05,
//!   "policy": { "mode": "smoother", "c": 0.1, "e": 0.05 },
//!   "learner": { "candidates": ["glm_main", "glm_interact"], "val_size": 30 }
//! }
//! ```
//!
//! `dgp_id` names a preset (`sim1a`, `sim1b`) or `custom`, in which case the
//! `dgp` object carries the structural equations. `context` defaults to the
//! lagged parents of the outcome. Schedules are either a constant or a list
//! of `[from_t, value]` steps.

use serde::{Deserialize, Serialize};

use crate::dgp::DgpSpec;
use crate::error::{Error, Result};
use crate::model::ContextSpec;
use crate::policy::PolicyMode;
use crate::regression::{Candidate, QBounds};

pub const SCHEMA_VERSION: u32 = 1;

/// A non-increasing positive sequence indexed by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(f64),
    /// `(from_t, value)` pairs; the value applies from `from_t` until the next step.
    Steps(Vec<(usize, f64)>),
}

impl Schedule {
    pub fn value_at(&self, t: usize) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Steps(steps) => steps
                .iter()
                .take_while(|(from, _)| *from <= t)
                .last()
                .or(steps.first())
                .map_or(f64::NAN, |(_, v)| *v),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Schedule::Constant(v) => vec![*v],
            Schedule::Steps(s) => s.iter().map(|(_, v)| *v).collect(),
        }
    }

    fn validate(&self, field: &str, low: f64, high: f64) -> Result<()> {
        if let Schedule::Steps(steps) = self {
            if steps.is_empty() {
                return Err(Error::config(field, "schedule has no steps"));
            }
            if steps.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::config(field, "step start times must increase"));
            }
            if steps.windows(2).any(|w| w[1].1 > w[0].1) {
                return Err(Error::config(field, "schedule must be non-increasing"));
            }
        }
        if let Some(v) = self.values().into_iter().find(|v| !(*v >= low && *v <= high)) {
            return Err(Error::config(field, format!("value {v} outside [{low}, {high}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySettings {
    #[serde(default)]
    pub mode: PolicyMode,
    pub c: Schedule,
    pub e: Schedule,
}

impl Default for PolicySettings {
    fn default() -> Self {
        Self { mode: PolicyMode::Smoother, c: Schedule::Constant(0.1), e: Schedule::Constant(0.05) }
    }
}

/// Which initial estimator of `Qbar` the trial uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSettings {
    /// Candidate names; the single entry `"oracle"` plugs in the true `Qbar`.
    pub candidates: Vec<String>,
    #[serde(default = "default_val_size")]
    pub val_size: usize,
    /// L1 budget of the blip lasso used by the `hal_ci` policy.
    #[serde(default = "default_hal_budget")]
    pub hal_budget: f64,
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
}

fn default_val_size() -> usize {
    30
}
fn default_hal_budget() -> f64 {
    crate::regression::select::DEFAULT_LASSO_BUDGET
}
fn default_n_boot() -> usize {
    100
}
fn default_ci_level() -> f64 {
    0.95
}

impl Default for LearnerSettings {
    fn default() -> Self {
        Self {
            candidates: vec!["glm_main".into(), "glm_interact".into()],
            val_size: default_val_size(),
            hal_budget: default_hal_budget(),
            n_boot: default_n_boot(),
            ci_level: default_ci_level(),
        }
    }
}

/// Resolved learner choice.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerChoice {
    Oracle,
    Candidates(Vec<Candidate>),
}

impl LearnerSettings {
    pub fn resolve(&self) -> Result<LearnerChoice> {
        if self.candidates.is_empty() {
            return Err(Error::config("learner.candidates", "at least one candidate is required"));
        }
        if self.candidates.iter().any(|c| c == "oracle") {
            if self.candidates.len() != 1 {
                return Err(Error::config("learner.candidates", "\"oracle\" must be the only candidate"));
            }
            return Ok(LearnerChoice::Oracle);
        }
        self.candidates
            .iter()
            .map(|c| c.parse::<Candidate>().map_err(|e| Error::config("learner.candidates", e.to_string())))
            .collect::<Result<Vec<_>>>()
            .map(LearnerChoice::Candidates)
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_alpha() -> f64 {
    0.05
}
fn default_step() -> usize {
    200
}
fn default_g_floor() -> f64 {
    0.05
}
fn default_q_bounds() -> [f64; 2] {
    [0.005, 0.995]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub dgp_id: String,
    /// Structural equations when `dgp_id` is `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dgp: Option<DgpSpec>,
    /// Time steps under the balanced design, burn-in included.
    pub initial_n: usize,
    #[serde(default = "default_step")]
    pub checkpoint_step: usize,
    pub max_n: usize,
    /// Steps between blip refits; defaults to `checkpoint_step`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refit_interval: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_q_bounds")]
    pub q_bounds: [f64; 2],
    #[serde(default = "default_g_floor")]
    pub g_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextSpec>,
    #[serde(default)]
    pub policy: PolicySettings,
    #[serde(default)]
    pub learner: LearnerSettings,
    #[serde(default)]
    pub base_seed: u64,
}

impl TrialConfig {
    /// Preset trial: initial 1000 balanced steps, checkpoints every 200 up to 1800.
    pub fn preset(name: &str) -> Result<Self> {
        DgpSpec::preset(name).ok_or_else(|| {
            Error::config("dgp_id", format!("unknown DGP '{name}' (expected sim1a, sim1b or custom)"))
        })?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            dgp_id: name.into(),
            dgp: None,
            initial_n: 1000,
            checkpoint_step: 200,
            max_n: 1800,
            refit_interval: None,
            alpha: default_alpha(),
            q_bounds: default_q_bounds(),
            g_floor: default_g_floor(),
            context: None,
            policy: PolicySettings::default(),
            learner: LearnerSettings::default(),
            base_seed: 0,
        })
    }

    /// Same trial with `initial_n` balanced steps followed by four checkpoints.
    pub fn with_initial_n(mut self, initial_n: usize) -> Self {
        self.initial_n = initial_n;
        self.max_n = initial_n + 4 * self.checkpoint_step;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dgp_spec(&self) -> Result<DgpSpec> {
        match self.dgp_id.as_str() {
            "custom" => self
                .dgp
                .clone()
                .ok_or_else(|| Error::config("dgp", "dgp_id is \"custom\" but no dgp object is given")),
            id => DgpSpec::preset(id).ok_or_else(|| {
                Error::config("dgp_id", format!("unknown DGP '{id}' (expected sim1a, sim1b or custom)"))
            }),
        }
    }

    pub fn context_spec(&self) -> Result<ContextSpec> {
        match &self.context {
            Some(c) => Ok(c.clone()),
            None => Ok(self.dgp_spec()?.oracle_context_spec()),
        }
    }

    pub fn q_bounds(&self) -> Result<QBounds> {
        QBounds::new(self.q_bounds[0], self.q_bounds[1]).map_err(|e| Error::config("q_bounds", e.to_string()))
    }

    pub fn refit_interval(&self) -> usize {
        self.refit_interval.unwrap_or(self.checkpoint_step)
    }

    /// Sample sizes at which the estimator is evaluated.
    pub fn checkpoints(&self) -> Vec<usize> {
        if self.checkpoint_step == 0 {
            return vec![self.initial_n];
        }
        (self.initial_n..=self.max_n).step_by(self.checkpoint_step).collect()
    }

    /// First time index whose context is fully observed.
    pub fn first_row(&self) -> Result<usize> {
        let dgp = self.dgp_spec()?;
        Ok(dgp.burn_in.blocks.max(self.context_spec()?.max_lag()).max(dgp.max_lag()) + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let dgp = self.dgp_spec()?;
        dgp.validate().map_err(|e| Error::config("dgp", e.to_string()))?;
        let context = self.context_spec()?;
        context.validate().map_err(|e| Error::config("context", e.to_string()))?;
        if context.include_blip_estimate {
            return Err(Error::config(
                "context.include_blip_estimate",
                "the trial runner conditions outcome models on lagged features only",
            ));
        }
        if let Some((var, _)) = context.layout().into_iter().find(|(v, _)| matches!(v, crate::model::Variable::W(j) if *j >= dgp.w_dim())) {
            return Err(Error::config("context", format!("{var} is not a covariate of the DGP")));
        }
        if self.checkpoint_step == 0 {
            return Err(Error::config("checkpoint_step", "must be positive"));
        }
        if self.initial_n > self.max_n {
            return Err(Error::config("max_n", format!("max_n {} is below initial_n {}", self.max_n, self.initial_n)));
        }
        if !(self.max_n - self.initial_n).is_multiple_of(self.checkpoint_step) {
            return Err(Error::config("checkpoint_step", "must divide max_n - initial_n"));
        }
        let refit = self.refit_interval();
        if refit == 0 || !self.checkpoint_step.is_multiple_of(refit) {
            return Err(Error::config("refit_interval", "must be positive and divide checkpoint_step"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", "must lie in (0, 1)"));
        }
        self.q_bounds()?;
        let c_low = match &self.policy.c {
            Schedule::Constant(v) => *v,
            Schedule::Steps(s) => s.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min),
        };
        self.policy.c.validate("policy.c", f64::MIN_POSITIVE, 0.5)?;
        self.policy.e.validate("policy.e", f64::MIN_POSITIVE, f64::MAX)?;
        if !(self.g_floor > 0.0 && self.g_floor <= c_low) {
            return Err(Error::config("g_floor", format!("must satisfy 0 < g_floor <= c (= {c_low})")));
        }
        let learner = self.learner.resolve()?;
        if learner == LearnerChoice::Oracle && context != dgp.oracle_context_spec() {
            return Err(Error::config("context", "the oracle learner requires the outcome-parent context"));
        }
        if self.policy.mode == crate::policy::PolicyMode::HalCi {
            if learner == LearnerChoice::Oracle {
                return Err(Error::config("policy.mode", "hal_ci needs a fitted learner, not the oracle"));
            }
            if self.learner.n_boot < 2 {
                return Err(Error::config("learner.n_boot", "hal_ci needs at least 2 bootstrap replicates"));
            }
            if !(self.learner.ci_level > 0.0 && self.learner.ci_level < 1.0) {
                return Err(Error::config("learner.ci_level", "must lie in (0, 1)"));
            }
            if !(self.learner.hal_budget >= 0.0) {
                return Err(Error::config("learner.hal_budget", "must be non-negative"));
            }
        }
        let first = self.first_row()?;
        let usable = self.initial_n.saturating_sub(first - 1);
        if usable < 2 * self.learner.val_size.max(1) {
            return Err(Error::config(
                "initial_n",
                format!(
                    "{} usable rows before the first checkpoint; selection needs at least {}",
                    usable,
                    2 * self.learner.val_size.max(1)
                ),
            ));
        }
        Ok(())
    }
}
