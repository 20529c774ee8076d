//! Adaptive trial runner and Monte Carlo coverage study.
//!
//! A trial draws the burn-in, assigns `A ~ Bern(1/2)` through `initial_n`,
//! then refits the outcome learner every `refit_interval` steps and assigns
//! treatment through the smoother of the current blip estimate. At each
//! checkpoint the TMLE is computed over every row with a fully observed
//! context, each row carrying the assignment probabilities and the rule that
//! were in force when its treatment was drawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{LearnerChoice, TrialConfig};
use crate::dgp::{self, DgpSpec};
use crate::error::{Error, Result};
use crate::model::{extract_context, ContextSpec, ContextSummary, TrialHistory};
use crate::policy::{self, BlipFunction, PolicyMode, PolicyState};
use crate::regression::{
    bootstrap_blip_ci, fit_candidate, pseudo_outcome_rows, select_recursive_origin, BlipCI, BlipModel,
    Candidate, FitSettings, FittedCandidate, LassoOptions, QBounds, TrainingRow,
};
use crate::tmle::{tmle_estimate, EstimateReport, TmleInput, TmleRow};

/// Outcome of one checkpoint of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointResult {
    pub n: usize,
    pub report: EstimateReport,
    pub truth: f64,
    pub covered: bool,
    /// Name of the learner whose `Qbar` entered the TMLE.
    pub selected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub checkpoints: Vec<CheckpointResult>,
}

/// One time step of a simulated trial. Fields other than `t`, `a`, `y`, `w`
/// are `None` for rows without a fully observed context.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub a: u8,
    pub y: f64,
    pub w: Vec<f64>,
    /// `g(a | C)` for the observed treatment.
    pub g_used: Option<f64>,
    /// `g(d | C)` for the rule in force.
    pub g_rule: Option<f64>,
    pub blip_estimate: Option<f64>,
    pub d: Option<u8>,
    /// Final-checkpoint `Qbar(C, a)`.
    pub q_obs: Option<f64>,
    /// Final-checkpoint `Qbar(C, d)`.
    pub q_rule: Option<f64>,
}

/// Full record of a simulated trial.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub history: TrialHistory,
    pub steps: Vec<StepRecord>,
    pub result: TrialResult,
}

/// `(1/n) sum_t E_0[Y | C_o(t), A = d_t]` over oracle-layout contexts.
pub fn data_adaptive_truth(contexts: &[ContextSummary], decisions: &[u8], spec: &DgpSpec) -> Result<f64> {
    if contexts.is_empty() {
        return Err(Error::EmptyInput("no contexts".into()));
    }
    if contexts.len() != decisions.len() {
        return Err(Error::DimensionMismatch { expected: contexts.len(), got: decisions.len() });
    }
    let total = contexts
        .iter()
        .zip(decisions)
        .try_fold(0.0, |acc, (c, &d)| Ok::<_, Error>(acc + dgp::true_conditional_mean(spec, c, d)?))?;
    Ok(total / contexts.len() as f64)
}

/// Current outcome fit and the blip that drives assignment.
enum Fit {
    Oracle,
    Learned { name: String, fitted: FittedCandidate, hal: Option<(BlipModel, BlipCI)> },
}

struct Runner<'a> {
    config: &'a TrialConfig,
    dgp: DgpSpec,
    context: ContextSpec,
    oracle_context: ContextSpec,
    learner: LearnerChoice,
    settings: FitSettings,
    bounds: QBounds,
}

/// Per-row state collected while the trial runs.
struct Row {
    ctx: ContextSummary,
    oracle_ctx: ContextSummary,
    a: u8,
    y: f64,
    g1: f64,
    g_obs: f64,
    g_rule: f64,
    blip: Option<f64>,
    d: Option<u8>,
}

impl Fit {
    fn qbar(&self, runner: &Runner<'_>, row: &Row, a: u8) -> Result<f64> {
        match self {
            Fit::Oracle => Ok(runner.bounds.clamp(dgp::true_conditional_mean(&runner.dgp, &row.oracle_ctx, a)?)),
            Fit::Learned { fitted, .. } => fitted.predict_qbar(&row.ctx, a, runner.bounds),
        }
    }

    fn name(&self) -> String {
        match self {
            Fit::Oracle => "oracle".into(),
            Fit::Learned { name, .. } => name.clone(),
        }
    }
}

/// Blip used by the policy, evaluated at the learner context.
struct PolicyBlip<'a> {
    runner: &'a Runner<'a>,
    fit: &'a Fit,
}

impl BlipFunction for PolicyBlip<'_> {
    fn blip(&self, context: &ContextSummary) -> Result<f64> {
        match self.fit {
            Fit::Oracle => dgp::true_blip(&self.runner.dgp, context),
            Fit::Learned { hal: Some((model, _)), .. } => Ok(model.predict(&context.features)),
            Fit::Learned { fitted, .. } => fitted.blip(context, self.runner.bounds),
        }
    }
}

impl<'a> Runner<'a> {
    fn new(config: &'a TrialConfig) -> Result<Self> {
        config.validate()?;
        let dgp = config.dgp_spec()?;
        let bounds = config.q_bounds()?;
        Ok(Self {
            context: config.context_spec()?,
            oracle_context: dgp.oracle_context_spec(),
            learner: config.learner.resolve()?,
            settings: FitSettings { q_bounds: bounds, g_floor: config.g_floor, lasso: LassoOptions::default() },
            bounds,
            dgp,
            config,
        })
    }

    fn fit<R: Rng>(&self, rows: &[Row], rng: &mut R) -> Result<Fit> {
        let candidates = match &self.learner {
            LearnerChoice::Oracle => return Ok(Fit::Oracle),
            LearnerChoice::Candidates(c) => c,
        };
        let training: Vec<TrainingRow> = rows
            .iter()
            .map(|r| TrainingRow { features: r.ctx.features.clone(), a: r.a, y: r.y, g1: r.g1 })
            .collect();
        let selection = select_recursive_origin(candidates, &training, self.config.learner.val_size, &self.settings)?;
        let hal = if self.config.policy.mode == PolicyMode::HalCi {
            let l = &self.config.learner;
            let lasso = fit_candidate(Candidate::LassoBlip { m: l.hal_budget }, &training, &self.settings)?;
            let FittedCandidate::LassoBlip { base, blip } = lasso else {
                unreachable!("lasso candidate yields a lasso fit")
            };
            let pseudo = pseudo_outcome_rows(&base, &training, &self.settings)?;
            let ci = bootstrap_blip_ci(&blip, &pseudo, l.n_boot, l.ci_level, &self.settings.lasso, rng)?;
            Some((blip, ci))
        } else {
            None
        };
        Ok(Fit::Learned { name: candidates[selection.index].to_string(), fitted: selection.fitted, hal })
    }

    fn checkpoint(&self, rows: &[Row], fit: &Fit, n: usize) -> Result<CheckpointResult> {
        let mut tmle_rows = Vec::with_capacity(rows.len());
        let mut oracle_ctx = Vec::with_capacity(rows.len());
        let mut decisions = Vec::with_capacity(rows.len());
        for r in rows {
            let d = r.d.expect("rule recorded before the checkpoint");
            tmle_rows.push(TmleRow {
                y: r.y,
                a: r.a,
                d,
                g_obs: r.g_obs,
                g_rule: r.g_rule,
                q_obs: fit.qbar(self, r, r.a)?,
                q_rule: fit.qbar(self, r, d)?,
            });
            oracle_ctx.push(r.oracle_ctx.clone());
            decisions.push(d);
        }
        let report = tmle_estimate(&TmleInput::new(tmle_rows, self.config.g_floor)?, self.config.alpha)?;
        let truth = data_adaptive_truth(&oracle_ctx, &decisions, &self.dgp)?;
        let covered = report.ci.0 <= truth && truth <= report.ci.1;
        Ok(CheckpointResult { n, report, truth, covered, selected: fit.name() })
    }

    fn policy<'p>(&self, t: usize, blip: &'p dyn BlipFunction, fit: &'p Fit) -> Result<PolicyState<'p>> {
        let p = &self.config.policy;
        let state = PolicyState::new(p.mode, p.c.value_at(t), p.e.value_at(t))?.with_blip(blip);
        Ok(match fit {
            Fit::Learned { hal: Some((_, ci)), .. } => state.with_ci(ci),
            _ => state,
        })
    }

    fn run(&self, seed: u64) -> Result<Trajectory> {
        let cfg = self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut boot_rng = ChaCha8Rng::seed_from_u64(seed);
        boot_rng.set_stream(1);

        let burn_in = dgp::simulate_burn_in(&self.dgp, &mut rng);
        let mut history = TrialHistory::new(burn_in, self.dgp.burn_in.blocks)?;
        let first = cfg.first_row()?;
        let refit = cfg.refit_interval();
        let checkpoints = cfg.checkpoints();

        let mut rows: Vec<Row> = Vec::with_capacity(cfg.max_n);
        let mut fit: Option<Fit> = None;
        let mut results = Vec::with_capacity(checkpoints.len());

        for t in history.len() + 1..=cfg.max_n {
            let observed = t >= first;
            let mut row = if observed {
                Some(Row {
                    ctx: extract_context(&history, t, &self.context, None)?,
                    oracle_ctx: extract_context(&history, t, &self.oracle_context, None)?,
                    a: 0,
                    y: 0.0,
                    g1: 0.5,
                    g_obs: 0.5,
                    g_rule: 0.5,
                    blip: None,
                    d: None,
                })
            } else {
                None
            };

            let a = match (&fit, row.as_mut()) {
                (Some(f), Some(r)) if t > cfg.initial_n => {
                    let blip_fn = PolicyBlip { runner: self, fit: f };
                    let state = self.policy(t, &blip_fn, f)?;
                    let blip = state.blip(&r.ctx)?;
                    let d = policy::rule_decision(blip);
                    let g1 = state.assignment_prob(&r.ctx, 1)?;
                    let g0 = state.assignment_prob(&r.ctx, 0)?;
                    let a = policy::draw_action(g1, &mut rng);
                    r.g1 = g1;
                    r.g_obs = if a == 1 { g1 } else { g0 };
                    r.g_rule = if d == 1 { g1 } else { g0 };
                    r.blip = Some(blip);
                    r.d = Some(d);
                    a
                }
                _ => policy::draw_action(0.5, &mut rng),
            };

            let block = dgp::step(&self.dgp, &history, a, &mut rng)?;
            if let Some(mut r) = row {
                r.a = a;
                r.y = block.y;
                rows.push(r);
            }
            history.push(block)?;

            if t >= cfg.initial_n && (t - cfg.initial_n).is_multiple_of(refit) {
                let f = self.fit(&rows, &mut boot_rng)?;
                if t == cfg.initial_n {
                    let blip_fn = PolicyBlip { runner: self, fit: &f };
                    for r in rows.iter_mut() {
                        let blip = blip_fn.blip(&r.ctx)?;
                        r.blip = Some(blip);
                        r.d = Some(policy::rule_decision(blip));
                    }
                }
                if checkpoints.contains(&t) {
                    results.push(self.checkpoint(&rows, &f, t)?);
                }
                fit = Some(f);
            }
        }

        let final_fit = fit.expect("at least one checkpoint");
        let offset = cfg.max_n - rows.len();
        let mut steps = Vec::with_capacity(cfg.max_n);
        for (i, block) in history.blocks().iter().enumerate() {
            let t = i + 1;
            let mut step = StepRecord {
                t,
                a: block.a,
                y: block.y,
                w: block.w.clone(),
                g_used: None,
                g_rule: None,
                blip_estimate: None,
                d: None,
                q_obs: None,
                q_rule: None,
            };
            if t > offset {
                let r = &rows[t - offset - 1];
                let d = r.d.expect("rule recorded");
                step.g_used = Some(r.g_obs);
                step.g_rule = Some(r.g_rule);
                step.blip_estimate = r.blip;
                step.d = Some(d);
                step.q_obs = Some(final_fit.qbar(self, r, r.a)?);
                step.q_rule = Some(final_fit.qbar(self, r, d)?);
            }
            steps.push(step);
        }
        Ok(Trajectory { history, steps, result: TrialResult { seed, checkpoints: results } })
    }
}

/// Simulates one trial and keeps the per-step record.
pub fn simulate_trial(config: &TrialConfig, seed: u64) -> Result<Trajectory> {
    Runner::new(config)?.run(seed)
}

/// Runs one adaptive trial.
pub fn run_adaptive_trial(config: &TrialConfig, seed: u64) -> Result<TrialResult> {
    Ok(simulate_trial(config, seed)?.result)
}

/// Trials for seeds `base_seed..base_seed + n_draws`, returned in seed order.
pub fn run_draws(config: &TrialConfig, n_draws: usize) -> Result<Vec<TrialResult>> {
    if n_draws == 0 {
        return Err(Error::InvalidArgument("at least one draw is required".into()));
    }
    let runner = Runner::new(config)?;
    (0..n_draws as u64)
        .into_par_iter()
        .map(|i| runner.run(config.base_seed.wrapping_add(i)).map(|t| t.result))
        .collect()
}

/// Coverage and estimator variance per checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub checkpoints: Vec<usize>,
    /// Percentage of draws whose interval covers the truth.
    pub coverage: Vec<f64>,
    /// Sample variance of `psi_hat` across draws; `None` with a single draw.
    pub variance: Vec<Option<f64>>,
    pub mean_psi: Vec<f64>,
    pub mean_truth: Vec<f64>,
    pub n_draws: usize,
}

impl CoverageTable {
    pub fn from_trials(trials: &[TrialResult]) -> Result<Self> {
        let first = trials.first().ok_or_else(|| Error::EmptyInput("no trials".into()))?;
        let checkpoints: Vec<usize> = first.checkpoints.iter().map(|c| c.n).collect();
        if trials.iter().any(|t| t.checkpoints.iter().map(|c| c.n).ne(checkpoints.iter().copied())) {
            return Err(Error::InvalidArgument("trials disagree on checkpoints".into()));
        }
        let n = trials.len() as f64;
        let mut table = CoverageTable {
            checkpoints: checkpoints.clone(),
            coverage: Vec::new(),
            variance: Vec::new(),
            mean_psi: Vec::new(),
            mean_truth: Vec::new(),
            n_draws: trials.len(),
        };
        for k in 0..checkpoints.len() {
            let psi: Vec<f64> = trials.iter().map(|t| t.checkpoints[k].report.psi_hat).collect();
            let hits = trials.iter().filter(|t| t.checkpoints[k].covered).count();
            let mean = psi.iter().sum::<f64>() / n;
            table.coverage.push(100.0 * hits as f64 / n);
            table.variance.push(
                (trials.len() > 1).then(|| psi.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)),
            );
            table.mean_psi.push(mean);
            table.mean_truth.push(trials.iter().map(|t| t.checkpoints[k].truth).sum::<f64>() / n);
        }
        Ok(table)
    }
}

/// Monte Carlo coverage over `n_draws` trials.
pub fn mc_coverage(config: &TrialConfig, n_draws: usize) -> Result<CoverageTable> {
    CoverageTable::from_trials(&run_draws(config, n_draws)?)
}
