//! Adaptive single-subject (n-of-1) sequential trials.
//!
//! A single time series is observed block by block: a treatment `A(t)`, an
//! outcome `Y(t)` and covariates `W(t)`. Treatment is assigned by a policy
//! that starts balanced and then tracks the estimated optimal rule
//! `d(C) = 1{B(C) > 0}`, where `B` is the blip of the outcome regression on
//! a fixed-dimensional context `C`. The mean outcome under the rules in force
//! is estimated by TMLE with a martingale central-limit confidence interval.
//!
//! Runnable examples, one per capability:
//!
//! | example | shows |
//! |---|---|
//! | `simulate_sim1a` | drawing a trajectory from a structural DGP |
//! | `context_features` | lagged context extraction |
//! | `smoother_policy` | the exploration smoother and Lemma-style floors |
//! | `logistic_and_selection` | IRLS fits and recursive-origin selection |
//! | `hal_blip_ci` | indicator-basis lasso blip and its bootstrap band |
//! | `tmle_checkpoint` | one TMLE at a checkpoint |
//! | `adaptive_trial` | a full adaptive trial with its data-adaptive truth |
//! | `coverage_study` | Monte Carlo coverage table |
//! | `cond_var_diagnostic` | running conditional-variance diagnostic |

pub mod cli;
pub mod config;
pub mod dgp;
pub mod error;
pub mod harness;
pub mod model;
pub mod policy;
pub mod regression;
pub mod tmle;

pub use config::{LearnerSettings, PolicySettings, Schedule, TrialConfig};
pub use dgp::DgpSpec;
pub use error::{Error, Result};
pub use harness::{mc_coverage, run_adaptive_trial, simulate_trial, CoverageTable, TrialResult};
pub use model::{extract_context, Block, ContextSpec, ContextSummary, TrialHistory, Variable};
pub use policy::{smoother, PolicyMode, PolicyState};
pub use tmle::{tmle_estimate, EstimateReport, TmleInput, TmleRow};
