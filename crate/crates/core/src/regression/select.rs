//! Candidate outcome learners and the recursive-origin discrete selector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lasso::{fit_blip_lasso, BlipModel, LassoOptions};
use super::logistic::{
    fit_logistic, interaction_layout, main_terms_layout, quasi_nll, DesignRow, QBounds, Role,
    WorkingModel,
};
use super::pseudo::d1_pseudo_outcome;
use crate::error::{Error, Result};
use crate::model::ContextSummary;

/// A named estimator prescription.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Candidate {
    /// Logistic regression on intercept, treatment and context main terms.
    GlmMain,
    /// `GlmMain` plus treatment-by-feature interactions.
    GlmInteract,
    InterceptOnly,
    /// Main-terms `Qbar(C, 0)` combined with an indicator-basis lasso fit
    /// of the doubly-robust blip pseudo-outcome under L1 budget `m`.
    LassoBlip { m: f64 },
}

pub const DEFAULT_LASSO_BUDGET: f64 = 2.0;

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Candidate::GlmMain => f.pad("glm_main"),
            Candidate::GlmInteract => f.pad("glm_interact"),
            Candidate::InterceptOnly => f.pad("intercept_only"),
            Candidate::LassoBlip { m } => f.pad(&format!("lasso_blip:{m}")),
        }
    }
}

impl FromStr for Candidate {
    type Err = Error;

    /// Accepts `glm_main`, `glm_interact`, `intercept_only`, `lasso_blip`
    /// and `lasso_blip:<M>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glm_main" => Ok(Candidate::GlmMain),
            "glm_interact" => Ok(Candidate::GlmInteract),
            "intercept_only" => Ok(Candidate::InterceptOnly),
            "lasso_blip" => Ok(Candidate::LassoBlip { m: DEFAULT_LASSO_BUDGET }),
            _ => s
                .strip_prefix("lasso_blip:")
                .and_then(|m| m.parse::<f64>().ok())
                .filter(|m| *m >= 0.0)
                .map(|m| Candidate::LassoBlip { m })
                .ok_or_else(|| Error::InvalidArgument(format!("unknown candidate '{s}'"))),
        }
    }
}

impl Serialize for Candidate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Candidate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Observation used to train candidates; `g1` is the assignment
/// probability of `A = 1` that was in force for this row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRow {
    pub features: Vec<f64>,
    pub a: u8,
    pub y: f64,
    pub g1: f64,
}

/// Settings shared by every candidate fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub q_bounds: QBounds,
    pub g_floor: f64,
    pub lasso: LassoOptions,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { q_bounds: QBounds::default(), g_floor: 0.01, lasso: LassoOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedCandidate {
    Glm { model: WorkingModel },
    LassoBlip { base: WorkingModel, blip: BlipModel },
}

impl FittedCandidate {
    pub fn predict_qbar(&self, context: &ContextSummary, a: u8, bounds: QBounds) -> Result<f64> {
        match self {
            FittedCandidate::Glm { model } => model.predict_qbar(context, a, bounds),
            FittedCandidate::LassoBlip { base, blip } => {
                let q0 = base.predict_qbar(context, 0, bounds)?;
                Ok(if a == 1 { bounds.clamp(q0 + blip.predict(&context.features)) } else { q0 })
            }
        }
    }

    pub fn blip(&self, context: &ContextSummary, bounds: QBounds) -> Result<f64> {
        Ok(self.predict_qbar(context, 1, bounds)? - self.predict_qbar(context, 0, bounds)?)
    }

    /// Whether any logistic component needed the ridge fallback.
    pub fn ridge_fallback(&self) -> bool {
        match self {
            FittedCandidate::Glm { model } => model.ridge_fallback,
            FittedCandidate::LassoBlip { base, .. } => base.ridge_fallback,
        }
    }
}

fn design_rows(rows: &[TrainingRow]) -> Vec<DesignRow> {
    rows.iter().map(|r| DesignRow::new(r.features.clone(), r.a, r.y)).collect()
}

fn layout_for(candidate: Candidate, dim: usize) -> Vec<Role> {
    match candidate {
        Candidate::GlmMain | Candidate::LassoBlip { .. } => main_terms_layout(dim),
        Candidate::GlmInteract => interaction_layout(dim),
        Candidate::InterceptOnly => vec![Role::Intercept],
    }
}

pub fn fit_candidate(candidate: Candidate, rows: &[TrainingRow], settings: &FitSettings) -> Result<FittedCandidate> {
    let dim = rows
        .first()
        .map(|r| r.features.len())
        .ok_or_else(|| Error::EmptyInput("no training rows".into()))?;
    let design = design_rows(rows);
    let model = fit_logistic(&design, &layout_for(candidate, dim), None)?;
    match candidate {
        Candidate::LassoBlip { m } => {
            let pseudo = pseudo_outcome_rows(&model, rows, settings)?;
            let blip = fit_blip_lasso(&pseudo, m, &settings.lasso)?;
            Ok(FittedCandidate::LassoBlip { base: model, blip })
        }
        _ => Ok(FittedCandidate::Glm { model }),
    }
}

/// `(features, D1)` pairs for the blip lasso, with `model` as the outcome fit.
pub fn pseudo_outcome_rows(
    model: &WorkingModel,
    rows: &[TrainingRow],
    settings: &FitSettings,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let bounds = settings.q_bounds;
    rows.iter()
        .map(|r| {
            let ctx = ContextSummary::new(r.features.clone(), 0);
            let q1 = model.predict_qbar(&ctx, 1, bounds)?;
            let q0 = model.predict_qbar(&ctx, 0, bounds)?;
            let d1 = d1_pseudo_outcome(r.y, r.a, q1, q0, r.g1, settings.g_floor)?;
            Ok((r.features.clone(), d1))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub index: usize,
    pub fitted: FittedCandidate,
    /// Validation quasi-NLL per candidate; `None` where the training fit failed.
    pub validation_loss: Vec<Option<f64>>,
}

/// Mean quasi negative log-likelihood of `fitted` on `rows`.
pub fn validation_loss(fitted: &FittedCandidate, rows: &[TrainingRow], bounds: QBounds) -> Result<f64> {
    let total = rows.iter().try_fold(0.0, |acc, r| {
        let ctx = ContextSummary::new(r.features.clone(), 0);
        Ok::<_, Error>(acc + quasi_nll(r.y, fitted.predict_qbar(&ctx, r.a, bounds)?))
    })?;
    Ok(total / rows.len() as f64)
}

/// Trains every candidate on all but the last `val_size` rows, scores each on
/// the held-out tail, and refits the lowest-loss candidate (ties go to the
/// lower index) on all rows.
pub fn select_recursive_origin(
    candidates: &[Candidate],
    rows: &[TrainingRow],
    val_size: usize,
    settings: &FitSettings,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to select from".into()));
    }
    if val_size == 0 || rows.len() < 2 * val_size {
        return Err(Error::InvalidArgument(format!(
            "recursive-origin selection needs at least {} rows, got {}",
            2 * val_size.max(1),
            rows.len()
        )));
    }
    let (train, valid) = rows.split_at(rows.len() - val_size);
    let mut losses = Vec::with_capacity(candidates.len());
    let mut failures = Vec::new();
    for &c in candidates {
        match fit_candidate(c, train, settings).and_then(|f| validation_loss(&f, valid, settings.q_bounds)) {
            Ok(loss) if loss.is_finite() => losses.push(Some(loss)),
            Ok(loss) => {
                failures.push(format!("{c}: non-finite validation loss {loss}"));
                losses.push(None);
            }
            Err(e) => {
                failures.push(format!("{c}: {e}"));
                losses.push(None);
            }
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, loss) in losses.iter().enumerate() {
        if let Some(l) = *loss {
            if best.is_none_or(|(_, b)| l < b) {
                best = Some((i, l));
            }
        }
    }
    let (index, _) = best.ok_or(Error::AllCandidatesFailed(failures))?;
    let fitted = fit_candidate(candidates[index], rows, settings)?;
    Ok(Selection { index, fitted, validation_loss: losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_rows(n: usize) -> Vec<TrainingRow> {
        (0..n)
            .map(|i| TrainingRow {
                features: vec![(i % 2) as f64],
                a: ((i / 2) % 2) as u8,
                y: ((i / 3) % 2) as f64,
                g1: 0.5,
            })
            .collect()
    }

    #[test]
    fn candidate_names_parse() {
        for s in ["glm_main", "glm_interact", "intercept_only", "lasso_blip:1.5"] {
            assert_eq!(s.parse::<Candidate>().unwrap().to_string(), s);
        }
        assert_eq!(
            "lasso_blip".parse::<Candidate>().unwrap(),
            Candidate::LassoBlip { m: DEFAULT_LASSO_BUDGET }
        );
        assert!("xgboost".parse::<Candidate>().is_err());
        assert!("lasso_blip:-1".parse::<Candidate>().is_err());
    }

    #[test]
    fn single_candidate_is_selected() {
        let rows = toy_rows(80);
        let s = select_recursive_origin(&[Candidate::GlmMain], &rows, 30, &FitSettings::default()).unwrap();
        assert_eq!(s.index, 0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let rows = toy_rows(80);
        let s = select_recursive_origin(
            &[Candidate::GlmMain, Candidate::GlmMain],
            &rows,
            30,
            &FitSettings::default(),
        )
        .unwrap();
        assert_eq!(s.index, 0);
        assert_eq!(s.validation_loss[0], s.validation_loss[1]);
    }

    #[test]
    fn too_few_rows() {
        let rows = toy_rows(50);
        assert!(select_recursive_origin(&[Candidate::GlmMain], &rows, 30, &FitSettings::default()).is_err());
        assert!(select_recursive_origin(&[], &rows, 10, &FitSettings::default()).is_err());
    }

    #[test]
    fn lasso_blip_candidate_predicts_within_bounds() {
        let rows = toy_rows(100);
        let settings = FitSettings::default();
        let fit = fit_candidate(Candidate::LassoBlip { m: 1.0 }, &rows, &settings).unwrap();
        for f in [0.0, 1.0] {
            let ctx = ContextSummary::new(vec![f], 0);
            for a in [0, 1] {
                let q = fit.predict_qbar(&ctx, a, settings.q_bounds).unwrap();
                assert!((settings.q_bounds.low..=settings.q_bounds.high).contains(&q));
            }
            assert!(fit.blip(&ctx, settings.q_bounds).unwrap().abs() <= 1.0);
        }
    }
}
