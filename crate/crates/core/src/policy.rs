//! Explore-exploit treatment assignment from an estimated blip.
//!
//! The smoother maps a blip value `x` to `P(A = 1)`: `c` below `-e`, `1 - c`
//! above `e`, and a cubic bridge in between. The bridge is written as
//! `1/2 + (1/2 - c) x (3e^2 - x^2) / (2e^3)`, which equals the textbook
//! polynomial `-(1/2 - c)/(2e^3) x^3 + (1/2 - c)/(2e/3) x + 1/2` but keeps
//! the sign of the offset from 1/2 exact in floating point.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ContextSummary;
use crate::regression::{BlipCI, BlipModel, FittedCandidate, QBounds};

fn check_params(c: f64, e: f64) -> Result<()> {
    if !(c > 0.0 && c <= 0.5) {
        return Err(Error::InvalidArgument(format!("c must lie in (0, 1/2], got {c}")));
    }
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::InvalidArgument(format!("e must be positive, got {e}")));
    }
    Ok(())
}

/// `G(x)` with failure probability `c` and half-window `e`; output lies in `[c, 1 - c]`.
pub fn smoother(x: f64, c: f64, e: f64) -> Result<f64> {
    check_params(c, e)?;
    Ok(smooth_unchecked(x, c, e))
}

fn smooth_unchecked(x: f64, c: f64, e: f64) -> f64 {
    if x <= -e {
        c
    } else if x >= e {
        1.0 - c
    } else {
        let k = 0.5 - c;
        (0.5 + k * x * (3.0 * e * e - x * x) / (2.0 * e * e * e)).clamp(c, 1.0 - c)
    }
}

/// Rule implied by a blip: treat only when the blip is strictly positive.
pub fn rule_decision(blip: f64) -> u8 {
    u8::from(blip > 0.0)
}

/// Bernoulli(`p`) treatment draw.
pub fn draw_action<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u8 {
    crate::dgp::bernoulli(p, rng)
}

/// Anything that can report a blip estimate at a context.
pub trait BlipFunction: Sync {
    fn blip(&self, context: &ContextSummary) -> Result<f64>;
}

impl BlipFunction for BlipModel {
    fn blip(&self, context: &ContextSummary) -> Result<f64> {
        Ok(self.predict(&context.features))
    }
}

/// A fitted outcome learner viewed through its truncated predictions.
pub struct BoundedBlip<'a> {
    pub model: &'a FittedCandidate,
    pub bounds: QBounds,
}

impl BlipFunction for BoundedBlip<'_> {
    fn blip(&self, context: &ContextSummary) -> Result<f64> {
        self.model.blip(context, self.bounds)
    }
}

impl<F> BlipFunction for F
where
    F: Fn(&ContextSummary) -> Result<f64> + Sync,
{
    fn blip(&self, context: &ContextSummary) -> Result<f64> {
        self(context)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// `P(A = 1) = 1/2` regardless of context.
    Balanced,
    #[default]
    Smoother,
    /// Smoother whose half-window widens to the bootstrap half-width of the blip.
    HalCi,
}

/// Current exploration constants and the blip estimator they act on.
#[derive(Clone, Copy)]
pub struct PolicyState<'a> {
    pub c: f64,
    pub e: f64,
    pub mode: PolicyMode,
    blip_source: Option<&'a dyn BlipFunction>,
    ci_source: Option<&'a BlipCI>,
}

impl<'a> PolicyState<'a> {
    pub fn new(mode: PolicyMode, c: f64, e: f64) -> Result<Self> {
        check_params(c, e)?;
        Ok(Self { c, e, mode, blip_source: None, ci_source: None })
    }

    pub fn balanced() -> Self {
        Self { c: 0.5, e: 1.0, mode: PolicyMode::Balanced, blip_source: None, ci_source: None }
    }

    pub fn with_blip(mut self, blip: &'a dyn BlipFunction) -> Self {
        self.blip_source = Some(blip);
        self
    }

    pub fn with_ci(mut self, ci: &'a BlipCI) -> Self {
        self.ci_source = Some(ci);
        self
    }

    pub fn blip(&self, context: &ContextSummary) -> Result<f64> {
        self.blip_source
            .ok_or_else(|| Error::PolicyState("no fitted blip estimator".into()))?
            .blip(context)
    }

    /// The treatment the current rule recommends.
    pub fn decision(&self, context: &ContextSummary) -> Result<u8> {
        Ok(rule_decision(self.blip(context)?))
    }

    fn window(&self, context: &ContextSummary) -> Result<f64> {
        match self.mode {
            PolicyMode::HalCi => {
                let ci = self
                    .ci_source
                    .ok_or_else(|| Error::PolicyState("hal_ci mode requires a bootstrap band".into()))?;
                Ok(self.e.max(ci.half_width(&context.features)))
            }
            _ => Ok(self.e),
        }
    }

    /// `g_t(a | C)`. Each arm is evaluated directly (`G(x)` for `a = 1`,
    /// `G(-x)` for `a = 0`) so the exploration floor `c` holds exactly.
    pub fn assignment_prob(&self, context: &ContextSummary, a: u8) -> Result<f64> {
        if self.mode == PolicyMode::Balanced {
            return Ok(0.5);
        }
        let x = self.blip(context)?;
        let e = self.window(context)?;
        Ok(match a {
            1 => smooth_unchecked(x, self.c, e),
            0 => smooth_unchecked(-x, self.c, e),
            _ => return Err(Error::InvalidArgument(format!("treatment must be 0 or 1, got {a}"))),
        })
    }

    /// `g_t(1 | C)`.
    pub fn treatment_prob(&self, context: &ContextSummary) -> Result<f64> {
        self.assignment_prob(context, 1)
    }
}
