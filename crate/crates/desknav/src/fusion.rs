//! Uncertainty-gated fusion of the fast planner and the reflective reasoner.
//!
//! The gate is the conformal prediction set: a singleton executes the
//! planner's choice directly, anything larger consults the reasoner and
//! blends the two opinions with weight `α = min(|C|/L_max, 0.9)`:
//!
//! ```text
//! fused = (1 − α)·planner + α·sparse(reasoner)
//! ```
//!
//! The fused vector is applied literally, with no renormalization — its
//! entries sum to `(1 − α) + α·c`, not 1, and only its argmax is consumed
//! downstream. Keeping the equation literal makes every worked example
//! bit-reproducible.

use crate::common::{argmax, ActionDistribution};
use crate::conformal::{ConformalModel, PredictionSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("prediction set cardinality must be ≥ 1")]
    ZeroCardinality,
    #[error("normalization factor l_max must be ≥ 1")]
    ZeroLMax,
    #[error("chosen index {chosen} out of range for {len} candidates")]
    ChosenOutOfRange { chosen: usize, len: usize },
    #[error("planner and reasoner vectors differ in length: {planner} vs {reasoner}")]
    LengthMismatch { planner: usize, reasoner: usize },
    #[error("fusion weight alpha {0} outside [0, 0.9]")]
    AlphaOutOfRange(f64),
}

/// A reasoner invocation that could not produce a usable verdict.
#[derive(Debug, Clone, Error)]
#[error("reasoner unavailable: {message}")]
pub struct ReasonerFailure {
    pub message: String,
}

impl ReasonerFailure {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

/// The reflective expert's answer: a candidate index, a confidence in
/// `[0, 1]`, and the templated chain-of-thought text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerVerdict {
    pub chosen: usize,
    pub confidence: f64,
    pub rationale: String,
}

/// Fusion configuration; `l_max` normalizes set cardinality into the weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub l_max: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { l_max: 10 }
    }
}

/// Uncertainty weight `α = min(cardinality / l_max, 0.9)`.
pub fn uncertainty_weight(set_cardinality: usize, l_max: usize) -> Result<f64, FusionError> {
    if set_cardinality == 0 {
        return Err(FusionError::ZeroCardinality);
    }
    if l_max == 0 {
        return Err(FusionError::ZeroLMax);
    }
    Ok((set_cardinality as f64 / l_max as f64).min(0.9))
}

/// Spread the verdict over `k` candidates: confidence at the chosen index,
/// zero everywhere else.
pub fn sparse_reasoner_distribution(
    verdict: &ReasonerVerdict,
    k: usize,
) -> Result<Vec<f64>, FusionError> {
    if verdict.chosen >= k {
        return Err(FusionError::ChosenOutOfRange {
            chosen: verdict.chosen,
            len: k,
        });
    }
    let mut v = vec![0.0; k];
    v[verdict.chosen] = verdict.confidence;
    Ok(v)
}

/// Element-wise `(1 − α)·planner + α·reasoner`, no renormalization.
pub fn fuse(
    planner: &ActionDistribution,
    reasoner: &[f64],
    alpha: f64,
) -> Result<Vec<f64>, FusionError> {
    if planner.len() != reasoner.len() {
        return Err(FusionError::LengthMismatch {
            planner: planner.len(),
            reasoner: reasoner.len(),
        });
    }
    if !(0.0..=0.9).contains(&alpha) {
        return Err(FusionError::AlphaOutOfRange(alpha));
    }
    Ok(planner
        .probs()
        .iter()
        .zip(reasoner)
        .map(|(&p, &r)| (1.0 - alpha) * p + alpha * r)
        .collect())
}

/// Everything one gated decision produced, sufficient to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionOutcome {
    pub prediction_set: PredictionSet,
    /// Set only when the reasoner was consulted.
    pub alpha: Option<f64>,
    pub verdict: Option<ReasonerVerdict>,
    pub fused: Option<Vec<f64>>,
    pub selected: usize,
    pub reasoner_invoked: bool,
    /// True when the callback failed (or kept answering outside the set)
    /// and the decision degraded to the planner argmax.
    pub reasoner_failed: bool,
}

/// Run one gated decision end to end.
///
/// A singleton prediction set returns its sole member without consulting the
/// reasoner. Otherwise the reasoner sees the set; a verdict outside the set
/// is rejected and retried once, after which — or on callback error — the
/// decision degrades to the planner argmax with `reasoner_failed` raised.
/// The decision loop must never stall on an unavailable reasoner.
pub fn decide(
    planner: &ActionDistribution,
    model: &ConformalModel,
    cfg: &FusionConfig,
    mut reasoner: impl FnMut(&PredictionSet) -> Result<ReasonerVerdict, ReasonerFailure>,
) -> FusionOutcome {
    let set = model.prediction_set(planner);
    if let Some(sole) = set.singleton() {
        return FusionOutcome {
            prediction_set: set,
            alpha: None,
            verdict: None,
            fused: None,
            selected: sole,
            reasoner_invoked: false,
            reasoner_failed: false,
        };
    }

    let mut verdict = None;
    for _attempt in 0..2 {
        match reasoner(&set) {
            Ok(v) if set.contains(v.chosen) && v.chosen < planner.len() => {
                verdict = Some(v);
                break;
            }
            Ok(_) | Err(_) => continue,
        }
    }

    match verdict {
        Some(v) => {
            let alpha = uncertainty_weight(set.cardinality(), cfg.l_max)
                .expect("non-empty set, validated l_max");
            let sparse = sparse_reasoner_distribution(&v, planner.len())
                .expect("chosen index validated against the set");
            let fused = fuse(planner, &sparse, alpha).expect("lengths match, alpha in range");
            let selected = argmax(&fused);
            FusionOutcome {
                prediction_set: set,
                alpha: Some(alpha),
                verdict: Some(v),
                fused: Some(fused),
                selected,
                reasoner_invoked: true,
                reasoner_failed: false,
            }
        }
        None => FusionOutcome {
            prediction_set: set,
            alpha: None,
            verdict: None,
            fused: None,
            selected: planner.argmax(),
            reasoner_invoked: true,
            reasoner_failed: true,
        },
    }
}

/// Per-step decision audit appended to the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionAudit {
    pub planner_probs: Vec<f64>,
    pub tau: f64,
    pub set_members: Vec<usize>,
    pub alpha: Option<f64>,
    pub verdict: Option<ReasonerVerdict>,
    pub fused: Option<Vec<f64>>,
    pub selected: usize,
    pub reasoner_invoked: bool,
    pub reasoner_failed: bool,
    /// Path-optimal candidate at this step, recorded for calibration and
    /// offline analysis.
    pub oracle_optimal: usize,
    /// Candidate markers projected onto the panorama, when a layout is
    /// configured: `(candidate id, px, py)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panorama_markers: Option<Vec<(u32, f64, f64)>>,
    /// Rear-mask column intervals for the same layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panorama_mask: Option<((u32, u32), (u32, u32))>,
}
