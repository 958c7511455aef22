//! Split conformal prediction over action candidates.
//!
//! Calibration collects nonconformity scores `s_i = 1 − p(true action)` on
//! held-out decisions and fixes the threshold `τ` at the finite-sample
//! conformal quantile, rank `⌈(n+1)(1−ε)⌉` of the sorted scores. At decision
//! time the prediction set keeps every candidate whose score is `≤ τ`; under
//! exchangeability the true action lands in that set with probability at
//! least `1 − ε`.
//!
//! The set cardinality is the uncertainty signal consumed by the fusion
//! layer: a singleton means the planner is confident, anything larger hands
//! the step to the reflective expert.

use crate::common::ActionDistribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("calibration requires at least one record")]
    EmptyCalibration,
    #[error("miscoverage epsilon must lie in (0, 1), got {0}")]
    EpsilonOutOfRange(f64),
    #[error("nonconformity score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("label {label} out of range for distribution of length {len}")]
    LabelOutOfRange { label: usize, len: usize },
    #[error("empty evaluation stream")]
    EmptyStream,
}

/// Nonconformity of one calibration example: `1 − p(true action)`.
///
/// Higher scores mean the planner put less mass on the action that turned
/// out to be correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub score: f64,
}

impl CalibrationRecord {
    pub fn new(score: f64) -> Result<Self, ConformalError> {
        if !(0.0..=1.0).contains(&score) || !score.is_finite() {
            return Err(ConformalError::ScoreOutOfRange(score));
        }
        Ok(Self { score })
    }
}

/// Nonconformity of `label` under `dist`: `1 − dist[label]`.
pub fn nonconformity(
    dist: &ActionDistribution,
    label: usize,
) -> Result<f64, ConformalError> {
    match dist.get(label) {
        Some(p) => Ok(1.0 - p),
        None => Err(ConformalError::LabelOutOfRange {
            label,
            len: dist.len(),
        }),
    }
}

/// Which quantile rank fixes `τ` from the sorted calibration scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum QuantileRule {
    /// Rank `⌈(n+1)(1−ε)⌉`, clamped to `n`. This is the convention under
    /// which the finite-sample coverage guarantee holds exactly.
    #[default]
    FiniteSample,
    /// Plain empirical quantile, rank `⌈n(1−ε)⌉`.
    Empirical,
}

/// A calibrated nonconformity threshold for a given miscoverage rate.
///
/// The sorted calibration scores are retained so a persisted model can be
/// audited and reloaded bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalModel {
    pub epsilon: f64,
    pub tau: f64,
    pub n: usize,
    pub scores: Vec<f64>,
    #[serde(default)]
    pub rule: QuantileRule,
}

impl ConformalModel {
    /// Calibrate with the finite-sample conformal rank.
    pub fn calibrate(
        records: &[CalibrationRecord],
        epsilon: f64,
    ) -> Result<Self, ConformalError> {
        Self::calibrate_with_rule(records, epsilon, QuantileRule::FiniteSample)
    }

    pub fn calibrate_with_rule(
        records: &[CalibrationRecord],
        epsilon: f64,
        rule: QuantileRule,
    ) -> Result<Self, ConformalError> {
        if records.is_empty() {
            return Err(ConformalError::EmptyCalibration);
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(ConformalError::EpsilonOutOfRange(epsilon));
        }
        let mut scores: Vec<f64> = records.iter().map(|r| r.score).collect();
        scores.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
        let n = scores.len();
        let raw_rank = match rule {
            QuantileRule::FiniteSample => ((n as f64 + 1.0) * (1.0 - epsilon)).ceil(),
            QuantileRule::Empirical => (n as f64 * (1.0 - epsilon)).ceil(),
        };
        let rank = (raw_rank as usize).clamp(1, n);
        let tau = scores[rank - 1];
        Ok(Self {
            epsilon,
            tau,
            n,
            scores,
            rule,
        })
    }

    /// Build a model with a fixed threshold and no calibration data, for
    /// operating points pinned from outside.
    pub fn fixed_tau(tau: f64, epsilon: f64) -> Self {
        Self {
            epsilon,
            tau,
            n: 0,
            scores: Vec::new(),
            rule: QuantileRule::FiniteSample,
        }
    }

    /// Prediction set for one decision: all candidates with
    /// `1 − p_i ≤ τ`, falling back to the argmax singleton when the raw
    /// filter would be empty so the decision loop never stalls.
    pub fn prediction_set(&self, dist: &ActionDistribution) -> PredictionSet {
        let members: Vec<usize> = dist
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, &p)| 1.0 - p <= self.tau)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            PredictionSet {
                members: vec![dist.argmax()],
                fallback: true,
            }
        } else {
            PredictionSet {
                members,
                fallback: false,
            }
        }
    }

    /// Fraction of labeled decisions whose true index lands in the
    /// prediction set.
    pub fn empirical_coverage(
        &self,
        labeled: &[(ActionDistribution, usize)],
    ) -> Result<f64, ConformalError> {
        if labeled.is_empty() {
            return Err(ConformalError::EmptyStream);
        }
        let covered = labeled
            .iter()
            .filter(|(dist, label)| self.prediction_set(dist).contains(*label))
            .count();
        Ok(covered as f64 / labeled.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// The subset of candidate indices statistically plausible at the model's
/// miscoverage rate. Never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    members: Vec<usize>,
    /// True when the raw `≤ τ` filter was empty and the argmax was forced in.
    fallback: bool,
}

impl PredictionSet {
    /// Build directly from sorted member indices (used by decision modes
    /// that bypass calibration, e.g. handing the full candidate set over).
    pub fn from_members(members: Vec<usize>) -> Self {
        Self {
            members,
            fallback: false,
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn cardinality(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.contains(&index)
    }

    pub fn is_fallback(&self) -> bool {
        self.fallback
    }

    /// The sole member of a singleton set.
    pub fn singleton(&self) -> Option<usize> {
        if self.members.len() == 1 {
            Some(self.members[0])
        } else {
            None
        }
    }
}
