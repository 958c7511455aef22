//! The two decision experts and their shared machinery.
//!
//! The fast planner is a noisy oracle: logits are `−β · (remaining
//! shortest-path distance)` per candidate plus seeded Gaussian noise, split
//! into a local and a global branch that are blended as `w·F_l + (1−w)·F_g`
//! and pushed through a numerically safe softmax. Its noise level is the
//! skill knob that makes prediction sets vary in size.
//!
//! The reflective expert is a scripted stand-in for a language reasoner: it
//! receives the structured five-section prompt and the admissible candidate
//! set, picks the member closest to the goal by path (subject to a
//! configured error rate), and emits a templated five-section
//! chain-of-thought rationale with a confidence score.
//!
//! Panorama geometry maps bearings to equirectangular pixel columns so
//! candidate markers and the rear attenuation mask can be exported; no image
//! raster is produced here.

use crate::common::{
    normalize_heading, ActionDistribution, CandidateSet, Pose2D, WaypointKind,
};
use crate::conformal::PredictionSet;
use crate::fusion::ReasonerVerdict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error("logit vector must be non-empty")]
    EmptyLogits,
    #[error("non-finite logit {0}")]
    NonFiniteLogit(f64),
    #[error("local branch has {local} entries, global has {global}")]
    BranchShapeMismatch { local: usize, global: usize },
    #[error("branch weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("elevation {0} outside (-π/2, π/2)")]
    ElevationOutOfRange(f64),
    #[error("rear mask half-width {0} outside [0, π]")]
    HalfwidthOutOfRange(f64),
    #[error("panorama dimensions must be positive")]
    DegenerateLayout,
    #[error("prompt parse error: {0}")]
    PromptParse(String),
}

/// Local and global branch logits plus the learned-style blend weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLogits {
    pub local: Vec<f64>,
    pub global: Vec<f64>,
    pub weight: f64,
}

/// Convex blend `w·local + (1−w)·global`.
pub fn fuse_branch_logits(cl: &CandidateLogits) -> Result<Vec<f64>, ExpertError> {
    if cl.local.len() != cl.global.len() {
        return Err(ExpertError::BranchShapeMismatch {
            local: cl.local.len(),
            global: cl.global.len(),
        });
    }
    if !(0.0..=1.0).contains(&cl.weight) {
        return Err(ExpertError::WeightOutOfRange(cl.weight));
    }
    Ok(cl
        .local
        .iter()
        .zip(&cl.global)
        .map(|(&l, &g)| cl.weight * l + (1.0 - cl.weight) * g)
        .collect())
}

/// Softmax with max subtraction; order-preserving and overflow safe.
pub fn softmax(logits: &[f64]) -> Result<ActionDistribution, ExpertError> {
    if logits.is_empty() {
        return Err(ExpertError::EmptyLogits);
    }
    for &x in logits {
        if !x.is_finite() {
            return Err(ExpertError::NonFiniteLogit(x));
        }
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ActionDistribution::new(exps.iter().map(|&e| e / sum).collect())
        .map_err(|_| ExpertError::NonFiniteLogit(f64::NAN))
}

// ---------------------------------------------------------------------------
// Panorama geometry
// ---------------------------------------------------------------------------

/// Number of horizontal sub-views the panorama is divided into (30° each).
pub const PANORAMA_VIEWS: usize = 12;

/// Equirectangular panorama dimensions and rear-mask configuration.
///
/// The mask width and alpha have no canonical values; the defaults are
/// chosen for visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanoramaLayout {
    pub width_px: u32,
    pub height_px: u32,
    pub rear_mask_alpha: f64,
    pub rear_mask_halfwidth: f64,
}

impl Default for PanoramaLayout {
    fn default() -> Self {
        Self {
            width_px: 1200,
            height_px: 600,
            rear_mask_alpha: 0.5,
            rear_mask_halfwidth: PI / 3.0,
        }
    }
}

impl PanoramaLayout {
    pub fn new(
        width_px: u32,
        height_px: u32,
        rear_mask_alpha: f64,
        rear_mask_halfwidth: f64,
    ) -> Result<Self, ExpertError> {
        if width_px == 0 || height_px == 0 {
            return Err(ExpertError::DegenerateLayout);
        }
        if !(0.0..=PI).contains(&rear_mask_halfwidth) {
            return Err(ExpertError::HalfwidthOutOfRange(rear_mask_halfwidth));
        }
        Ok(Self {
            width_px,
            height_px,
            rear_mask_alpha,
            rear_mask_halfwidth,
        })
    }

    /// Index of the 30° sub-view a bearing falls into; view 0 is straight
    /// ahead, views count counter-clockwise.
    pub fn view_index(bearing: f64) -> usize {
        let deg = normalize_heading(bearing).unwrap_or(0.0).to_degrees();
        let k = (deg / 30.0).round() as i64;
        k.rem_euclid(PANORAMA_VIEWS as i64) as usize
    }
}

/// Map a bearing/elevation direction to pixel coordinates on the panorama.
///
/// Column position is linear in bearing; straight ahead lands on the image
/// center and bearing π wraps to column 0 — the lateral edges are the
/// agent's backward view. Rows are linear in elevation.
pub fn project_to_panorama(
    bearing: f64,
    elevation: f64,
    layout: &PanoramaLayout,
) -> Result<(f64, f64), ExpertError> {
    if !elevation.is_finite() || elevation.abs() >= PI / 2.0 {
        return Err(ExpertError::ElevationOutOfRange(elevation));
    }
    let bearing = normalize_heading(bearing)
        .map_err(|_| ExpertError::NonFiniteLogit(bearing))?;
    let w = layout.width_px as f64;
    let mut px = w * (0.5 + bearing / TAU);
    if px >= w {
        px -= w;
    }
    let py = layout.height_px as f64 * (0.5 - elevation / PI);
    Ok((px, py))
}

/// The two half-open column intervals covering bearings within
/// `±rear_mask_halfwidth` of π: one at each lateral edge of the panorama.
pub fn rear_mask_region(layout: &PanoramaLayout) -> ((u32, u32), (u32, u32)) {
    let w = layout.width_px as f64;
    let span = (w * layout.rear_mask_halfwidth / TAU).round() as u32;
    let span = span.min(layout.width_px);
    (
        (0, span),
        (layout.width_px - span, layout.width_px),
    )
}

// ---------------------------------------------------------------------------
// Structured prompt
// ---------------------------------------------------------------------------

/// One executed subgoal in the history section: direction and distance moved
/// plus the panorama view tag it was seen in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryStep {
    pub bearing: f64,
    pub distance: f64,
    pub view: String,
}

/// Planner recommendation surfaced in the suggestion section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub label: String,
    pub probability: f64,
}

/// One line of the candidate section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PromptCandidate {
    Stop,
    Waypoint {
        id: u32,
        bearing: f64,
        distance: f64,
        kind: WaypointKind,
    },
}

/// The five-section prompt handed to the reflective expert, always
/// serialized in the order system → instruction → history → candidate →
/// suggestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredPrompt {
    pub system: String,
    pub instruction: String,
    pub history: Vec<HistoryStep>,
    pub candidates: Vec<PromptCandidate>,
    pub suggestion: Option<Suggestion>,
}

const SYSTEM_TEXT: &str = "You are a navigation agent. Inputs: an instruction, the trajectory so far, \
the admissible candidate waypoints, and the fast planner's suggestion. Output: one candidate label \
and a confidence in [0, 1].";

const NO_HISTORY: &str = "no prior steps";

/// Render a relative bearing as rounded degrees with a side word; positive
/// bearings are to the left.
fn render_bearing(bearing: f64) -> String {
    let deg = bearing.to_degrees();
    let rounded = deg.abs().round() as i64;
    if rounded == 0 {
        "0° ahead".to_string()
    } else if deg > 0.0 {
        format!("{rounded}° left")
    } else {
        format!("{rounded}° right")
    }
}

fn parse_bearing(text: &str) -> Result<f64, ExpertError> {
    let mut parts = text.split_whitespace();
    let deg_part = parts
        .next()
        .ok_or_else(|| ExpertError::PromptParse(format!("empty bearing in {text:?}")))?;
    let side = parts
        .next()
        .ok_or_else(|| ExpertError::PromptParse(format!("missing side in {text:?}")))?;
    let deg: f64 = deg_part
        .strip_suffix("°")
        .ok_or_else(|| ExpertError::PromptParse(format!("missing degree sign in {text:?}")))?
        .parse()
        .map_err(|_| ExpertError::PromptParse(format!("bad degrees in {text:?}")))?;
    let signed = match side {
        "left" => deg,
        "right" => -deg,
        "ahead" => 0.0,
        other => {
            return Err(ExpertError::PromptParse(format!(
                "unknown side {other:?}"
            )))
        }
    };
    normalize_heading(signed.to_radians())
        .map_err(|_| ExpertError::PromptParse(format!("non-finite bearing in {text:?}")))
}

impl StructuredPrompt {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("[system]\n");
        out.push_str(&self.system);
        out.push_str("\n[instruction]\n");
        out.push_str(&self.instruction);
        out.push_str("\n[history]\n");
        if self.history.is_empty() {
            out.push_str(NO_HISTORY);
            out.push('\n');
        } else {
            for (i, h) in self.history.iter().enumerate() {
                out.push_str(&format!(
                    "step {}: {}, {:.2} m, view {}\n",
                    i + 1,
                    render_bearing(h.bearing),
                    h.distance,
                    h.view
                ));
            }
        }
        out.push_str("[candidate]\n");
        for c in &self.candidates {
            match c {
                PromptCandidate::Stop => {
                    out.push_str("stop: end the episode at the current position\n");
                }
                PromptCandidate::Waypoint {
                    id,
                    bearing,
                    distance,
                    kind,
                } => {
                    out.push_str(&format!(
                        "g{id}: {}, {distance:.2} m",
                        render_bearing(*bearing)
                    ));
                    // Ghost is the default connectivity for a fresh
                    // candidate; only the exceptions are annotated.
                    if *kind != WaypointKind::Ghost {
                        out.push_str(&format!(", {}", kind.label()));
                    }
                    out.push('\n');
                }
            }
        }
        out.push_str("[suggestion]\n");
        match &self.suggestion {
            Some(s) => out.push_str(&format!("{} (p = {:.2})\n", s.label, s.probability)),
            None => out.push_str("none\n"),
        }
        out
    }

    /// Parse a rendered prompt back into its sections. Bearings come back
    /// within ±0.5° and distances within ±0.005 m of what was emitted.
    pub fn parse(text: &str) -> Result<Self, ExpertError> {
        let mut sections: Vec<(String, Vec<String>)> = Vec::new();
        for line in text.lines() {
            if line.starts_with('[') && line.ends_with(']') {
                sections.push((line[1..line.len() - 1].to_string(), Vec::new()));
            } else if let Some(last) = sections.last_mut() {
                last.1.push(line.to_string());
            } else if !line.trim().is_empty() {
                return Err(ExpertError::PromptParse(format!(
                    "content before first section: {line:?}"
                )));
            }
        }
        let names: Vec<&str> = sections.iter().map(|(n, _)| n.as_str()).collect();
        if names != ["system", "instruction", "history", "candidate", "suggestion"] {
            return Err(ExpertError::PromptParse(format!(
                "expected the five fixed sections, got {names:?}"
            )));
        }

        let body = |i: usize| sections[i].1.join("\n").trim_end().to_string();
        let system = body(0);
        let instruction = body(1);

        let mut history = Vec::new();
        for line in &sections[2].1 {
            let line = line.trim();
            if line.is_empty() || line == NO_HISTORY {
                continue;
            }
            let rest = line
                .split_once(": ")
                .ok_or_else(|| ExpertError::PromptParse(format!("bad history line {line:?}")))?
                .1;
            let mut fields = rest.split(", ");
            let bearing = parse_bearing(fields.next().unwrap_or_default())?;
            let distance = parse_distance(fields.next().unwrap_or_default())?;
            let view = fields
                .next()
                .and_then(|f| f.strip_prefix("view "))
                .ok_or_else(|| ExpertError::PromptParse(format!("missing view in {line:?}")))?
                .to_string();
            history.push(HistoryStep {
                bearing,
                distance,
                view,
            });
        }

        let mut candidates = Vec::new();
        for line in &sections[3].1 {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with("stop:") {
                candidates.push(PromptCandidate::Stop);
                continue;
            }
            let (label, rest) = line
                .split_once(": ")
                .ok_or_else(|| ExpertError::PromptParse(format!("bad candidate line {line:?}")))?;
            let id: u32 = label
                .strip_prefix('g')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ExpertError::PromptParse(format!("bad candidate id {label:?}")))?;
            let mut fields = rest.split(", ");
            let bearing = parse_bearing(fields.next().unwrap_or_default())?;
            let distance = parse_distance(fields.next().unwrap_or_default())?;
            let kind = match fields.next() {
                None => WaypointKind::Ghost,
                Some("visited") => WaypointKind::Visited,
                Some("current") => WaypointKind::Current,
                Some(other) => {
                    return Err(ExpertError::PromptParse(format!(
                        "unknown connectivity {other:?}"
                    )))
                }
            };
            candidates.push(PromptCandidate::Waypoint {
                id,
                bearing,
                distance,
                kind,
            });
        }

        let sugg_line = sections[4].1.join("\n");
        let sugg_line = sugg_line.trim();
        let suggestion = if sugg_line == "none" || sugg_line.is_empty() {
            None
        } else {
            let (label, rest) = sugg_line
                .split_once(" (p = ")
                .ok_or_else(|| ExpertError::PromptParse(format!("bad suggestion {sugg_line:?}")))?;
            let probability: f64 = rest
                .strip_suffix(')')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ExpertError::PromptParse(format!("bad suggestion {sugg_line:?}")))?;
            Some(Suggestion {
                label: label.to_string(),
                probability,
            })
        };

        Ok(Self {
            system,
            instruction,
            history,
            candidates,
            suggestion,
        })
    }
}

fn parse_distance(text: &str) -> Result<f64, ExpertError> {
    text.trim()
        .strip_suffix(" m")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ExpertError::PromptParse(format!("bad distance {text:?}")))
}

/// Everything a decision step exposes to the experts and the prompt builder.
pub struct StepContext<'a> {
    pub instruction: &'a str,
    pub history: &'a [HistoryStep],
    pub candidates: &'a CandidateSet,
    pub pose: Pose2D,
    pub world_kind: &'a str,
    pub suggestion: Option<Suggestion>,
    /// Remaining shortest-path distance from a world point to the goal.
    pub remaining_distance: &'a dyn Fn((f64, f64)) -> f64,
}

impl<'a> StepContext<'a> {
    /// Remaining distance if candidate `index` is committed to: the stop
    /// candidate leaves the agent where it stands.
    pub fn candidate_remaining(&self, index: usize) -> f64 {
        match self.candidates.waypoint_at(index) {
            Some(w) => (self.remaining_distance)(w.world_xy),
            None => (self.remaining_distance)(self.pose.position()),
        }
    }
}

/// Build the deterministic five-section prompt for one step.
pub fn build_structured_prompt(ctx: &StepContext) -> StructuredPrompt {
    let candidates = ctx
        .candidates
        .iter()
        .map(|c| match c {
            crate::common::Candidate::Stop => PromptCandidate::Stop,
            crate::common::Candidate::Move(w) => PromptCandidate::Waypoint {
                id: w.id,
                bearing: w.bearing,
                distance: w.distance,
                kind: w.kind,
            },
        })
        .collect();
    StructuredPrompt {
        system: SYSTEM_TEXT.to_string(),
        instruction: ctx.instruction.to_string(),
        history: ctx.history.to_vec(),
        candidates,
        suggestion: ctx.suggestion.clone(),
    }
}

/// Label for candidate `index` of a set: `stop` or `g<id>`.
pub fn candidate_label(set: &CandidateSet, index: usize) -> String {
    match set.waypoint_at(index) {
        Some(w) => format!("g{}", w.id),
        None => "stop".to_string(),
    }
}

// ---------------------------------------------------------------------------
// Planner stub
// ---------------------------------------------------------------------------

/// Skill knobs for the noisy expert planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    /// Gain turning remaining distance into a logit.
    pub beta: f64,
    /// Noise standard deviation on world kinds the planner knows.
    pub sigma: f64,
    /// Blend weight of the local branch.
    pub branch_weight: f64,
    /// World kinds the planner was "trained" on; empty means all kinds are
    /// familiar.
    pub familiar_kinds: Vec<String>,
    /// Noise multiplier on unfamiliar kinds.
    pub unfamiliar_sigma_scale: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            beta: 4.0,
            sigma: 0.15,
            branch_weight: 0.5,
            familiar_kinds: Vec::new(),
            unfamiliar_sigma_scale: 1.0,
        }
    }
}

impl PlannerParams {
    fn sigma_for(&self, kind: &str) -> f64 {
        if self.familiar_kinds.is_empty()
            || self.familiar_kinds.iter().any(|k| k == kind)
        {
            self.sigma
        } else {
            self.sigma * self.unfamiliar_sigma_scale
        }
    }
}

/// Seeded stand-in for the fast panoramic planner.
#[derive(Debug, Clone)]
pub struct NoisyExpertPlanner {
    pub params: PlannerParams,
    rng: ChaCha8Rng,
}

impl NoisyExpertPlanner {
    pub fn new(params: PlannerParams, seed: u64) -> Self {
        Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Branch logits for the step's candidates: `−β·remaining + noise`,
    /// drawn independently per branch, deterministic under the seed.
    pub fn propose(&mut self, ctx: &StepContext) -> CandidateLogits {
        let sigma = self.params.sigma_for(ctx.world_kind);
        let k = ctx.candidates.len();
        let mut local = Vec::with_capacity(k);
        let mut global = Vec::with_capacity(k);
        for i in 0..k {
            let base = -self.params.beta * ctx.candidate_remaining(i);
            let zl: f64 = self.rng.sample(StandardNormal);
            let zg: f64 = self.rng.sample(StandardNormal);
            local.push(base + sigma * zl);
            global.push(base + sigma * zg);
        }
        CandidateLogits {
            local,
            global,
            weight: self.params.branch_weight,
        }
    }
}

// ---------------------------------------------------------------------------
// Reasoner stub
// ---------------------------------------------------------------------------

/// How the scripted reasoner reports confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConfidenceModel {
    Fixed(f64),
    /// `base` plus a seeded uniform jitter in `±spread`, clamped to [0, 1].
    Jittered { base: f64, spread: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerParams {
    /// Probability of discarding the path-optimal member on familiar kinds.
    pub error_rate: f64,
    /// Same on unfamiliar kinds.
    pub unfamiliar_error_rate: f64,
    /// World kinds the reasoner handles well; empty means all.
    pub familiar_kinds: Vec<String>,
    pub confidence: ConfidenceModel,
}

impl Default for ReasonerParams {
    fn default() -> Self {
        Self {
            error_rate: 0.0,
            unfamiliar_error_rate: 0.0,
            familiar_kinds: Vec::new(),
            confidence: ConfidenceModel::Fixed(0.9),
        }
    }
}

impl ReasonerParams {
    fn error_rate_for(&self, kind: &str) -> f64 {
        if self.familiar_kinds.is_empty()
            || self.familiar_kinds.iter().any(|k| k == kind)
        {
            self.error_rate
        } else {
            self.unfamiliar_error_rate
        }
    }
}

/// Scripted reflective expert. Total: every invocation yields a verdict.
#[derive(Debug, Clone)]
pub struct ScriptedReasoner {
    pub params: ReasonerParams,
    rng: ChaCha8Rng,
}

impl ScriptedReasoner {
    pub fn new(params: ReasonerParams, seed: u64) -> Self {
        Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Choose from the admissible set: the member with the shortest
    /// remaining path wins, except with the configured error probability a
    /// uniformly random non-optimal member is taken instead (when one
    /// exists). The rationale carries the five chain-of-thought sections.
    pub fn reflect(
        &mut self,
        prompt: &StructuredPrompt,
        set: &PredictionSet,
        ctx: &StepContext,
    ) -> ReasonerVerdict {
        debug_assert!(set.cardinality() >= 1);
        let members = set.members();
        let mut best = members[0];
        for &m in members {
            if ctx.candidate_remaining(m) < ctx.candidate_remaining(best) {
                best = m;
            }
        }

        // Always consume exactly one error draw so the stream does not
        // depend on the configured rate.
        let err_draw: f64 = self.rng.random();
        let make_error = err_draw < self.params.error_rate_for(ctx.world_kind);
        let others: Vec<usize> = members.iter().copied().filter(|&m| m != best).collect();
        let chosen = if make_error && !others.is_empty() {
            others[self.rng.random_range(0..others.len())]
        } else {
            best
        };

        let confidence = match self.params.confidence {
            ConfidenceModel::Fixed(c) => c,
            ConfidenceModel::Jittered { base, spread } => {
                let u: f64 = self.rng.random();
                (base + spread * (2.0 * u - 1.0)).clamp(0.0, 1.0)
            }
        };

        let chosen_label = candidate_label(ctx.candidates, chosen);
        let goal_bearing_text = match ctx.candidates.waypoint_at(chosen) {
            Some(w) => format!("{} at {:.2} m", render_bearing(w.bearing), w.distance),
            None => "at the current position".to_string(),
        };
        let suggestion_text = prompt
            .suggestion
            .as_ref()
            .map(|s| format!("{} (p = {:.2})", s.label, s.probability))
            .unwrap_or_else(|| "none".to_string());
        let rationale = format!(
            "[trajectory status] {} prior steps; candidate set has {} admissible options.\n\
             [action planning] ranking admissible candidates by remaining travel to the goal.\n\
             [visual grounding] {} lies {}.\n\
             [suggestion evaluation] planner suggestion: {}.\n\
             [final decision] choose {} with confidence {:.2}.",
            ctx.history.len(),
            members.len(),
            chosen_label,
            goal_bearing_text,
            suggestion_text,
            chosen_label,
            confidence,
        );

        ReasonerVerdict {
            chosen,
            confidence,
            rationale,
        }
    }
}
