//! The episode loop: scan → cluster waypoints → expert decision → drive.
//!
//! Each decision step rebuilds the candidate set from a fresh scan at the
//! current pose (re-planning happens on waypoint arrival or deadlock, never
//! mid-transit), runs the configured decision mode, and either stops or
//! hands the chosen waypoint to the local controller. Controller deadlocks
//! are recorded and answered with a fresh decision from the stuck pose, up
//! to a retry budget; after that the episode terminates unsuccessfully.
//!
//! Every piece of randomness is seeded from the outside, so a fixed
//! (world, spec, seeds) triple replays to a byte-identical log.

use crate::common::{
    derive_seed, CandidateSet, CommonError, EpisodeSpec, NavAction, STOP_INDEX,
};
use crate::conformal::{ConformalModel, PredictionSet};
use crate::control::{
    detect_deadlock, planned_controller, tryout_controller, DistanceField, GridParams,
    PlannedParams, TryoutConfig,
};
use crate::experts::{
    build_structured_prompt, candidate_label, fuse_branch_logits, project_to_panorama,
    rear_mask_region, softmax, HistoryStep, NoisyExpertPlanner, PanoramaLayout, ScriptedReasoner,
    StepContext, Suggestion,
};
use crate::fusion::{self, DecisionAudit, FusionConfig, FusionOutcome};
use crate::sim::{scan, step, AuditEntry, KinematicsConfig, SimError, TrajectoryLog, World};
use crate::waypoint::{predict_waypoints_lidar, WaypointError, WaypointParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("start pose collides with an obstacle or the bounds")]
    StartCollides,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Spec(#[from] CommonError),
}

/// Which decision stack runs the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentMode {
    /// Argmax of the planner distribution; no gate, no reasoner.
    PlannerOnly,
    /// The reasoner picks from the full candidate set every step.
    ReasonerOnly,
    /// Conformal gate plus weighted fusion.
    Fused,
}

impl AgentMode {
    pub fn label(&self) -> &'static str {
        match self {
            AgentMode::PlannerOnly => "planner-only",
            AgentMode::ReasonerOnly => "reasoner-only",
            AgentMode::Fused => "fused",
        }
    }
}

/// The decision-side bundle for one episode. Planner and reasoner carry
/// their own seeded rng state and must not be shared across episodes.
#[derive(Debug, Clone)]
pub struct EpisodeAgents {
    pub planner: NoisyExpertPlanner,
    pub reasoner: ScriptedReasoner,
    pub conformal: ConformalModel,
    pub fusion: FusionConfig,
    pub mode: AgentMode,
}

/// Which local controller drives between waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerChoice {
    Tryout(TryoutConfig),
    Planned(PlannedParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub kinematics: KinematicsConfig,
    pub waypoints: WaypointParams,
    pub n_beams: usize,
    pub max_range: f64,
    /// Consecutive deadlocked/unreachable controller legs tolerated before
    /// the episode is abandoned.
    pub retry_budget: usize,
    pub controller: ControllerChoice,
    /// When set, decision audits carry candidate markers and the rear mask
    /// projected onto this layout.
    pub panorama: Option<PanoramaLayout>,
    /// Grid used for the shortest-path oracle.
    pub oracle_grid: GridParams,
    /// Per-episode seed; per-decision clustering seeds derive from it.
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            kinematics: KinematicsConfig::default(),
            waypoints: WaypointParams::default(),
            n_beams: 360,
            max_range: 6.0,
            retry_budget: 3,
            controller: ControllerChoice::Planned(PlannedParams::default()),
            panorama: None,
            oracle_grid: GridParams::default(),
            seed: 0,
        }
    }
}

/// Poses examined by the cross-leg livelock guard.
const LIVELOCK_WINDOW: usize = 8;

/// Run one episode to completion: stop issued, step budget exhausted, or
/// retry budget exhausted. The full audit trail lands in the returned log.
pub fn run_episode(
    world: &World,
    spec: &EpisodeSpec,
    agents: &mut EpisodeAgents,
    cfg: &EpisodeConfig,
) -> Result<TrajectoryLog, EpisodeError> {
    spec.validate(cfg.oracle_grid.resolution)?;
    if world.disc_collides(spec.start.position(), cfg.kinematics.agent_radius) {
        return Err(EpisodeError::StartCollides);
    }

    let field = DistanceField::build(world, spec.goal, &cfg.oracle_grid);
    let remaining = |p: (f64, f64)| field.distance_or_euclid(p);

    let mut log = TrajectoryLog::new(&spec.id, spec.start);
    let mut pose = spec.start;
    let mut history: Vec<HistoryStep> = Vec::new();
    let mut retries = 0usize;
    let mut decision_index = 0u64;

    while log.steps() < cfg.kinematics.max_steps {
        // --- Decision phase ------------------------------------------------
        let lidar = scan(world, &pose, cfg.n_beams, cfg.max_range)?;
        let kmeans_seed = derive_seed(cfg.seed, "kmeans", decision_index);
        let waypoints =
            match predict_waypoints_lidar(&lidar, &pose, &cfg.waypoints, kmeans_seed) {
                Ok(w) => w,
                Err(WaypointError::DegeneratePose) => {
                    // The robot cell fell inside inflation; a retry from the
                    // same pose would repeat deterministically.
                    log.deadlocks += 1;
                    break;
                }
                Err(e) => return Err(SimError::from(e).into()),
            };
        let candidates = CandidateSet::new(waypoints)?;

        let EpisodeAgents {
            planner,
            reasoner,
            conformal,
            fusion: fusion_cfg,
            mode,
        } = agents;
        let tau = conformal.tau;

        let base_ctx = StepContext {
            instruction: &spec.instruction,
            history: &history,
            candidates: &candidates,
            pose,
            world_kind: &world.kind,
            suggestion: None,
            remaining_distance: &remaining,
        };
        let logits = planner.propose(&base_ctx);
        let blended = fuse_branch_logits(&logits).expect("planner emits matching branches");
        let dist = softmax(&blended).expect("planner logits are finite");
        let suggestion = Suggestion {
            label: candidate_label(&candidates, dist.argmax()),
            probability: dist.get(dist.argmax()).expect("argmax in range"),
        };
        let ctx = StepContext {
            suggestion: Some(suggestion),
            ..base_ctx
        };
        let prompt = build_structured_prompt(&ctx);

        let mut oracle_optimal = 0usize;
        for i in 0..candidates.len() {
            if ctx.candidate_remaining(i) < ctx.candidate_remaining(oracle_optimal) {
                oracle_optimal = i;
            }
        }

        let outcome = match mode {
            AgentMode::PlannerOnly => {
                let selected = dist.argmax();
                FusionOutcome {
                    prediction_set: PredictionSet::from_members(vec![selected]),
                    alpha: None,
                    verdict: None,
                    fused: None,
                    selected,
                    reasoner_invoked: false,
                    reasoner_failed: false,
                }
            }
            AgentMode::ReasonerOnly => {
                let set = PredictionSet::from_members((0..candidates.len()).collect());
                let verdict = reasoner.reflect(&prompt, &set, &ctx);
                FusionOutcome {
                    selected: verdict.chosen,
                    prediction_set: set,
                    alpha: None,
                    verdict: Some(verdict),
                    fused: None,
                    reasoner_invoked: true,
                    reasoner_failed: false,
                }
            }
            AgentMode::Fused => fusion::decide(&dist, conformal, fusion_cfg, |set| {
                Ok(reasoner.reflect(&prompt, set, &ctx))
            }),
        };

        let (panorama_markers, panorama_mask) = match &cfg.panorama {
            Some(layout) => {
                let markers = candidates
                    .waypoints()
                    .map(|w| {
                        let (px, py) = project_to_panorama(w.bearing, 0.0, layout)
                            .expect("normalized bearing, zero elevation");
                        (w.id, px, py)
                    })
                    .collect();
                (Some(markers), Some(rear_mask_region(layout)))
            }
            None => (None, None),
        };
        log.audits.push(AuditEntry {
            step: log.steps(),
            audit: DecisionAudit {
                planner_probs: dist.probs().to_vec(),
                tau,
                set_members: outcome.prediction_set.members().to_vec(),
                alpha: outcome.alpha,
                verdict: outcome.verdict.clone(),
                fused: outcome.fused.clone(),
                selected: outcome.selected,
                reasoner_invoked: outcome.reasoner_invoked,
                reasoner_failed: outcome.reasoner_failed,
                oracle_optimal,
                panorama_markers,
                panorama_mask,
            },
        });
        decision_index += 1;

        if outcome.selected == STOP_INDEX {
            log.push(NavAction::Stop, pose, false);
            log.stopped = true;
            break;
        }

        // --- Control phase -------------------------------------------------
        let target = *candidates
            .waypoint_at(outcome.selected)
            .expect("non-stop selection is a waypoint");
        let budget = cfg.kinematics.max_steps - log.steps();
        let ctrl = match &cfg.controller {
            ControllerChoice::Tryout(tc) => {
                tryout_controller(world, pose, target.world_xy, tc, &cfg.kinematics, budget)
            }
            ControllerChoice::Planned(pp) => {
                planned_controller(world, pose, target.world_xy, pp, &cfg.kinematics, budget)
            }
        };
        let leg_start = pose;
        for &action in &ctrl.actions {
            let (next, collided) = step(world, &pose, action, &cfg.kinematics);
            log.push(action, next, collided);
            pose = next;
        }
        history.push(HistoryStep {
            bearing: leg_start.bearing_to(pose.position()),
            distance: leg_start.distance_to(pose.position()),
            view: format!("v{}", PanoramaLayout::view_index(target.bearing)),
        });

        let mut troubled = ctrl.deadlocked || ctrl.unreachable;
        if !troubled && log.poses.len() >= LIVELOCK_WINDOW {
            let window = &log.poses[log.poses.len() - LIVELOCK_WINDOW..];
            troubled = detect_deadlock(window, cfg.kinematics.forward_step);
        }
        if troubled {
            log.deadlocks += 1;
            retries += 1;
            if retries > cfg.retry_budget {
                break;
            }
        } else {
            retries = 0;
        }
    }

    Ok(log)
}
