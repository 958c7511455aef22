//! Canned run configurations.

use super::{RunConfig, TauSource, WorldBatch, WorldKind};
use crate::experts::{ConfidenceModel, PlannerParams, ReasonerParams};
use crate::metrics::DEFAULT_SDT_SWEEP;
use crate::sim::AgentMode;

/// A two-minute sanity run: a few open-world episodes under the planner and
/// the fused stack.
pub fn smoke(root_seed: u64) -> RunConfig {
    RunConfig {
        root_seed,
        worlds: vec![WorldBatch {
            kind: WorldKind::Open,
            count: 2,
        }],
        episodes_per_world: 3,
        ..RunConfig::default()
    }
}

/// The complementary-expertise suite: the planner knows open floors, the
/// reasoner knows room layouts, and neither is competent everywhere. Run
/// under planner-only, reasoner-only, and the fused stack to compare.
pub fn complementary(root_seed: u64) -> RunConfig {
    RunConfig {
        root_seed,
        worlds: vec![
            WorldBatch {
                kind: WorldKind::Open,
                count: 10,
            },
            WorldBatch {
                kind: WorldKind::Rooms,
                count: 10,
            },
        ],
        episodes_per_world: 10,
        planner: PlannerParams {
            beta: 4.0,
            sigma: 0.12,
            branch_weight: 0.5,
            familiar_kinds: vec!["open".into()],
            unfamiliar_sigma_scale: 40.0,
        },
        reasoner: ReasonerParams {
            error_rate: 0.02,
            unfamiliar_error_rate: 0.65,
            familiar_kinds: vec!["rooms".into()],
            confidence: ConfidenceModel::Fixed(0.9),
        },
        tau: TauSource::Fixed {
            tau: 0.97,
            epsilon: 0.1,
        },
        modes: vec![
            AgentMode::PlannerOnly,
            AgentMode::ReasonerOnly,
            AgentMode::Fused,
        ],
        sdt_list: DEFAULT_SDT_SWEEP.to_vec(),
        ..RunConfig::default()
    }
}

/// The pinned conformal operating points.
pub fn tau_sweep_taus() -> [f64; 4] {
    [0.99, 0.97, 0.95, 0.93]
}

/// The complementary suite repeated at each pinned operating point — the
/// fused stack under every τ, differing in nothing else.
pub fn tau_sweep(root_seed: u64) -> Vec<RunConfig> {
    tau_sweep_taus()
        .iter()
        .map(|&tau| RunConfig {
            tau: TauSource::Fixed { tau, epsilon: 0.1 },
            modes: vec![AgentMode::Fused],
            ..complementary(root_seed)
        })
        .collect()
}

pub fn preset(name: &str, root_seed: u64) -> Option<RunConfig> {
    match name {
        "smoke" => Some(smoke(root_seed)),
        "complementary" => Some(complementary(root_seed)),
        _ => None,
    }
}
