//! Run orchestration: configuration, calibration runs, benchmark execution,
//! and report emission.
//!
//! All randomness flows from one root seed fanned out by labeled
//! derivation, so ablations differ only along the intended axis: the
//! planner stream for episode `i` is the same under every decision mode.
//! Calibration and evaluation episodes live in disjoint id ranges, asserted
//! before any episode runs. Output directories carry the config snapshot
//! and seeds needed to reproduce the run byte-for-byte; nothing
//! time-dependent is ever written.

pub mod fixtures;
pub mod presets;
mod worldgen;

pub use worldgen::{
    generate_episodes, generate_worlds, has_pocket_on_line, trap_start_goal, WorldKind,
};

use crate::common::{derive_seed, EpisodeSpec};
use crate::conformal::{CalibrationRecord, ConformalError, ConformalModel};
use crate::experts::{NoisyExpertPlanner, PlannerParams, ReasonerParams, ScriptedReasoner};
use crate::fusion::FusionConfig;
use crate::metrics::{self, EpisodeMetrics, MetricsError, Summary, DEFAULT_SDT_SWEEP};
use crate::sim::{
    run_episode, AgentMode, EpisodeAgents, EpisodeConfig, EpisodeError, SimError, TrajectoryLog,
    World,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("failed to generate a usable {kind} world at index {index}")]
    WorldGeneration { kind: &'static str, index: usize },
    #[error("could not sample a start-goal pair in world {world}")]
    EpisodeSampling { world: String },
    #[error("calibration and evaluation episode ids overlap")]
    IdRangesOverlap,
    #[error("episode {id} references unknown world {world}")]
    UnknownWorld { id: String, world: String },
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// How many worlds of one kind a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldBatch {
    pub kind: WorldKind,
    pub count: usize,
}

/// Where the conformal threshold comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSource {
    /// Pin τ directly (ε recorded for bookkeeping only).
    Fixed { tau: f64, epsilon: f64 },
    /// Calibrate on a disjoint episode set before evaluating.
    Calibrate {
        epsilon: f64,
        episodes_per_world: usize,
    },
    /// Load a previously written calibration file.
    File { path: String },
}

/// Full description of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub root_seed: u64,
    pub worlds: Vec<WorldBatch>,
    pub episodes_per_world: usize,
    pub planner: PlannerParams,
    pub reasoner: ReasonerParams,
    pub tau: TauSource,
    pub fusion: FusionConfig,
    pub modes: Vec<AgentMode>,
    pub episode: EpisodeConfig,
    pub sdt_list: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            root_seed: 7,
            worlds: vec![WorldBatch {
                kind: WorldKind::Open,
                count: 2,
            }],
            episodes_per_world: 3,
            planner: PlannerParams::default(),
            reasoner: ReasonerParams::default(),
            tau: TauSource::Fixed {
                tau: 0.97,
                epsilon: 0.1,
            },
            fusion: FusionConfig::default(),
            modes: vec![AgentMode::PlannerOnly, AgentMode::Fused],
            episode: EpisodeConfig::default(),
            sdt_list: DEFAULT_SDT_SWEEP.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn build_worlds(&self) -> Result<Vec<World>, HarnessError> {
        let mut worlds = Vec::new();
        for batch in &self.worlds {
            let seed = derive_seed(self.root_seed, "worlds", batch.kind.as_str().len() as u64);
            worlds.extend(generate_worlds(batch.kind, batch.count, seed)?);
        }
        Ok(worlds)
    }
}

/// Id bases keep the calibration and evaluation ranges provably disjoint.
const CAL_ID_BASE: usize = 0;
const EVAL_ID_BASE: usize = 100_000;

fn assert_disjoint(cal: &[EpisodeSpec], eval: &[EpisodeSpec]) -> Result<(), HarnessError> {
    let cal_ids: std::collections::HashSet<&str> =
        cal.iter().map(|e| e.id.as_str()).collect();
    if eval.iter().any(|e| cal_ids.contains(e.id.as_str())) {
        return Err(HarnessError::IdRangesOverlap);
    }
    Ok(())
}

/// What one calibration run produced besides the model itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub decision_points: usize,
    /// Raised when fewer than 100 decision points backed the quantile; the
    /// model file is still written.
    pub insufficient: bool,
    pub episodes: usize,
}

fn agents_for(
    cfg: &RunConfig,
    model: &ConformalModel,
    mode: AgentMode,
    episode_index: u64,
) -> EpisodeAgents {
    EpisodeAgents {
        planner: NoisyExpertPlanner::new(
            cfg.planner.clone(),
            derive_seed(cfg.root_seed, "planner", episode_index),
        ),
        reasoner: ScriptedReasoner::new(
            cfg.reasoner.clone(),
            derive_seed(cfg.root_seed, "reasoner", episode_index),
        ),
        conformal: model.clone(),
        fusion: cfg.fusion,
        mode,
    }
}

fn run_one(
    cfg: &RunConfig,
    worlds: &BTreeMap<String, World>,
    model: &ConformalModel,
    mode: AgentMode,
    spec: &EpisodeSpec,
    episode_index: u64,
) -> Result<TrajectoryLog, HarnessError> {
    let world = worlds
        .get(&spec.world_id)
        .ok_or_else(|| HarnessError::UnknownWorld {
            id: spec.id.clone(),
            world: spec.world_id.clone(),
        })?;
    let mut agents = agents_for(cfg, model, mode, episode_index);
    let mut ep_cfg = cfg.episode.clone();
    ep_cfg.seed = derive_seed(cfg.root_seed, "episode", episode_index);
    Ok(run_episode(world, spec, &mut agents, &ep_cfg)?)
}

/// Play the planner over a disjoint calibration episode set, score the
/// path-optimal action at every decision point, and fit the threshold.
pub fn run_calibration(
    cfg: &RunConfig,
    epsilon: f64,
    episodes_per_world: usize,
) -> Result<(ConformalModel, CalibrationOutcome), HarnessError> {
    let worlds = cfg.build_worlds()?;
    let world_map: BTreeMap<String, World> =
        worlds.iter().map(|w| (w.id.clone(), w.clone())).collect();
    let episodes = generate_episodes(
        &worlds,
        episodes_per_world,
        derive_seed(cfg.root_seed, "cal-episodes", 0),
        "cal-",
        CAL_ID_BASE,
    )?;
    let placeholder = ConformalModel::fixed_tau(0.0, epsilon);
    let logs: Vec<Result<TrajectoryLog, HarnessError>> = episodes
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            run_one(
                cfg,
                &world_map,
                &placeholder,
                AgentMode::PlannerOnly,
                spec,
                // Calibration runs draw from their own seed lane.
                (1 << 40) | i as u64,
            )
        })
        .collect();
    let mut records = Vec::new();
    for log in logs {
        let log = log?;
        for entry in &log.audits {
            let score = 1.0 - entry.audit.planner_probs[entry.audit.oracle_optimal];
            records.push(CalibrationRecord::new(score.clamp(0.0, 1.0))?);
        }
    }
    let outcome = CalibrationOutcome {
        decision_points: records.len(),
        insufficient: records.len() < 100,
        episodes: episodes.len(),
    };
    let model = ConformalModel::calibrate(&records, epsilon)?;
    Ok((model, outcome))
}

/// Results for one decision mode across the evaluation set.
#[derive(Debug, Clone)]
pub struct ModeRun {
    pub mode: AgentMode,
    pub logs: Vec<TrajectoryLog>,
    /// Per-episode metrics at the default threshold (last entry of the
    /// sweep list).
    pub records: Vec<EpisodeRecord>,
    pub summaries: Vec<(f64, Summary)>,
}

/// Flat per-episode record for machine diffing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: String,
    pub world_id: String,
    pub mode: AgentMode,
    pub steps: usize,
    pub collisions: usize,
    pub deadlocks: usize,
    pub stopped: bool,
    pub metrics: Vec<EpisodeMetrics>,
}

/// Everything a benchmark run produced.
#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub worlds: Vec<World>,
    pub episodes: Vec<EpisodeSpec>,
    pub tau: f64,
    pub calibration: Option<CalibrationOutcome>,
    pub modes: Vec<ModeRun>,
}

impl BenchmarkReport {
    pub fn summary_for(&self, mode: AgentMode, sdt: f64) -> Option<&Summary> {
        self.modes
            .iter()
            .find(|m| m.mode == mode)?
            .summaries
            .iter()
            .find(|(s, _)| (*s - sdt).abs() < 1e-9)
            .map(|(_, s)| s)
    }

    /// Aligned text table, one row per (mode, threshold).
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>5} {:>9} {:>8} {:>7} {:>7} {:>7}",
            "mode", "sdt", "TL", "NE", "OSR%", "SR%", "SPL%"
        );
        for mode_run in &self.modes {
            for (sdt, s) in &mode_run.summaries {
                let _ = writeln!(
                    out,
                    "{:<14} {:>5.2} {:>9.3} {:>8.3} {:>7.1} {:>7.1} {:>7.1}",
                    mode_run.mode.label(),
                    sdt,
                    s.mean_tl,
                    s.mean_ne,
                    s.osr_pct,
                    s.sr_pct,
                    s.spl_pct
                );
            }
        }
        let _ = writeln!(out, "tau = {:.4}, episodes = {}", self.tau, self.episodes.len());
        out
    }

    /// One structured record per (mode, threshold) row.
    pub fn summary_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            mode: &'a str,
            sdt: f64,
            #[serde(flatten)]
            summary: &'a Summary,
        }
        let mut out = String::new();
        for mode_run in &self.modes {
            for (sdt, s) in &mode_run.summaries {
                out.push_str(
                    &serde_json::to_string(&Row {
                        mode: mode_run.mode.label(),
                        sdt: *sdt,
                        summary: s,
                    })
                    .expect("summary row serializes"),
                );
                out.push('\n');
            }
        }
        out
    }
}

/// Run every configured mode over the evaluation episodes. Deterministic
/// under the config's seeds; episodes run in parallel and merge in id order.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchmarkReport, HarnessError> {
    let worlds = cfg.build_worlds()?;
    let world_map: BTreeMap<String, World> =
        worlds.iter().map(|w| (w.id.clone(), w.clone())).collect();
    let episodes = generate_episodes(
        &worlds,
        cfg.episodes_per_world,
        derive_seed(cfg.root_seed, "eval-episodes", 0),
        "eval-",
        EVAL_ID_BASE,
    )?;

    let (model, calibration) = match &cfg.tau {
        TauSource::Fixed { tau, epsilon } => (ConformalModel::fixed_tau(*tau, *epsilon), None),
        TauSource::Calibrate {
            epsilon,
            episodes_per_world,
        } => {
            let (model, outcome) = run_calibration(cfg, *epsilon, *episodes_per_world)?;
            let cal_episodes = generate_episodes(
                &cfg.build_worlds()?,
                *episodes_per_world,
                derive_seed(cfg.root_seed, "cal-episodes", 0),
                "cal-",
                CAL_ID_BASE,
            )?;
            assert_disjoint(&cal_episodes, &episodes)?;
            (model, Some(outcome))
        }
        TauSource::File { path } => {
            let p = Path::new(path);
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let model = ConformalModel::from_json(&text).map_err(|e| HarnessError::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?;
            (model, None)
        }
    };

    let mut modes = Vec::with_capacity(cfg.modes.len());
    for &mode in &cfg.modes {
        let logs: Vec<Result<TrajectoryLog, HarnessError>> = episodes
            .par_iter()
            .enumerate()
            .map(|(i, spec)| run_one(cfg, &world_map, &model, mode, spec, i as u64))
            .collect();
        let mut collected = Vec::with_capacity(logs.len());
        for log in logs {
            collected.push(log?);
        }

        let mut records = Vec::with_capacity(collected.len());
        for (log, spec) in collected.iter().zip(&episodes) {
            let per_sdt: Result<Vec<EpisodeMetrics>, _> = cfg
                .sdt_list
                .iter()
                .map(|&sdt| metrics::compute(log, spec, sdt))
                .collect();
            records.push(EpisodeRecord {
                id: spec.id.clone(),
                world_id: spec.world_id.clone(),
                mode,
                steps: log.steps(),
                collisions: log.collisions(),
                deadlocks: log.deadlocks,
                stopped: log.stopped,
                metrics: per_sdt?,
            });
        }
        let pairs: Vec<(&TrajectoryLog, &EpisodeSpec)> =
            collected.iter().zip(episodes.iter()).collect();
        let summaries = metrics::sdt_sweep(&pairs, &cfg.sdt_list)?;
        modes.push(ModeRun {
            mode,
            logs: collected,
            records,
            summaries,
        });
    }

    Ok(BenchmarkReport {
        worlds,
        episodes,
        tau: model.tau,
        calibration,
        modes,
    })
}

/// Write a full run to disk: config snapshot, worlds, episode specs,
/// per-episode trajectory logs per mode, per-episode records, and the
/// aggregate report in text and line-delimited form.
pub fn write_outputs(
    report: &BenchmarkReport,
    cfg: &RunConfig,
    dir: &Path,
) -> Result<(), HarnessError> {
    let write = |path: &Path, text: &str| -> Result<(), HarnessError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(path, text).map_err(|e| io_err(path, e))
    };

    write(&dir.join("config.json"), &cfg.to_json())?;
    for w in &report.worlds {
        write(&dir.join("worlds").join(format!("{}.json", w.id)), &w.to_json())?;
    }
    write(
        &dir.join("episodes.json"),
        &serde_json::to_string_pretty(&report.episodes).expect("episodes serialize"),
    )?;
    for mode_run in &report.modes {
        let mode_dir = dir.join(mode_run.mode.label());
        for log in &mode_run.logs {
            write(
                &mode_dir.join(format!("{}.jsonl", log.episode_id)),
                &log.to_jsonl(),
            )?;
        }
        let mut records = String::new();
        for r in &mode_run.records {
            records.push_str(&serde_json::to_string(r).expect("record serializes"));
            records.push('\n');
        }
        write(&mode_dir.join("episodes.jsonl"), &records)?;
    }
    write(&dir.join("report.txt"), &report.render_text())?;
    write(&dir.join("report.jsonl"), &report.summary_jsonl())?;
    Ok(())
}

/// A run reloaded from disk, sufficient to recompute reports and sweeps.
#[derive(Debug)]
pub struct LoadedRun {
    pub config: RunConfig,
    pub episodes: Vec<EpisodeSpec>,
    pub modes: Vec<(AgentMode, Vec<TrajectoryLog>)>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, HarnessError> {
    let read = |path: &Path| -> Result<String, HarnessError> {
        fs::read_to_string(path).map_err(|e| io_err(path, e))
    };
    let parse_err = |path: &Path, e: String| HarnessError::Parse {
        path: path.display().to_string(),
        message: e,
    };

    let cfg_path = dir.join("config.json");
    let config =
        RunConfig::from_json(&read(&cfg_path)?).map_err(|e| parse_err(&cfg_path, e.to_string()))?;
    let eps_path = dir.join("episodes.json");
    let episodes: Vec<EpisodeSpec> = serde_json::from_str(&read(&eps_path)?)
        .map_err(|e| parse_err(&eps_path, e.to_string()))?;

    let mut modes = Vec::new();
    for &mode in &config.modes {
        let mode_dir = dir.join(mode.label());
        let mut logs = Vec::with_capacity(episodes.len());
        for spec in &episodes {
            let log_path = mode_dir.join(format!("{}.jsonl", spec.id));
            let log = TrajectoryLog::from_jsonl(&read(&log_path)?)
                .map_err(|e| parse_err(&log_path, e.to_string()))?;
            logs.push(log);
        }
        modes.push((mode, logs));
    }
    Ok(LoadedRun {
        config,
        episodes,
        modes,
    })
}

/// Recompute the aggregate table from logs on disk.
pub fn report_from_dir(dir: &Path) -> Result<String, HarnessError> {
    let run = load_run(dir)?;
    sweep_text(&run, &run.config.sdt_list.clone())
}

/// Recompute aggregates at caller-chosen thresholds from logs on disk.
pub fn sweep_from_dir(dir: &Path, thresholds: &[f64]) -> Result<String, HarnessError> {
    let run = load_run(dir)?;
    sweep_text(&run, thresholds)
}

fn sweep_text(run: &LoadedRun, thresholds: &[f64]) -> Result<String, HarnessError> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>5} {:>9} {:>8} {:>7} {:>7} {:>7}",
        "mode", "sdt", "TL", "NE", "OSR%", "SR%", "SPL%"
    );
    for (mode, logs) in &run.modes {
        let pairs: Vec<(&TrajectoryLog, &EpisodeSpec)> =
            logs.iter().zip(run.episodes.iter()).collect();
        for (sdt, s) in metrics::sdt_sweep(&pairs, thresholds)? {
            let _ = writeln!(
                out,
                "{:<14} {:>5.2} {:>9.3} {:>8.3} {:>7.1} {:>7.1} {:>7.1}",
                mode.label(),
                sdt,
                s.mean_tl,
                s.mean_ne,
                s.osr_pct,
                s.sr_pct,
                s.spl_pct
            );
        }
    }
    Ok(out)
}
