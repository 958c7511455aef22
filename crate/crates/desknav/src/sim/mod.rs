//! Deterministic 2D continuous world: obstacle geometry, raycast LiDAR,
//! discrete-action kinematics, and the episode loop.
//!
//! Collisions block rather than slide: a forward step whose swept agent disc
//! would touch an obstacle leaves the pose unchanged and raises the collided
//! flag. That buys the simple invariant that no logged pose ever intersects
//! an obstacle, and keeps the controllers — not the kinematics — the subject
//! under test.

mod episode;

pub use episode::{
    run_episode, AgentMode, ControllerChoice, EpisodeAgents, EpisodeConfig, EpisodeError,
};

use crate::common::{normalize_heading, NavAction, Pose2D};
use crate::fusion::DecisionAudit;
use crate::waypoint::{LidarScan, WaypointError};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ray origin ({0}, {1}) outside world bounds")]
    OriginOutsideBounds(f64, f64),
    #[error("obstacle extends outside world bounds")]
    ObstacleOutsideBounds,
    #[error("world bounds must be positive")]
    BadBounds,
    #[error("scan assembly failed: {0}")]
    Scan(#[from] WaypointError),
    #[error("log parse error: {0}")]
    LogParse(String),
}

/// An axis-aligned box or a wall segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Obstacle {
    Rect { min: (f64, f64), max: (f64, f64) },
    Segment { a: (f64, f64), b: (f64, f64) },
}

impl Obstacle {
    /// Euclidean distance from a point to this obstacle (0 inside a rect).
    pub fn distance_to_point(&self, p: (f64, f64)) -> f64 {
        match *self {
            Obstacle::Rect { min, max } => {
                let dx = (min.0 - p.0).max(0.0).max(p.0 - max.0);
                let dy = (min.1 - p.1).max(0.0).max(p.1 - max.1);
                dx.hypot(dy)
            }
            Obstacle::Segment { a, b } => point_segment_distance(p, a, b),
        }
    }

    /// Distance from a swept segment to this obstacle.
    pub fn distance_to_segment(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        match *self {
            Obstacle::Rect { min, max } => {
                if point_in_rect(a, min, max) || point_in_rect(b, min, max) {
                    return 0.0;
                }
                let corners = [
                    (min.0, min.1),
                    (max.0, min.1),
                    (max.0, max.1),
                    (min.0, max.1),
                ];
                let mut best = f64::INFINITY;
                for i in 0..4 {
                    let e0 = corners[i];
                    let e1 = corners[(i + 1) % 4];
                    best = best.min(segment_segment_distance(a, b, e0, e1));
                }
                best
            }
            Obstacle::Segment { a: sa, b: sb } => segment_segment_distance(a, b, sa, sb),
        }
    }

    fn within_bounds(&self, bounds: (f64, f64)) -> bool {
        let inside = |p: (f64, f64)| {
            p.0 >= 0.0 && p.0 <= bounds.0 && p.1 >= 0.0 && p.1 <= bounds.1
        };
        match *self {
            Obstacle::Rect { min, max } => inside(min) && inside(max) && min.0 <= max.0 && min.1 <= max.1,
            Obstacle::Segment { a, b } => inside(a) && inside(b),
        }
    }
}

fn point_in_rect(p: (f64, f64), min: (f64, f64), max: (f64, f64)) -> bool {
    p.0 >= min.0 && p.0 <= max.0 && p.1 >= min.1 && p.1 <= max.1
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let ab = (b.0 - a.0, b.1 - a.1);
    let ap = (p.0 - a.0, p.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    if len2 == 0.0 {
        return ap.0.hypot(ap.1);
    }
    let t = ((ap.0 * ab.0 + ap.1 * ab.1) / len2).clamp(0.0, 1.0);
    let proj = (a.0 + t * ab.0, a.1 + t * ab.1);
    (p.0 - proj.0).hypot(p.1 - proj.1)
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let cross = |o: (f64, f64), p: (f64, f64), q: (f64, f64)| {
        (p.0 - o.0) * (q.1 - o.1) - (p.1 - o.1) * (q.0 - o.0)
    };
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |o: (f64, f64), p: (f64, f64), q: (f64, f64)| {
        cross(o, p, q) == 0.0
            && q.0 >= o.0.min(p.0)
            && q.0 <= o.0.max(p.0)
            && q.1 >= o.1.min(p.1)
            && q.1 <= o.1.max(p.1)
    };
    on(c, d, a) || on(c, d, b) || on(a, b, c) || on(a, b, d)
}

fn segment_segment_distance(
    a: (f64, f64),
    b: (f64, f64),
    c: (f64, f64),
    d: (f64, f64),
) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// A bounded rectangular world `[0, w] × [0, h]` with static obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub id: String,
    /// Procedural family tag (open, corridor, rooms, trap); the expert stubs
    /// key their familiarity on it.
    pub kind: String,
    pub bounds: (f64, f64),
    pub obstacles: Vec<Obstacle>,
}

impl World {
    pub fn new(
        id: impl Into<String>,
        kind: impl Into<String>,
        bounds: (f64, f64),
        obstacles: Vec<Obstacle>,
    ) -> Result<Self, SimError> {
        if !(bounds.0 > 0.0 && bounds.1 > 0.0) {
            return Err(SimError::BadBounds);
        }
        for o in &obstacles {
            if !o.within_bounds(bounds) {
                return Err(SimError::ObstacleOutsideBounds);
            }
        }
        Ok(Self {
            id: id.into(),
            kind: kind.into(),
            bounds,
            obstacles,
        })
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= 0.0 && p.0 <= self.bounds.0 && p.1 >= 0.0 && p.1 <= self.bounds.1
    }

    /// Distance to the nearest obstacle or world wall.
    pub fn clearance(&self, p: (f64, f64)) -> f64 {
        let wall = p
            .0
            .min(self.bounds.0 - p.0)
            .min(p.1)
            .min(self.bounds.1 - p.1);
        self.obstacles
            .iter()
            .map(|o| o.distance_to_point(p))
            .fold(wall, f64::min)
    }

    /// Would a disc of `radius` at `p` touch an obstacle or leave bounds?
    pub fn disc_collides(&self, p: (f64, f64), radius: f64) -> bool {
        self.clearance(p) <= radius
    }

    /// Would a disc of `radius` swept from `a` to `b` touch an obstacle or
    /// leave bounds?
    pub fn sweep_collides(&self, a: (f64, f64), b: (f64, f64), radius: f64) -> bool {
        let inset_ok = |p: (f64, f64)| {
            p.0 >= radius
                && p.0 <= self.bounds.0 - radius
                && p.1 >= radius
                && p.1 <= self.bounds.1 - radius
        };
        // Bounds are convex, so checking both capsule endpoints suffices.
        if !inset_ok(a) || !inset_ok(b) {
            return true;
        }
        self.obstacles
            .iter()
            .any(|o| o.distance_to_segment(a, b) <= radius)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Distance along `bearing` from `origin` to the nearest obstacle or bounds
/// wall, clamped to `max_range`.
pub fn raycast(
    world: &World,
    origin: (f64, f64),
    bearing: f64,
    max_range: f64,
) -> Result<f64, SimError> {
    if !world.contains(origin) {
        return Err(SimError::OriginOutsideBounds(origin.0, origin.1));
    }
    let dir = (bearing.cos(), bearing.sin());
    let mut best = max_range;

    // Bounds act as walls.
    if dir.0 > 1e-12 {
        best = best.min((world.bounds.0 - origin.0) / dir.0);
    } else if dir.0 < -1e-12 {
        best = best.min(-origin.0 / dir.0);
    }
    if dir.1 > 1e-12 {
        best = best.min((world.bounds.1 - origin.1) / dir.1);
    } else if dir.1 < -1e-12 {
        best = best.min(-origin.1 / dir.1);
    }

    for o in &world.obstacles {
        let t = match *o {
            Obstacle::Segment { a, b } => ray_segment(origin, dir, a, b),
            Obstacle::Rect { min, max } => ray_rect(origin, dir, min, max),
        };
        if let Some(t) = t {
            best = best.min(t);
        }
    }
    Ok(best.max(0.0))
}

fn ray_segment(
    o: (f64, f64),
    d: (f64, f64),
    a: (f64, f64),
    b: (f64, f64),
) -> Option<f64> {
    let e = (b.0 - a.0, b.1 - a.1);
    let denom = d.0 * e.1 - d.1 * e.0;
    if denom.abs() < 1e-12 {
        // Parallel rays record no hit from this wall.
        return None;
    }
    let ao = (a.0 - o.0, a.1 - o.1);
    let t = (ao.0 * e.1 - ao.1 * e.0) / denom;
    let u = (ao.0 * d.1 - ao.1 * d.0) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

fn ray_rect(
    o: (f64, f64),
    d: (f64, f64),
    min: (f64, f64),
    max: (f64, f64),
) -> Option<f64> {
    if point_in_rect(o, min, max) {
        return Some(0.0);
    }
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    for axis in 0..2 {
        let (o_a, d_a, lo, hi) = if axis == 0 {
            (o.0, d.0, min.0, max.0)
        } else {
            (o.1, d.1, min.1, max.1)
        };
        if d_a.abs() < 1e-12 {
            if o_a < lo || o_a > hi {
                return None;
            }
        } else {
            let mut t1 = (lo - o_a) / d_a;
            let mut t2 = (hi - o_a) / d_a;
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            tmin = tmin.max(t1);
            tmax = tmax.min(t2);
            if tmin > tmax {
                return None;
            }
        }
    }
    if tmax < 0.0 {
        None
    } else {
        Some(tmin.max(0.0))
    }
}

/// Spin a full-circle LiDAR at `pose`: `n_beams` evenly spaced raycasts
/// starting at the agent's heading.
pub fn scan(
    world: &World,
    pose: &Pose2D,
    n_beams: usize,
    max_range: f64,
) -> Result<LidarScan, SimError> {
    let mut ranges = Vec::with_capacity(n_beams);
    for k in 0..n_beams {
        let rel = k as f64 * TAU / n_beams as f64;
        ranges.push(raycast(world, pose.position(), pose.heading + rel, max_range)?);
    }
    Ok(LidarScan::from_ranges(ranges, max_range)?)
}

/// Step sizes and limits of the discrete action interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicsConfig {
    pub forward_step: f64,
    pub turn_step: f64,
    pub agent_radius: f64,
    pub max_steps: usize,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self {
            forward_step: 0.25,
            turn_step: 15f64.to_radians(),
            agent_radius: 0.18,
            max_steps: 500,
        }
    }
}

/// Apply one action. Forward moves `forward_step` along the heading unless
/// the swept agent disc would collide, in which case the pose is unchanged
/// and the collided flag is raised. Turns never collide; stop is identity.
pub fn step(
    world: &World,
    pose: &Pose2D,
    action: NavAction,
    cfg: &KinematicsConfig,
) -> (Pose2D, bool) {
    match action {
        NavAction::Stop => (*pose, false),
        NavAction::TurnLeft => (
            Pose2D {
                heading: normalize_heading(pose.heading + cfg.turn_step)
                    .expect("finite heading"),
                ..*pose
            },
            false,
        ),
        NavAction::TurnRight => (
            Pose2D {
                heading: normalize_heading(pose.heading - cfg.turn_step)
                    .expect("finite heading"),
                ..*pose
            },
            false,
        ),
        NavAction::Forward => {
            let target = (
                pose.x + cfg.forward_step * pose.heading.cos(),
                pose.y + cfg.forward_step * pose.heading.sin(),
            );
            if world.sweep_collides(pose.position(), target, cfg.agent_radius) {
                (*pose, true)
            } else {
                (
                    Pose2D {
                        x: target.0,
                        y: target.1,
                        ..*pose
                    },
                    false,
                )
            }
        }
    }
}

/// One decision audit tied to the step index at which it was taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub step: usize,
    pub audit: DecisionAudit,
}

/// The executed pose/action record of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub episode_id: String,
    pub poses: Vec<Pose2D>,
    pub actions: Vec<NavAction>,
    pub collided: Vec<bool>,
    pub stopped: bool,
    pub deadlocks: usize,
    pub audits: Vec<AuditEntry>,
}

impl TrajectoryLog {
    pub fn new(episode_id: impl Into<String>, start: Pose2D) -> Self {
        Self {
            episode_id: episode_id.into(),
            poses: vec![start],
            actions: Vec::new(),
            collided: Vec::new(),
            stopped: false,
            deadlocks: 0,
            audits: Vec::new(),
        }
    }

    pub fn push(&mut self, action: NavAction, pose: Pose2D, collided: bool) {
        self.actions.push(action);
        self.poses.push(pose);
        self.collided.push(collided);
    }

    pub fn final_pose(&self) -> Pose2D {
        *self.poses.last().expect("log always holds the start pose")
    }

    pub fn collisions(&self) -> usize {
        self.collided.iter().filter(|&&c| c).count()
    }

    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    /// Sum of consecutive pose distances.
    pub fn total_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| w[0].distance_to(w[1].position()))
            .sum()
    }
}

/// Line-delimited log records: one header, one line per step, one footer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogRecord {
    Episode {
        id: String,
        start: Pose2D,
    },
    Step {
        step: usize,
        action: NavAction,
        pose: Pose2D,
        collided: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        audit: Option<DecisionAudit>,
    },
    End {
        stopped: bool,
        collisions: usize,
        deadlocks: usize,
    },
}

impl TrajectoryLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let push = |out: &mut String, r: &LogRecord| {
            out.push_str(&serde_json::to_string(r).expect("log record serializes"));
            out.push('\n');
        };
        push(
            &mut out,
            &LogRecord::Episode {
                id: self.episode_id.clone(),
                start: self.poses[0],
            },
        );
        let mut audit_iter = self.audits.iter().peekable();
        for i in 0..self.actions.len() {
            let audit = match audit_iter.peek() {
                Some(e) if e.step == i => Some(audit_iter.next().unwrap().audit.clone()),
                _ => None,
            };
            push(
                &mut out,
                &LogRecord::Step {
                    step: i,
                    action: self.actions[i],
                    pose: self.poses[i + 1],
                    collided: self.collided[i],
                    audit,
                },
            );
        }
        push(
            &mut out,
            &LogRecord::End {
                stopped: self.stopped,
                collisions: self.collisions(),
                deadlocks: self.deadlocks,
            },
        );
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SimError> {
        let mut log: Option<TrajectoryLog> = None;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: LogRecord = serde_json::from_str(line)
                .map_err(|e| SimError::LogParse(format!("line {}: {e}", lineno + 1)))?;
            match record {
                LogRecord::Episode { id, start } => {
                    log = Some(TrajectoryLog::new(id, start));
                }
                LogRecord::Step {
                    step,
                    action,
                    pose,
                    collided,
                    audit,
                } => {
                    let log = log
                        .as_mut()
                        .ok_or_else(|| SimError::LogParse("step before header".into()))?;
                    if let Some(audit) = audit {
                        log.audits.push(AuditEntry { step, audit });
                    }
                    log.push(action, pose, collided);
                }
                LogRecord::End {
                    stopped,
                    deadlocks,
                    ..
                } => {
                    let log = log
                        .as_mut()
                        .ok_or_else(|| SimError::LogParse("footer before header".into()))?;
                    log.stopped = stopped;
                    log.deadlocks = deadlocks;
                }
            }
        }
        log.ok_or_else(|| SimError::LogParse("empty log".into()))
    }
}
