//! Shared domain types and frame conventions.
//!
//! One convention, stated once and reused everywhere: the world frame is
//! right-handed, headings are radians measured counter-clockwise from the
//! world +x axis, and every stored heading is normalized into `(-π, π]`.
//! Positive bearings point to the agent's left.
//!
//! The stop action is always candidate index 0 of a [`CandidateSet`], so a
//! probability vector over "waypoints plus stop" is a single
//! [`ActionDistribution`] with no side channel.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Candidate index reserved for the stop action in every [`CandidateSet`].
pub const STOP_INDEX: usize = 0;

/// Errors from domain-type construction and frame math.
#[derive(Debug, Error)]
pub enum CommonError {
    #[error("angle must be finite, got {0}")]
    NonFiniteAngle(f64),
    #[error("distance must be finite and non-negative, got {0}")]
    BadDistance(f64),
    #[error("candidate set must contain at least the stop candidate")]
    EmptyCandidateSet,
    #[error("duplicate waypoint id {0} in candidate set")]
    DuplicateWaypointId(u32),
    #[error("probability {value} at index {index} outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1 within 1e-9")]
    ProbabilitySum(f64),
    #[error("empty probability vector")]
    EmptyDistribution,
    #[error("episode {id}: shortest_path_length {value} must be > 0")]
    NonPositiveShortestPath { id: String, value: f64 },
    #[error(
        "episode {id}: shortest_path_length {value} is below the straight-line \
         distance {euclid} minus grid resolution {resolution}"
    )]
    ImplausibleShortestPath {
        id: String,
        value: f64,
        euclid: f64,
        resolution: f64,
    },
}

/// Normalize an angle into `(-π, π]`, congruent to the input mod 2π.
///
/// Already-normalized inputs are returned bit-exactly, which makes the
/// function idempotent.
pub fn normalize_heading(angle: f64) -> Result<f64, CommonError> {
    if !angle.is_finite() {
        return Err(CommonError::NonFiniteAngle(angle));
    }
    if angle > -PI && angle <= PI {
        return Ok(angle);
    }
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    Ok(a)
}

/// Fan one root seed out into an independent stream seed for `(label,
/// index)`. FNV-1a over the label plus a splitmix64 finalizer; stable across
/// platforms so seeded runs replay bit-exactly.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ root;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^= index;
    h = h.wrapping_mul(0x100000001b3);
    let mut z = h.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A planar pose: position in meters plus heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Heading in `(-π, π]`, counter-clockwise from world +x.
    pub heading: f64,
}

impl Pose2D {
    /// Build a pose, normalizing the heading.
    pub fn new(x: f64, y: f64, heading: f64) -> Result<Self, CommonError> {
        Ok(Self {
            x,
            y,
            heading: normalize_heading(heading)?,
        })
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    /// Euclidean distance from this pose's position to a point.
    pub fn distance_to(&self, point: (f64, f64)) -> f64 {
        (self.x - point.0).hypot(self.y - point.1)
    }

    /// Bearing of a point relative to this pose's heading, in `(-π, π]`.
    ///
    /// The bearing of the pose's own position is 0 by convention.
    pub fn bearing_to(&self, point: (f64, f64)) -> f64 {
        let dx = point.0 - self.x;
        let dy = point.1 - self.y;
        if dx == 0.0 && dy == 0.0 {
            return 0.0;
        }
        // atan2 already lands in (-π, π]; the subtraction stays within
        // (-2π, 2π), so normalization cannot fail.
        normalize_heading(dy.atan2(dx) - self.heading).expect("finite bearing")
    }
}

/// Displace a pose by `distance` meters along `pose.heading + bearing`.
pub fn relative_to_world(
    pose: &Pose2D,
    bearing: f64,
    distance: f64,
) -> Result<(f64, f64), CommonError> {
    if !bearing.is_finite() {
        return Err(CommonError::NonFiniteAngle(bearing));
    }
    if !distance.is_finite() || distance < 0.0 {
        return Err(CommonError::BadDistance(distance));
    }
    let dir = pose.heading + bearing;
    Ok((pose.x + distance * dir.cos(), pose.y + distance * dir.sin()))
}

/// Inverse of [`relative_to_world`]: express a world point as
/// `(bearing, distance)` relative to a pose.
pub fn world_to_relative(pose: &Pose2D, point: (f64, f64)) -> (f64, f64) {
    let distance = pose.distance_to(point);
    (pose.bearing_to(point), distance)
}

/// The four low-level motion commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NavAction {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl NavAction {
    pub fn label(&self) -> &'static str {
        match self {
            NavAction::Forward => "forward",
            NavAction::TurnLeft => "turn_left",
            NavAction::TurnRight => "turn_right",
            NavAction::Stop => "stop",
        }
    }
}

/// Whether a waypoint is an unvisited candidate, a previously visited node,
/// or the agent's current node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaypointKind {
    Ghost,
    Visited,
    Current,
}

impl WaypointKind {
    pub fn label(&self) -> &'static str {
        match self {
            WaypointKind::Ghost => "ghost",
            WaypointKind::Visited => "visited",
            WaypointKind::Current => "current",
        }
    }
}

/// A navigable position the high-level policy can select as its next subgoal.
///
/// `bearing` and `distance` are relative to the pose that produced the
/// waypoint; `world_xy` is the same point in the world frame, consistent with
/// the polar form within 1e-6 m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub id: u32,
    pub bearing: f64,
    pub distance: f64,
    pub world_xy: (f64, f64),
    pub kind: WaypointKind,
}

impl Waypoint {
    /// Build a waypoint from polar coordinates relative to `pose`.
    pub fn from_polar(
        id: u32,
        pose: &Pose2D,
        bearing: f64,
        distance: f64,
        kind: WaypointKind,
    ) -> Result<Self, CommonError> {
        let bearing = normalize_heading(bearing)?;
        let world_xy = relative_to_world(pose, bearing, distance)?;
        Ok(Self {
            id,
            bearing,
            distance,
            world_xy,
            kind,
        })
    }

    /// Check the polar/world consistency invariant under the creating pose.
    pub fn is_consistent_with(&self, pose: &Pose2D, tol: f64) -> bool {
        match relative_to_world(pose, self.bearing, self.distance) {
            Ok((x, y)) => {
                (x - self.world_xy.0).hypot(y - self.world_xy.1) <= tol
            }
            Err(_) => false,
        }
    }
}

/// One entry of a [`CandidateSet`]: either the distinguished stop action or a
/// movement target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Candidate {
    Stop,
    Move(Waypoint),
}

/// The ordered action candidates for one decision step.
///
/// Index 0 is always the stop candidate; waypoints follow in the order they
/// were produced. Indices are stable for the lifetime of the decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    entries: Vec<Candidate>,
}

impl CandidateSet {
    /// Build a set from movement waypoints; the stop candidate is prepended.
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, CommonError> {
        let mut seen = std::collections::HashSet::new();
        for w in &waypoints {
            if !seen.insert(w.id) {
                return Err(CommonError::DuplicateWaypointId(w.id));
            }
        }
        let mut entries = Vec::with_capacity(waypoints.len() + 1);
        entries.push(Candidate::Stop);
        entries.extend(waypoints.into_iter().map(Candidate::Move));
        Ok(Self { entries })
    }

    /// Total number of candidates including stop. Always ≥ 1.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the stop candidate is always present
    }

    pub fn get(&self, index: usize) -> Option<&Candidate> {
        self.entries.get(index)
    }

    /// The waypoint at `index`, or `None` for the stop candidate or an
    /// out-of-range index.
    pub fn waypoint_at(&self, index: usize) -> Option<&Waypoint> {
        match self.entries.get(index) {
            Some(Candidate::Move(w)) => Some(w),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.entries.iter()
    }

    /// Movement waypoints in candidate order (indices 1..len).
    pub fn waypoints(&self) -> impl Iterator<Item = &Waypoint> {
        self.entries.iter().filter_map(|c| match c {
            Candidate::Move(w) => Some(w),
            Candidate::Stop => None,
        })
    }
}

/// Probabilities over a candidate set; the unit of all fusion math.
///
/// Entries lie in `[0, 1]` and sum to 1 within 1e-9. Fused decision vectors
/// deliberately do not satisfy that sum and are therefore kept as plain
/// `Vec<f64>` rather than this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, CommonError> {
        if probs.is_empty() {
            return Err(CommonError::EmptyDistribution);
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(CommonError::ProbabilityOutOfRange { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CommonError::ProbabilitySum(sum));
        }
        Ok(Self { probs })
    }

    /// Uniform distribution over `k` candidates.
    pub fn uniform(k: usize) -> Result<Self, CommonError> {
        if k == 0 {
            return Err(CommonError::EmptyDistribution);
        }
        Ok(Self {
            probs: vec![1.0 / k as f64; k],
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.probs.get(index).copied()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Index of the first maximal entry.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

/// First index of the maximal entry of a non-empty slice.
///
/// The "first" tie-break is relied on by the fusion layer, where exact ties
/// must resolve the same way on every route through the math.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A navigation task: world, start pose, goal point, instruction, and the
/// precomputed shortest-path length used by path-weighted metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub id: String,
    pub world_id: String,
    pub start: Pose2D,
    pub goal: (f64, f64),
    pub instruction: String,
    pub shortest_path_length: f64,
}

impl EpisodeSpec {
    /// Validate the shortest-path invariant: positive, and no shorter than
    /// the straight line minus one grid resolution of slack.
    pub fn validate(&self, grid_resolution: f64) -> Result<(), CommonError> {
        if self.shortest_path_length <= 0.0 || self.shortest_path_length.is_nan() {
            return Err(CommonError::NonPositiveShortestPath {
                id: self.id.clone(),
                value: self.shortest_path_length,
            });
        }
        let euclid = self.start.distance_to(self.goal);
        if self.shortest_path_length < euclid - grid_resolution {
            return Err(CommonError::ImplausibleShortestPath {
                id: self.id.clone(),
                value: self.shortest_path_length,
                euclid,
                resolution: grid_resolution,
            });
        }
        Ok(())
    }
}
