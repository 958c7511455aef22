//! Point-goal local controllers and deadlock detection.
//!
//! Two ways to drive to a metric subgoal: a rule-based rotate-then-forward
//! heuristic that retries preset angles when blocked, and a planned
//! controller that computes an 8-connected grid shortest path over the
//! inflated world and follows it with turn/forward primitives. The planned
//! controller recovers in the concave pockets that trap the heuristic; the
//! deadlock fixture suite pins that difference down.

pub mod grid;

pub use grid::{shortest_path, DistanceField, GridParams, WorldGrid};

use crate::common::{normalize_heading, NavAction, Pose2D};
use crate::sim::{step, KinematicsConfig, World};
use serde::{Deserialize, Serialize};

/// Rotate-then-forward heuristic configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TryoutConfig {
    /// Offsets from the goal bearing tried in order once stuck.
    pub preset_angles: Vec<f64>,
    /// Consecutive blocked forwards before the presets kick in.
    pub stuck_threshold: usize,
    pub goal_radius: f64,
}

impl Default for TryoutConfig {
    fn default() -> Self {
        let deg = |d: f64| d.to_radians();
        Self {
            preset_angles: vec![
                deg(30.0),
                deg(-30.0),
                deg(60.0),
                deg(-60.0),
                deg(90.0),
                deg(-90.0),
                deg(180.0),
            ],
            stuck_threshold: 2,
            goal_radius: 0.2,
        }
    }
}

/// What a controller run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerOutcome {
    pub actions: Vec<NavAction>,
    pub reached: bool,
    pub deadlocked: bool,
    /// No grid path existed (planned controller only); not an error.
    pub unreachable: bool,
    /// Meters actually translated.
    pub path_length: f64,
}

impl ControllerOutcome {
    fn empty() -> Self {
        Self {
            actions: Vec::new(),
            reached: false,
            deadlocked: false,
            unreachable: false,
            path_length: 0.0,
        }
    }
}

/// True when the recent pose window shows no real displacement: the maximum
/// pairwise distance stays under half a forward step.
pub fn detect_deadlock(window: &[Pose2D], forward_step: f64) -> bool {
    let mut max_disp = 0.0f64;
    for (i, a) in window.iter().enumerate() {
        for b in &window[i + 1..] {
            max_disp = max_disp.max(a.distance_to(b.position()));
        }
    }
    max_disp < 0.5 * forward_step
}

fn turn_action_toward(err: f64) -> NavAction {
    if err > 0.0 {
        NavAction::TurnLeft
    } else {
        NavAction::TurnRight
    }
}

struct Drive<'a> {
    world: &'a World,
    kin: &'a KinematicsConfig,
    budget: usize,
    pose: Pose2D,
    actions: Vec<NavAction>,
    path_length: f64,
}

impl<'a> Drive<'a> {
    fn new(world: &'a World, kin: &'a KinematicsConfig, start: Pose2D, budget: usize) -> Self {
        Self {
            world,
            kin,
            budget,
            pose: start,
            actions: Vec::new(),
            path_length: 0.0,
        }
    }

    fn exhausted(&self) -> bool {
        self.actions.len() >= self.budget
    }

    fn apply(&mut self, action: NavAction) -> bool {
        let (next, collided) = step(self.world, &self.pose, action, self.kin);
        self.path_length += self.pose.distance_to(next.position());
        self.pose = next;
        self.actions.push(action);
        collided
    }

    /// Rotate (quantized) until the heading error to `target` is within half
    /// a turn step. Returns false if the budget ran out first.
    fn rotate_to(&mut self, target_heading: f64) -> bool {
        let max_turns = (std::f64::consts::PI / self.kin.turn_step).ceil() as usize + 1;
        for _ in 0..max_turns {
            let err = normalize_heading(target_heading - self.pose.heading)
                .expect("finite heading error");
            if err.abs() <= self.kin.turn_step / 2.0 {
                return true;
            }
            if self.exhausted() {
                return false;
            }
            self.apply(turn_action_toward(err));
        }
        true
    }

    fn finish(self, reached: bool, deadlocked: bool, unreachable: bool) -> ControllerOutcome {
        ControllerOutcome {
            actions: self.actions,
            reached,
            deadlocked,
            unreachable,
            path_length: self.path_length,
        }
    }
}

/// Rotate-then-forward with preset-angle retries.
///
/// Greedily faces the goal and drives. After `stuck_threshold` consecutive
/// blocked forwards it rotates through the preset offsets in order, taking
/// the first forward that moves; if a full pass over the presets fails
/// consecutively, or the step budget runs out, the run is a deadlock.
pub fn tryout_controller(
    world: &World,
    start: Pose2D,
    goal: (f64, f64),
    cfg: &TryoutConfig,
    kin: &KinematicsConfig,
    budget: usize,
) -> ControllerOutcome {
    let mut drive = Drive::new(world, kin, start, budget);
    let mut blocked = 0usize;
    loop {
        if drive.pose.distance_to(goal) <= cfg.goal_radius {
            return drive.finish(true, false, false);
        }
        if drive.exhausted() {
            return drive.finish(false, true, false);
        }
        let desired = drive.pose.bearing_to(goal);
        if desired.abs() > kin.turn_step / 2.0 {
            drive.apply(turn_action_toward(desired));
            continue;
        }
        if !drive.apply(NavAction::Forward) {
            blocked = 0;
            continue;
        }
        blocked += 1;
        if blocked < cfg.stuck_threshold {
            continue;
        }

        // Stuck: try the preset offsets around the goal bearing.
        let mut escaped = false;
        for &offset in &cfg.preset_angles {
            let target =
                drive.pose.heading + drive.pose.bearing_to(goal) + offset;
            if !drive.rotate_to(target) {
                return drive.finish(false, true, false);
            }
            if drive.exhausted() {
                return drive.finish(false, true, false);
            }
            if !drive.apply(NavAction::Forward) {
                escaped = true;
                break;
            }
        }
        if !escaped {
            return drive.finish(false, true, false);
        }
        blocked = 0;
    }
}

/// Planned controller parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedParams {
    pub grid: GridParams,
    pub goal_radius: f64,
    /// Pure-pursuit lookahead along the grid path.
    pub lookahead: f64,
    /// Replans tolerated after collisions before giving up.
    pub replan_budget: usize,
}

impl Default for PlannedParams {
    fn default() -> Self {
        Self {
            grid: GridParams::default(),
            goal_radius: 0.2,
            lookahead: 0.3,
            replan_budget: 5,
        }
    }
}

/// Nearest free cell to `cell` within `reach_m` meters, by squared cell
/// distance with a fixed scan order for determinism.
fn nearest_free_cell(
    grid: &WorldGrid,
    cell: (usize, usize),
    reach_m: f64,
) -> Option<(usize, usize)> {
    if grid.is_free(cell) {
        return Some(cell);
    }
    let reach = (reach_m / grid.resolution).ceil() as i64;
    let mut best: Option<((usize, usize), i64)> = None;
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let nx = cell.0 as i64 + dx;
            let ny = cell.1 as i64 + dy;
            if nx < 0 || ny < 0 || nx >= grid.nx as i64 || ny >= grid.ny as i64 {
                continue;
            }
            let c = (nx as usize, ny as usize);
            if !grid.is_free(c) {
                continue;
            }
            let d2 = dx * dx + dy * dy;
            if best.is_none_or(|(_, bd)| d2 < bd) {
                best = Some((c, d2));
            }
        }
    }
    best.map(|(c, _)| c)
}

/// Grid shortest path plus path following.
///
/// Plans an 8-connected path (diagonal cost √2) over the inflated grid and
/// chases a lookahead point along it. A collision triggers a replan from the
/// current pose; a goal with no grid path yields an unreachable outcome
/// rather than an error.
pub fn planned_controller(
    world: &World,
    start: Pose2D,
    goal: (f64, f64),
    params: &PlannedParams,
    kin: &KinematicsConfig,
    budget: usize,
) -> ControllerOutcome {
    // Two grids: the base grid fixes what "reachable" means (the
    // unreachable outcome keys off it), while routes prefer a grid inflated
    // by one extra margin so the lookahead follower cannot cut a corner
    // into the agent radius. Tight passages that only the base grid can
    // thread fall back to it.
    let goal_grid = WorldGrid::build(world, &params.grid);
    let route_grid = WorldGrid::build(
        world,
        &GridParams {
            resolution: params.grid.resolution,
            inflation_radius: params.grid.inflation_radius + 0.05,
        },
    );
    let plan = |from: (f64, f64)| -> Option<Vec<(f64, f64)>> {
        let goal_cell = goal_grid.cell_of(goal)?;
        if !goal_grid.is_free(goal_cell) {
            return None; // goal inside obstacle inflation
        }
        for grid in [&route_grid, &goal_grid] {
            // A legal pose can occupy a blocked cell (the agent radius sits
            // below the inflation), so snap endpoints to nearby free cells.
            let Some(s) = nearest_free_cell(grid, grid.cell_of(from)?, 0.35) else {
                continue;
            };
            let Some(g) = nearest_free_cell(grid, goal_cell, 0.15) else {
                continue;
            };
            if let Some((cells, _)) = shortest_path(grid, s, g) {
                let mut points: Vec<(f64, f64)> =
                    cells.iter().map(|&c| grid.center(c)).collect();
                points.push(goal);
                return Some(points);
            }
        }
        None
    };

    let mut drive = Drive::new(world, kin, start, budget);
    let Some(mut points) = plan(start.position()) else {
        let mut out = ControllerOutcome::empty();
        out.unreachable = true;
        return out;
    };
    let mut path_idx = 0usize;
    let mut replans = 0usize;
    loop {
        if drive.pose.distance_to(goal) <= params.goal_radius {
            return drive.finish(true, false, false);
        }
        if drive.exhausted() {
            return drive.finish(false, true, false);
        }
        while path_idx + 1 < points.len()
            && drive.pose.distance_to(points[path_idx]) < params.lookahead
        {
            path_idx += 1;
        }
        let target = points[path_idx];
        let desired = drive.pose.bearing_to(target);
        if desired.abs() > kin.turn_step / 2.0 {
            drive.apply(turn_action_toward(desired));
            continue;
        }
        if drive.apply(NavAction::Forward) {
            replans += 1;
            if replans > params.replan_budget {
                return drive.finish(false, true, false);
            }
            match plan(drive.pose.position()) {
                Some(p) => {
                    points = p;
                    path_idx = 0;
                }
                None => return drive.finish(false, false, true),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Obstacle;
    use std::f64::consts::PI;

    fn kin() -> KinematicsConfig {
        KinematicsConfig::default()
    }

    /// A concave cup between start and goal, opening back toward the start.
    fn trap_world() -> (World, Pose2D, (f64, f64)) {
        let world = World::new(
            "trap-unit",
            "trap",
            (9.0, 9.0),
            vec![
                Obstacle::Rect {
                    min: (3.4, 4.0),
                    max: (3.6, 6.0),
                },
                Obstacle::Rect {
                    min: (5.4, 4.0),
                    max: (5.6, 6.0),
                },
                Obstacle::Rect {
                    min: (3.4, 5.8),
                    max: (5.6, 6.0),
                },
            ],
        )
        .unwrap();
        let start = Pose2D::new(4.5, 2.0, PI / 2.0).unwrap();
        let goal = (4.5, 7.5);
        (world, start, goal)
    }

    #[test]
    fn tryout_clear_line_is_eight_forwards() {
        let world = World::new("open", "open", (10.0, 10.0), vec![]).unwrap();
        let start = Pose2D::new(2.0, 5.0, 0.0).unwrap();
        let out = tryout_controller(
            &world,
            start,
            (4.0, 5.0),
            &TryoutConfig::default(),
            &kin(),
            500,
        );
        assert!(out.reached);
        assert_eq!(out.actions.len(), 8);
        assert!(out.actions.iter().all(|&a| a == NavAction::Forward));
        assert!((out.path_length - 2.0).abs() < 1e-9);
    }

    #[test]
    fn tryout_detours_through_wall_gap() {
        // A wall across the route with a gap to the agent's left; the first
        // preset (+30°) opens the detour.
        let world = World::new(
            "gap",
            "rooms",
            (10.0, 10.0),
            vec![
                Obstacle::Rect {
                    min: (0.0, 5.0),
                    max: (3.5, 5.2),
                },
                Obstacle::Rect {
                    min: (4.5, 5.0),
                    max: (10.0, 5.2),
                },
            ],
        )
        .unwrap();
        let start = Pose2D::new(5.0, 3.0, PI / 2.0).unwrap();
        let goal = (5.0, 7.0);
        let out = tryout_controller(&world, start, goal, &TryoutConfig::default(), &kin(), 500);
        assert!(out.reached, "tryout failed to detour: {out:?}");
        assert!(!out.deadlocked);
    }

    #[test]
    fn tryout_deadlocks_in_concave_trap() {
        let (world, start, goal) = trap_world();
        let out = tryout_controller(&world, start, goal, &TryoutConfig::default(), &kin(), 500);
        assert!(out.deadlocked, "expected deadlock, got {out:?}");
        assert!(!out.reached);
    }

    #[test]
    fn planned_solves_the_same_trap() {
        let (world, start, goal) = trap_world();
        let out = planned_controller(
            &world,
            start,
            goal,
            &PlannedParams::default(),
            &kin(),
            500,
        );
        assert!(out.reached, "planned controller failed: {out:?}");
        let final_near_goal = !out.actions.is_empty();
        assert!(final_near_goal);
    }

    #[test]
    fn planned_open_space_length_bound() {
        // Grid discretization plus heading quantization stays within 10% of
        // the straight line in open space.
        let world = World::new("open", "open", (12.0, 12.0), vec![]).unwrap();
        for &(dx, dy) in &[(3.0f64, 0.0), (2.0, 2.0), (0.0, 4.0), (3.0, 1.0), (-2.5, 1.5)] {
            let start = Pose2D::new(6.0, 6.0, 0.3).unwrap();
            let goal = (6.0 + dx, 6.0 + dy);
            let euclid = dx.hypot(dy);
            let out = planned_controller(
                &world,
                start,
                goal,
                &PlannedParams::default(),
                &kin(),
                500,
            );
            assert!(out.reached, "failed for offset ({dx}, {dy}): {out:?}");
            assert!(
                out.path_length <= 1.10 * euclid,
                "path {} exceeds 1.10 × {euclid}",
                out.path_length
            );
        }
    }

    #[test]
    fn planned_reports_sealed_goal_unreachable() {
        // A closed box around the goal: free interior, no way in.
        let world = World::new(
            "sealed",
            "rooms",
            (10.0, 10.0),
            vec![
                Obstacle::Rect {
                    min: (6.8, 6.8),
                    max: (8.2, 7.0),
                },
                Obstacle::Rect {
                    min: (6.8, 8.0),
                    max: (8.2, 8.2),
                },
                Obstacle::Rect {
                    min: (6.8, 7.0),
                    max: (7.0, 8.0),
                },
                Obstacle::Rect {
                    min: (8.0, 7.0),
                    max: (8.2, 8.0),
                },
            ],
        )
        .unwrap();
        let start = Pose2D::new(2.0, 2.0, 0.0).unwrap();
        let goal = (7.5, 7.5);
        let out = planned_controller(
            &world,
            start,
            goal,
            &PlannedParams::default(),
            &kin(),
            500,
        );
        assert!(out.unreachable);
        assert!(!out.reached && !out.deadlocked);

        // Brute-force flood fill over the same grid confirms no free path.
        let grid = WorldGrid::build(&world, &GridParams::default());
        let start_cell = grid.cell_of(start.position()).unwrap();
        let goal_cell = grid.cell_of(goal).unwrap();
        let mut seen = vec![false; grid.nx * grid.ny];
        let mut stack = vec![start_cell];
        seen[grid.index(start_cell)] = true;
        while let Some((x, y)) = stack.pop() {
            for dx in -1i64..=1 {
                for dy in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= grid.nx as i64 || ny >= grid.ny as i64 {
                        continue;
                    }
                    let c = (nx as usize, ny as usize);
                    if grid.is_free(c) && !seen[grid.index(c)] {
                        seen[grid.index(c)] = true;
                        stack.push(c);
                    }
                }
            }
        }
        assert!(
            !seen[grid.index(goal_cell)],
            "flood fill disagrees: goal is actually reachable"
        );
    }

    #[test]
    fn planned_reached_implies_within_goal_radius() {
        let (world, start, goal) = trap_world();
        let params = PlannedParams::default();
        let out = planned_controller(&world, start, goal, &params, &kin(), 500);
        assert!(out.reached);
        // Replay to the final pose and check the radius claim.
        let mut pose = start;
        for &a in &out.actions {
            pose = step(&world, &pose, a, &kin()).0;
        }
        assert!(pose.distance_to(goal) <= params.goal_radius);
    }

    #[test]
    fn distance_field_matches_astar() {
        let (world, start, goal) = trap_world();
        let params = GridParams::default();
        let field = DistanceField::build(&world, goal, &params);
        let grid = WorldGrid::build(&world, &params);
        let sc = grid.cell_of(start.position()).unwrap();
        let gc = grid.cell_of(goal).unwrap();
        let (_, astar_len) = shortest_path(&grid, sc, gc).unwrap();
        let field_len = field.distance(grid.center(sc)).unwrap();
        assert!(
            (astar_len - field_len).abs() < 1e-9,
            "A* {astar_len} vs field {field_len}"
        );
        // The straight-line floor holds.
        let spl = field.path_length_from(&start).unwrap();
        assert!(spl >= start.distance_to(goal) - 1e-12);
    }

    #[test]
    fn deadlock_predicate_threshold() {
        let p = |x: f64| Pose2D::new(x, 0.0, 0.0).unwrap();
        assert!(detect_deadlock(&[p(1.0), p(1.0), p(1.0)], 0.25));
        assert!(!detect_deadlock(&[p(0.0), p(0.25), p(0.5)], 0.25));
        // ±0.05 m oscillation: max pairwise displacement 0.1 < 0.125.
        assert!(detect_deadlock(
            &[p(1.0), p(1.05), p(0.95), p(1.05)],
            0.25
        ));
    }
}
