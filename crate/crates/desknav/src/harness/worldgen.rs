//! Procedural worlds and episode sampling.
//!
//! Four world families stand in for scanned scenes: open floors, corridors
//! with a pierced cross wall, four-room layouts with doorways, and trap
//! worlds carrying a concave pocket astride the start–goal line. Generation
//! is deterministic per (kind, index, seed), and every emitted world is
//! checked to admit a start–goal pair with a free path of at least 3 m.

use super::HarnessError;
use crate::common::{derive_seed, EpisodeSpec, Pose2D};
use crate::control::{DistanceField, GridParams};
use crate::sim::{Obstacle, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Procedural world family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    Open,
    Corridor,
    Rooms,
    Trap,
}

impl WorldKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WorldKind::Open => "open",
            WorldKind::Corridor => "corridor",
            WorldKind::Rooms => "rooms",
            WorldKind::Trap => "trap",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "open" => Some(WorldKind::Open),
            "corridor" => Some(WorldKind::Corridor),
            "rooms" => Some(WorldKind::Rooms),
            "trap" => Some(WorldKind::Trap),
            _ => None,
        }
    }
}

/// Minimum free-path length every world must admit between some start–goal
/// pair, in meters.
const MIN_ADMITTED_PATH: f64 = 3.0;

/// Clearance required of sampled start and goal points.
const SAMPLE_CLEARANCE: f64 = 0.35;

/// Build `count` deterministic worlds of one kind.
pub fn generate_worlds(
    kind: WorldKind,
    count: usize,
    seed: u64,
) -> Result<Vec<World>, HarnessError> {
    let mut worlds = Vec::with_capacity(count);
    for index in 0..count {
        let id = format!("{}-{index:03}", kind.as_str());
        let mut world = None;
        // A handful of re-rolls absorbs the rare degenerate draw.
        for attempt in 0..8u64 {
            let world_seed = derive_seed(seed, "worldgen", (index as u64) << 8 | attempt);
            let candidate = build_world(kind, &id, world_seed);
            if admits_min_path(&candidate, world_seed) {
                world = Some(candidate);
                break;
            }
        }
        worlds.push(world.ok_or(HarnessError::WorldGeneration {
            kind: kind.as_str(),
            index,
        })?);
    }
    Ok(worlds)
}

fn build_world(kind: WorldKind, id: &str, seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        WorldKind::Open => {
            let side = rng.random_range(7.0..9.0);
            World::new(id, kind.as_str(), (side, side), vec![])
                .expect("open world is always valid")
        }
        WorldKind::Corridor => {
            let bounds = (10.0, 6.0);
            let cy = rng.random_range(2.5..3.5);
            let half = rng.random_range(0.6..0.9);
            let mut obstacles = vec![
                Obstacle::Rect {
                    min: (0.0, 0.0),
                    max: (bounds.0, cy - half),
                },
                Obstacle::Rect {
                    min: (0.0, cy + half),
                    max: (bounds.0, bounds.1),
                },
            ];
            // A thin cross wall pierced by a doorway.
            let wx = rng.random_range(4.0..6.0);
            let gap_low = rng.random_range(cy - half + 0.1..cy + half - 1.1);
            let gap_high = gap_low + 1.0;
            if gap_low - (cy - half) > 0.05 {
                obstacles.push(Obstacle::Rect {
                    min: (wx, cy - half),
                    max: (wx + 0.2, gap_low),
                });
            }
            if (cy + half) - gap_high > 0.05 {
                obstacles.push(Obstacle::Rect {
                    min: (wx, gap_high),
                    max: (wx + 0.2, cy + half),
                });
            }
            World::new(id, kind.as_str(), bounds, obstacles)
                .expect("corridor geometry stays in bounds")
        }
        WorldKind::Rooms => {
            let bounds = (9.0, 9.0);
            let wx = rng.random_range(4.0..5.0);
            let wy = rng.random_range(4.0..5.0);
            let door = 1.1;
            let mut obstacles = Vec::new();
            // Vertical divider with one doorway per half.
            for (lo, hi) in [(0.0, wy), (wy, bounds.1)] {
                let d0 = rng.random_range(lo + 0.4..hi - 0.4 - door);
                if d0 - lo > 0.05 {
                    obstacles.push(Obstacle::Rect {
                        min: (wx, lo),
                        max: (wx + 0.2, d0),
                    });
                }
                if hi - (d0 + door) > 0.05 {
                    obstacles.push(Obstacle::Rect {
                        min: (wx, d0 + door),
                        max: (wx + 0.2, hi),
                    });
                }
            }
            // Horizontal divider with one doorway per half.
            for (lo, hi) in [(0.0, wx), (wx + 0.2, bounds.0)] {
                let d0 = rng.random_range(lo + 0.4..hi - 0.4 - door);
                if d0 - lo > 0.05 {
                    obstacles.push(Obstacle::Rect {
                        min: (lo, wy),
                        max: (d0, wy + 0.2),
                    });
                }
                if hi - (d0 + door) > 0.05 {
                    obstacles.push(Obstacle::Rect {
                        min: (d0 + door, wy),
                        max: (hi, wy + 0.2),
                    });
                }
            }
            World::new(id, kind.as_str(), bounds, obstacles)
                .expect("room dividers stay in bounds")
        }
        WorldKind::Trap => {
            let bounds = (9.0, 9.0);
            // A concave cup astride the vertical start–goal line, opening
            // south toward the start region.
            let cx = rng.random_range(3.8..5.2);
            let half_mouth = rng.random_range(0.8..1.2);
            let arm_bottom = rng.random_range(3.5..4.2);
            let arm_top = arm_bottom + rng.random_range(1.6..2.2);
            let wall = 0.2;
            let obstacles = vec![
                Obstacle::Rect {
                    min: (cx - half_mouth - wall, arm_bottom),
                    max: (cx - half_mouth, arm_top),
                },
                Obstacle::Rect {
                    min: (cx + half_mouth, arm_bottom),
                    max: (cx + half_mouth + wall, arm_top),
                },
                Obstacle::Rect {
                    min: (cx - half_mouth - wall, arm_top - wall),
                    max: (cx + half_mouth + wall, arm_top),
                },
            ];
            World::new(id, kind.as_str(), bounds, obstacles)
                .expect("trap cup stays in bounds")
        }
    }
}

/// The canonical start/goal line of a trap world: south of the cup mouth up
/// to north of its back wall.
pub fn trap_start_goal(world: &World) -> Option<(Pose2D, (f64, f64))> {
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let mut cx = 0.0;
    let mut n = 0.0;
    for o in &world.obstacles {
        if let Obstacle::Rect { min, max } = o {
            min_y = min_y.min(min.1);
            max_y = max_y.max(max.1);
            cx += (min.0 + max.0) / 2.0;
            n += 1.0;
        }
    }
    if n == 0.0 {
        return None;
    }
    cx /= n;
    let start = Pose2D::new(cx, (min_y - 2.0).max(0.6), PI / 2.0).ok()?;
    let goal = (cx, (max_y + 1.5).min(world.bounds.1 - 0.6));
    Some((start, goal))
}

/// Does the straight start–goal segment cross the mouth of a concave pocket
/// that opens toward the start? Checked on trap worlds at generation time.
pub fn has_pocket_on_line(world: &World, start: (f64, f64), goal: (f64, f64)) -> bool {
    // The cup is three rects: two arms and a back bar. The pocket mouth is
    // the open interval between the arms at their southern edge.
    let rects: Vec<((f64, f64), (f64, f64))> = world
        .obstacles
        .iter()
        .filter_map(|o| match o {
            Obstacle::Rect { min, max } => Some((*min, *max)),
            _ => None,
        })
        .collect();
    if rects.len() < 3 {
        return false;
    }
    let line_x = |y: f64| {
        let t = (y - start.1) / (goal.1 - start.1);
        start.0 + t * (goal.0 - start.0)
    };
    // Identify arm pairs: rects sharing a y-extent with a gap between them.
    for (i, a) in rects.iter().enumerate() {
        for b in rects.iter().skip(i + 1) {
            let (left, right) = if a.1 .0 <= b.0 .0 { (a, b) } else { (b, a) };
            let gap = right.0 .0 - left.1 .0;
            if gap < 0.4 {
                continue;
            }
            let y_lo = left.0 .1.max(right.0 .1);
            let y_hi = left.1 .1.min(right.1 .1);
            if y_hi - y_lo < 0.5 {
                continue;
            }
            // The line must enter through the mouth between the arms.
            let mouth_y = y_lo;
            if start.1 < mouth_y && goal.1 > y_hi {
                let x = line_x(mouth_y);
                if x > left.1 .0 + 0.1 && x < right.0 .0 - 0.1 {
                    return true;
                }
            }
        }
    }
    false
}

fn admits_min_path(world: &World, seed: u64) -> bool {
    sample_start_goal(world, seed).is_some()
}

fn sample_clear_point(world: &World, rng: &mut ChaCha8Rng) -> Option<(f64, f64)> {
    for _ in 0..400 {
        let x = rng.random_range(0.5..world.bounds.0 - 0.5);
        let y = rng.random_range(0.5..world.bounds.1 - 0.5);
        if world.clearance((x, y)) >= SAMPLE_CLEARANCE {
            return Some((x, y));
        }
    }
    None
}

/// Deterministically sample a clear start pose and goal point with a free
/// grid path of at least 3 m between them.
fn sample_start_goal(world: &World, seed: u64) -> Option<(Pose2D, (f64, f64), f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = GridParams::default();
    for _ in 0..40 {
        let s = sample_clear_point(world, &mut rng)?;
        let g = sample_clear_point(world, &mut rng)?;
        let heading = rng.random_range(-PI..PI);
        let field = DistanceField::build(world, g, &params);
        let start = Pose2D::new(s.0, s.1, heading).expect("finite pose");
        match field.path_length_from(&start) {
            Some(l) if l >= MIN_ADMITTED_PATH => return Some((start, g, l)),
            _ => continue,
        }
    }
    None
}

fn compass_word(bearing: f64) -> &'static str {
    let deg = bearing.to_degrees();
    match deg {
        d if d.abs() <= 22.5 => "straight ahead",
        d if (22.5..=67.5).contains(&d) => "ahead on your left",
        d if (67.5..=112.5).contains(&d) => "to your left",
        d if (112.5..=157.5).contains(&d) => "behind you on the left",
        d if (-67.5..-22.5).contains(&d) => "ahead on your right",
        d if (-112.5..-67.5).contains(&d) => "to your right",
        d if (-157.5..-112.5).contains(&d) => "behind you on the right",
        _ => "behind you",
    }
}

/// Sample `per_world` episodes on each world. Ids are `prefix` plus a global
/// counter starting at `id_base`, which keeps calibration and evaluation
/// sets in provably disjoint ranges.
pub fn generate_episodes(
    worlds: &[World],
    per_world: usize,
    seed: u64,
    prefix: &str,
    id_base: usize,
) -> Result<Vec<EpisodeSpec>, HarnessError> {
    let mut episodes = Vec::with_capacity(worlds.len() * per_world);
    let mut counter = id_base;
    for (wi, world) in worlds.iter().enumerate() {
        for e in 0..per_world {
            let ep_seed = derive_seed(seed, "episode-sample", ((wi as u64) << 20) | e as u64);
            let (start, goal, l) = if world.kind == "trap" && e == 0 {
                // The first trap episode runs the canonical through-the-cup
                // line so the pocket actually sits on the route.
                let (start, goal) = trap_start_goal(world)
                    .ok_or(HarnessError::EpisodeSampling {
                        world: world.id.clone(),
                    })?;
                let field = DistanceField::build(world, goal, &GridParams::default());
                let l = field.path_length_from(&start).ok_or(
                    HarnessError::EpisodeSampling {
                        world: world.id.clone(),
                    },
                )?;
                (start, goal, l)
            } else {
                sample_start_goal(world, ep_seed).ok_or(HarnessError::EpisodeSampling {
                    world: world.id.clone(),
                })?
            };
            let instruction = format!(
                "Make your way {} for roughly {:.0} meters and stop at the goal marker.",
                compass_word(start.bearing_to(goal)),
                l.max(1.0)
            );
            episodes.push(EpisodeSpec {
                id: format!("{prefix}{counter:06}"),
                world_id: world.id.clone(),
                start,
                goal,
                instruction,
                shortest_path_length: l,
            });
            counter += 1;
        }
    }
    Ok(episodes)
}
