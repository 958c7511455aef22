//! Curated fixture maps for controller comparison.
//!
//! Five hand-built worlds put a concave pocket between start and goal. The
//! rotate-then-forward heuristic walks into the pocket and oscillates; the
//! planned controller routes around it. The acceptance suite pins the
//! resulting success-rate split.

use crate::common::Pose2D;
use crate::sim::{Obstacle, World};
use std::f64::consts::PI;

/// One controller benchmark case.
#[derive(Debug, Clone)]
pub struct ControllerCase {
    pub world: World,
    pub start: Pose2D,
    pub goal: (f64, f64),
}

fn rect(min: (f64, f64), max: (f64, f64)) -> Obstacle {
    Obstacle::Rect { min, max }
}

/// The five deadlock maps. Deterministic, no randomness involved.
pub fn deadlock_suite() -> Vec<ControllerCase> {
    let north = PI / 2.0;
    let east = 0.0;
    vec![
        // 1. Medium cup opening south.
        ControllerCase {
            world: World::new(
                "fixture-cup",
                "trap",
                (9.0, 9.0),
                vec![
                    rect((3.4, 4.0), (3.6, 6.0)),
                    rect((5.4, 4.0), (5.6, 6.0)),
                    rect((3.4, 5.8), (5.6, 6.0)),
                ],
            )
            .unwrap(),
            start: Pose2D::new(4.5, 2.0, north).unwrap(),
            goal: (4.5, 7.5),
        },
        // 2. Narrow deep cup.
        ControllerCase {
            world: World::new(
                "fixture-narrow",
                "trap",
                (9.0, 9.0),
                vec![
                    rect((3.8, 3.5), (4.0, 5.5)),
                    rect((5.2, 3.5), (5.4, 5.5)),
                    rect((3.8, 5.3), (5.4, 5.5)),
                ],
            )
            .unwrap(),
            start: Pose2D::new(4.6, 1.5, north).unwrap(),
            goal: (4.6, 8.0),
        },
        // 3. Wide cup with long arms.
        ControllerCase {
            world: World::new(
                "fixture-wide",
                "trap",
                (9.0, 9.0),
                vec![
                    rect((2.8, 3.0), (3.0, 6.2)),
                    rect((6.2, 3.0), (6.4, 6.2)),
                    rect((2.8, 6.0), (6.4, 6.2)),
                ],
            )
            .unwrap(),
            start: Pose2D::new(4.6, 1.2, north).unwrap(),
            goal: (4.6, 8.0),
        },
        // 4. Cup rotated to open west; approach runs east.
        ControllerCase {
            world: World::new(
                "fixture-east",
                "trap",
                (9.0, 9.0),
                vec![
                    rect((4.0, 3.4), (6.0, 3.6)),
                    rect((4.0, 5.4), (6.0, 5.6)),
                    rect((5.8, 3.4), (6.0, 5.6)),
                ],
            )
            .unwrap(),
            start: Pose2D::new(1.5, 4.5, east).unwrap(),
            goal: (8.0, 4.6),
        },
        // 5. Cup plus flanking blocks that narrow the approach.
        ControllerCase {
            world: World::new(
                "fixture-flanked",
                "trap",
                (9.0, 9.0),
                vec![
                    rect((3.4, 4.0), (3.6, 6.0)),
                    rect((5.4, 4.0), (5.6, 6.0)),
                    rect((3.4, 5.8), (5.6, 6.0)),
                    rect((1.2, 4.5), (2.4, 4.7)),
                    rect((6.6, 4.5), (7.8, 4.7)),
                ],
            )
            .unwrap(),
            start: Pose2D::new(4.5, 1.8, north).unwrap(),
            goal: (4.5, 7.6),
        },
    ]
}
