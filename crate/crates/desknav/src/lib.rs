//! Desk-scale embodied navigation decision stack.
//!
//! An agent in a continuous 2D world picks its next subgoal from
//! LiDAR-clustered candidate waypoints. A fast noisy planner scores every
//! candidate; split conformal prediction turns that score vector into a
//! prediction set whose cardinality gates a reflective scripted reasoner;
//! the two opinions fuse with an uncertainty weight and a local controller
//! drives the winner. Episodes are scored with the standard navigation
//! metrics (TL, NE, OSR, SR, SPL) across success-distance thresholds.
//!
//! Everything is deterministic under a root seed, so runs replay
//! byte-for-byte. The [`book`] module embeds the full guide; the
//! `desknav-cli` crate wraps the [`harness`] in a command line.
//!
//! ```
//! use desknav::common::ActionDistribution;
//! use desknav::conformal::ConformalModel;
//! use desknav::fusion::{decide, FusionConfig, ReasonerVerdict};
//!
//! // A torn planner meets a confident reasoner: the runner-up wins.
//! let planner = ActionDistribution::new(vec![0.56, 0.43, 0.01]).unwrap();
//! let model = ConformalModel::fixed_tau(0.97, 0.1);
//! let out = decide(&planner, &model, &FusionConfig::default(), |set| {
//!     Ok(ReasonerVerdict { chosen: set.members()[1], confidence: 0.9, rationale: String::new() })
//! });
//! assert_eq!(out.selected, 1);
//! ```

pub mod book;
pub mod common;
pub mod conformal;
pub mod control;
pub mod experts;
pub mod fusion;
pub mod harness;
pub mod metrics;
pub mod sim;
pub mod waypoint;
