//! The user guide, embedded chapter by chapter so every code sample in the
//! rendered book compiles and runs under `cargo test`. The same files build
//! the mdbook under `book/`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/frames.md")]
pub mod frames {}

#[doc = include_str!("../../../book/src/conformal.md")]
pub mod conformal {}

#[doc = include_str!("../../../book/src/fusion.md")]
pub mod fusion {}

#[doc = include_str!("../../../book/src/waypoints.md")]
pub mod waypoints {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
