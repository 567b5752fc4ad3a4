//! Compiles and runs every code snippet in the book under `cargo test --doc`.
//!
//! Each module's documentation is a chapter of `book/src` included verbatim,
//! so the guide and the library cannot drift apart silently: a snippet that
//! stops compiling or an assertion that stops holding fails the test suite.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/stage-game.md")]
pub mod stage_game {}

#[doc = include_str!("../../../book/src/cost-region.md")]
pub mod cost_region {}

#[doc = include_str!("../../../book/src/rotation.md")]
pub mod rotation {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
