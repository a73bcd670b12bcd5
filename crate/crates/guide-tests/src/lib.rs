//! Doc-test harness for the guide in `book/`.
//!
//! mdbook cannot run example code against the crate it documents, so each
//! chapter is included here as module documentation and `cargo test` runs
//! every Rust code block through rustdoc. A failing snippet points at the
//! chapter module it came from.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/three-level-atom.md")]
pub mod three_level_atom {}

#[doc = include_str!("../../../book/src/dephasing-and-echoes.md")]
pub mod dephasing_and_echoes {}

#[doc = include_str!("../../../book/src/medium-and-propagation.md")]
pub mod medium_and_propagation {}

#[doc = include_str!("../../../book/src/phase-matching.md")]
pub mod phase_matching {}

#[doc = include_str!("../../../book/src/protocols.md")]
pub mod protocols {}

#[doc = include_str!("../../../book/src/efficiency.md")]
pub mod efficiency {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
