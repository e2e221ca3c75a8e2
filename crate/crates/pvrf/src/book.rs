//! Doc-test gate for the guide in `book/`.
//!
//! Every chapter is attached as documentation of an empty module, so
//! `cargo test` compiles and runs the guide's Rust examples.  If a code
//! block in the book drifts from the library's API, the build breaks here.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/restricted-means.md")]
mod restricted_means {}

#[doc = include_str!("../../../book/src/pseudo-values.md")]
mod pseudo_values {}

#[doc = include_str!("../../../book/src/forests.md")]
mod forests {}

#[doc = include_str!("../../../book/src/baselines.md")]
mod baselines {}

#[doc = include_str!("../../../book/src/effects.md")]
mod effects {}

#[doc = include_str!("../../../book/src/evaluation.md")]
mod evaluation {}

#[doc = include_str!("../../../book/src/simulation.md")]
mod simulation {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
