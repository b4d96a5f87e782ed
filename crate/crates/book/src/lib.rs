//! Compiles and runs the snippets of the guide in `book/src` as doc-tests.
//!
//! mdbook cannot test code that depends on workspace crates, so each chapter
//! is pulled in as the documentation of an empty module and `cargo test`
//! checks it like any other doc comment. One module per chapter keeps
//! failures traceable to their file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/precision.md")]
pub mod precision {}
#[doc = include_str!("../../../book/src/swarm.md")]
pub mod swarm {}
#[doc = include_str!("../../../book/src/potential.md")]
pub mod potential {}
#[doc = include_str!("../../../book/src/stagnation.md")]
pub mod stagnation {}
#[doc = include_str!("../../../book/src/estimators.md")]
pub mod estimators {}
#[doc = include_str!("../../../book/src/lemmas.md")]
pub mod lemmas {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
