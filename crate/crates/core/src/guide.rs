//! The user guide, rendered with mdbook from `book/` at the repository root.
//!
//! Each chapter is included here as a module doc, so every code sample in the
//! book compiles and runs under `cargo test --doc` and cannot drift from the
//! library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/stage1-design.md")]
pub mod stage1_design {}

#[doc = include_str!("../../../book/src/stage1-decoding.md")]
pub mod stage1_decoding {}

#[doc = include_str!("../../../book/src/stage2.md")]
pub mod stage2 {}

#[doc = include_str!("../../../book/src/bounds.md")]
pub mod bounds {}

#[doc = include_str!("../../../book/src/dilution.md")]
pub mod dilution {}

#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
