//! The guide in `book/` is rendered with mdbook, which cannot run the
//! listings against this workspace. Each chapter is included here as a
//! module doc so `cargo test --doc` compiles and runs every listing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/hashing.md")]
pub mod hashing {}
#[doc = include_str!("../../../book/src/encoding.md")]
pub mod encoding {}
#[doc = include_str!("../../../book/src/decoding.md")]
pub mod decoding {}
#[doc = include_str!("../../../book/src/cbe.md")]
pub mod cbe {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
