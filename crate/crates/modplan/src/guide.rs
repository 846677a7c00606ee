//! The book's chapters, included as rustdoc so `cargo test --doc` runs
//! every code sample the guide shows. mdbook renders the same files from
//! `book/`; this keeps the two in sync by construction.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/problem.md")]
pub mod problem {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/formulation.md")]
pub mod formulation {}

#[doc = include_str!("../../../book/src/solving.md")]
pub mod solving {}

#[doc = include_str!("../../../book/src/slicing.md")]
pub mod slicing {}

#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
