//! The chapters of the guide in `book/`, included as module docs so that
//! `cargo test` runs every snippet.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/gp.md")]
pub mod gp {}

#[doc = include_str!("../../../book/src/lse.md")]
pub mod lse {}

#[doc = include_str!("../../../book/src/distortions.md")]
pub mod distortions {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/idx.md")]
pub mod idx {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
