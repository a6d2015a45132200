//! The book's chapters, compiled as doctests so every listing stays runnable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/sync.md")]
pub mod sync {}
#[doc = include_str!("../../../book/src/async.md")]
pub mod asynchronous {}
#[doc = include_str!("../../../book/src/protocols.md")]
pub mod protocols {}
#[doc = include_str!("../../../book/src/adversary.md")]
pub mod adversary {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
