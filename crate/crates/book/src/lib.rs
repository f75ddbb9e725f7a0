//! Guide chapters compiled as doc-tests, one module per chapter.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/interfaces.md")]
pub mod interfaces {}
#[doc = include_str!("../../../book/src/compression.md")]
pub mod compression {}
#[doc = include_str!("../../../book/src/beliefs.md")]
pub mod beliefs {}
#[doc = include_str!("../../../book/src/reversal.md")]
pub mod reversal {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
