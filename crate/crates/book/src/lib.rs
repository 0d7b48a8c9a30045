//! The guide in `book/`, compiled as documentation so that its Rust
//! snippets run as doctests with `cargo test`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/input-formats.md")]
pub mod input_formats {}
#[doc = include_str!("../../../book/src/linking.md")]
pub mod linking {}
#[doc = include_str!("../../../book/src/graph.md")]
pub mod graph {}
#[doc = include_str!("../../../book/src/composition.md")]
pub mod composition {}
#[doc = include_str!("../../../book/src/retrieval.md")]
pub mod retrieval {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
