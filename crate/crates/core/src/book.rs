//! Runs the code blocks of the guide in `book/` as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/anchor-graphs.md")]
mod anchor_graphs {}

#[doc = include_str!("../../../book/src/convolution.md")]
mod convolution {}

#[doc = include_str!("../../../book/src/training.md")]
mod training {}

#[doc = include_str!("../../../book/src/refinement.md")]
mod refinement {}

#[doc = include_str!("../../../book/src/clustering.md")]
mod clustering {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
