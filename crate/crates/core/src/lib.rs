//! Clustering of plain feature vectors with an anchor-based bipartite graph
//! auto-encoder.
//!
//! The pipeline has four stages:
//!
//! 1. [`anchor_graph`] fits `m` anchors and a k-sparse, row-stochastic
//!    sample-to-anchor transition matrix `B`.
//! 2. [`conv`] runs graph convolution over the implied sample graph
//!    `A = B Δ⁻¹ Bᵀ` without ever forming it, plus a weight-sharing branch
//!    that embeds the anchors through `A_t = Δ⁻¹ Bᵀ B`.
//! 3. [`training`] decodes embeddings back into transition probabilities and
//!    trains the encoder on a cross-entropy reconstruction loss.
//! 4. [`refine`] alternates training with refitting the graph on the learned
//!    embedding, growing the sparsity to keep the graph from collapsing.
//!
//! [`clustering`] turns the result into labels and [`metrics`] scores them.

pub mod anchor_graph;
pub mod bench;
pub mod clustering;
pub mod conv;
pub mod data;
mod error;
pub mod metrics;
pub mod numerics;
pub mod refine;
pub mod training;

#[cfg(doctest)]
mod book;

pub use error::{Error, Result};
pub use numerics::{DenseMatrix, SeededRng};
