//! Label extraction: k-means on embeddings and spectral clustering of the
//! bipartite anchor graph.

mod kmeans;
mod spectral;

pub use kmeans::{kmeans, KMeansFit};
pub use spectral::{spectral_via_svd, SpectralEmbedding};

use serde::{Deserialize, Serialize};

use crate::anchor_graph::AnchorGraph;
use crate::error::Result;
use crate::numerics::{DenseMatrix, SeededRng};

const KMEANS_RESTARTS: usize = 10;

/// How final labels are read off a fitted model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Spectral clustering of the bipartite graph `B`.
    #[default]
    Spectral,
    /// k-means on the sample embedding.
    Kmeans,
}

/// Labels for `c` clusters from a graph and its sample embedding.
pub fn assign_clusters(
    route: Route,
    graph: &AnchorGraph,
    embedding: &DenseMatrix,
    c: usize,
    rng: &mut SeededRng,
) -> Result<ClusterAssignment> {
    match route {
        Route::Spectral => spectral_via_svd(graph, c, rng).map(|s| s.assignment),
        Route::Kmeans => kmeans(embedding, c, rng, KMEANS_RESTARTS).map(|f| f.assignment),
    }
}

/// Hard cluster labels in `0..n_clusters`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Points per cluster.
    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_clusters];
        for &l in &self.labels {
            out[l] += 1;
        }
        out
    }
}
