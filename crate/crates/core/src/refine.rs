//! The self-supervised outer loop: train the encoder, refit the anchor graph
//! on the learned embedding, carry the anchors back to the input space and
//! widen the graph's sparsity.
//!
//! Refitting on a well-trained embedding with a fixed `k` drives every
//! connectivity distribution towards `1/k` on its support, and the graph falls
//! apart into many small disconnected groups. Growing `k` each round keeps
//! those groups connected. [`CollapseDiagnostics`] tracks the symptoms.

use serde::{Deserialize, Serialize};

use crate::anchor_graph::{
    fit_anchor_graph, init_anchors, update_anchors, AnchorGraph, ConnectivitySolveConfig, EdgeWeighting,
};
use crate::conv::{encode_anchors, encode_samples, init_params, EncoderParams};
use crate::error::{invalid, Error, Result};
use crate::numerics::{DenseMatrix, SeededRng};
use crate::training::{decode, train, LossTrace, TrainConfig};

/// Growth plan for the sparsity `k` across outer epochs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsitySchedule {
    pub k0: usize,
    /// `⌊m n_s / n⌋`, raised to `k0` when smaller.
    pub k_max: usize,
    /// `⌊(k_max − k0) / E⌋`, zero when `E = 0`.
    pub delta_k: usize,
    pub outer_epochs: usize,
    /// Estimated size of the smallest cluster.
    pub smallest_cluster: usize,
    pub n_anchors: usize,
}

impl SparsitySchedule {
    /// `smallest_cluster` defaults to `⌊n/c⌋`.
    pub fn new(
        n: usize,
        m: usize,
        c: usize,
        k0: usize,
        outer_epochs: usize,
        smallest_cluster: Option<usize>,
    ) -> Result<Self> {
        if n == 0 || c == 0 {
            return Err(invalid("schedule needs at least one sample and one cluster"));
        }
        if k0 == 0 || k0 >= m {
            return Err(invalid(format!("k0 = {k0} must satisfy 1 <= k0 < m = {m}")));
        }
        let n_s = smallest_cluster.unwrap_or(n / c);
        if n_s == 0 || n_s > n {
            return Err(invalid(format!("smallest cluster size {n_s} must lie in 1..={n}")));
        }
        let raw = m * n_s / n;
        if raw < k0 {
            log::warn!("k_max = {raw} is below k0 = {k0}; sparsity stays at {k0}");
        }
        let k_max = raw.max(k0);
        let delta_k = (k_max - k0).checked_div(outer_epochs).unwrap_or(0);
        Ok(Self {
            k0,
            k_max,
            delta_k,
            outer_epochs,
            smallest_cluster: n_s,
            n_anchors: m,
        })
    }

    /// `min(k + Δk, m − 1)`.
    pub fn step(&self, k: usize) -> usize {
        (k + self.delta_k).min(self.n_anchors - 1).max(k)
    }

    /// `k0` followed by `E` applications of [`step`](Self::step).
    pub fn path(&self) -> Vec<usize> {
        let mut out = vec![self.k0];
        for _ in 0..self.outer_epochs {
            let next = self.step(*out.last().expect("nonempty"));
            out.push(next);
        }
        out
    }
}

/// Which parts of the outer loop run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopMode {
    /// Refit the graph and grow `k` every round.
    #[default]
    Full,
    /// Keep the initial graph and anchors; only train (ablation "Ours-A").
    FixedB,
    /// Refit the graph but never grow `k` (ablation "Ours-B").
    FixedK,
    /// Uniform `1/k` weights on the `k` nearest anchors (ablation "Ours-C").
    Knn,
}

impl LoopMode {
    fn refits(self) -> bool {
        self != LoopMode::FixedB
    }

    fn grows_k(self) -> bool {
        matches!(self, LoopMode::Full | LoopMode::Knn)
    }

    fn weighting(self) -> EdgeWeighting {
        if self == LoopMode::Knn {
            EdgeWeighting::Uniform
        } else {
            EdgeWeighting::Generative
        }
    }
}

/// Collapse symptoms of one graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseSnapshot {
    /// Sparsity of the measured graph.
    pub k: usize,
    /// `max |b_ij − 1/k|` over the stored entries.
    pub uniformity_gap: f64,
    /// Mean over rows of the per-row maximum of `|b_ij − 1/k|`.
    pub mean_uniformity_gap: f64,
    /// Connected components of the bipartite sample/anchor graph.
    pub component_count: usize,
    /// `max |q_ij − b_ij|` over the stored entries of `B`.
    pub reconstruction_gap: f64,
}

/// One snapshot for the initial graph and one per outer epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseDiagnostics {
    pub snapshots: Vec<CollapseSnapshot>,
}

impl CollapseDiagnostics {
    pub fn first(&self) -> Option<&CollapseSnapshot> {
        self.snapshots.first()
    }

    pub fn last(&self) -> Option<&CollapseSnapshot> {
        self.snapshots.last()
    }
}

/// Uniformity, connectivity and reconstruction error of `g` against the
/// decoded distributions `q` (n×m).
pub fn measure_collapse(g: &AnchorGraph, q: &DenseMatrix) -> Result<CollapseSnapshot> {
    let (n, m) = (g.n_samples(), g.n_anchors());
    if q.shape() != (n, m) {
        return Err(Error::DimensionMismatch {
            op: "measure_collapse",
            left: (n, m),
            right: q.shape(),
        });
    }
    let k = g.k();
    let uniform = 1.0 / k as f64;
    let mut uniformity_gap: f64 = 0.0;
    let mut row_gap_sum = 0.0;
    let mut reconstruction_gap: f64 = 0.0;
    let mut forest = DisjointSets::new(n + m);
    for i in 0..n {
        let (idx, val) = g.b().row(i);
        let mut row_gap: f64 = 0.0;
        for (&j, &b) in idx.iter().zip(val) {
            row_gap = row_gap.max((b - uniform).abs());
            reconstruction_gap = reconstruction_gap.max((q[(i, j)] - b).abs());
            if b > 0.0 {
                forest.union(i, n + j);
            }
        }
        uniformity_gap = uniformity_gap.max(row_gap);
        row_gap_sum += row_gap;
    }
    Ok(CollapseSnapshot {
        k,
        uniformity_gap,
        mean_uniformity_gap: row_gap_sum / n as f64,
        component_count: forest.count(),
        reconstruction_gap,
    })
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
    sets: usize,
}

impl DisjointSets {
    fn new(size: usize) -> Self {
        Self {
            parent: (0..size).collect(),
            rank: vec![0; size],
            sets: size,
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        self.sets -= 1;
    }

    fn count(&self) -> usize {
        self.sets
    }
}

/// Anchors in the input space: `c_j = Σ_i b_ij x_i / Δ_j`, a convex
/// combination of the samples attached to anchor `j`.
pub fn pullback_anchors(x: &DenseMatrix, g: &AnchorGraph) -> Result<DenseMatrix> {
    update_anchors(x, g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnchorGaeConfig {
    pub n_clusters: usize,
    pub n_anchors: usize,
    /// Output width of each encoder layer; the input width comes from the data.
    pub layers: Vec<usize>,
    pub k0: usize,
    pub outer_epochs: usize,
    pub train: TrainConfig,
    pub mode: LoopMode,
    /// Smallest-cluster size used by the schedule, `⌊n/c⌋` when absent.
    pub smallest_cluster: Option<usize>,
    pub seed: u64,
    /// Keep the graph and sample embedding of every snapshot in the output.
    pub keep_history: bool,
}

impl Default for AnchorGaeConfig {
    fn default() -> Self {
        Self {
            n_clusters: 2,
            n_anchors: 200,
            layers: vec![128, 64],
            k0: 3,
            outer_epochs: 5,
            train: TrainConfig::default(),
            mode: LoopMode::Full,
            smallest_cluster: None,
            seed: 0,
            keep_history: false,
        }
    }
}

impl AnchorGaeConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_clusters == 0 || self.n_clusters > n {
            return Err(invalid(format!("cannot form {} clusters from {n} samples", self.n_clusters)));
        }
        if self.n_anchors < 2 || self.n_anchors > n {
            return Err(invalid(format!(
                "anchor count {} must lie in 2..={n}",
                self.n_anchors
            )));
        }
        if self.layers.is_empty() || self.layers.contains(&0) {
            return Err(invalid("layer widths must be a nonempty list of positive counts"));
        }
        self.train.validate()
    }
}

/// Everything [`run_anchorgae`] produces.
#[derive(Clone, Debug)]
pub struct AnchorGaeOutput {
    /// Final sample embedding `Z` (n×d').
    pub embedding: DenseMatrix,
    /// Final anchor embedding `Z_t` (m×d').
    pub anchor_embedding: DenseMatrix,
    /// Final graph, with its anchors in the input space.
    pub graph: AnchorGraph,
    pub params: EncoderParams,
    pub schedule: SparsitySchedule,
    pub diagnostics: CollapseDiagnostics,
    /// One trace per training round.
    pub loss_traces: Vec<LossTrace>,
    /// Sample embedding at each snapshot, when requested.
    pub history: Vec<DenseMatrix>,
    /// Graph at each snapshot, when requested.
    pub graph_history: Vec<AnchorGraph>,
}

fn ensure_finite(m: &DenseMatrix, stage: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { stage: stage.into() })
    }
}

/// Fits the anchor graph on `x`, then repeats for each outer epoch: train the
/// encoder, refit the graph on `(Z, Z_t)` starting from `Z_t`, pull the
/// anchors back to the input space and grow `k`.
///
/// Snapshot 0 describes the initial graph under the untrained encoder; snapshot
/// `t` describes the graph produced by epoch `t` under the encoder trained in
/// that epoch. With `outer_epochs = 0` the encoder is trained once on the
/// initial graph.
pub fn run_anchorgae(x: &DenseMatrix, cfg: &AnchorGaeConfig) -> Result<AnchorGaeOutput> {
    let n = x.rows();
    cfg.validate(n)?;
    ensure_finite(x, "input features")?;
    let m = cfg.n_anchors;
    let schedule = SparsitySchedule::new(n, m, cfg.n_clusters, cfg.k0, cfg.outer_epochs, cfg.smallest_cluster)?;
    let weighting = cfg.mode.weighting();
    let rng = SeededRng::new(cfg.seed);

    let anchors0 = init_anchors(x, m, &mut rng.fork(0))?;
    let mut k = schedule.k0;
    let mut graph = fit_anchor_graph(x, &anchors0, &ConnectivitySolveConfig::new(k).with_weighting(weighting))?;

    let mut dims = vec![x.cols()];
    dims.extend(&cfg.layers);
    let mut params = init_params(&dims, &mut rng.fork(1))?;

    let mut diagnostics = CollapseDiagnostics::default();
    let mut history = Vec::new();
    let mut graph_history = Vec::new();
    let mut record = |graph: &AnchorGraph, params: &EncoderParams| -> Result<(DenseMatrix, DenseMatrix)> {
        let z = encode_samples(graph, x, params)?;
        ensure_finite(&z, "sample embedding")?;
        let z_t = encode_anchors(graph, graph.anchors(), params)?;
        ensure_finite(&z_t, "anchor embedding")?;
        let q = decode(&z, &z_t)?;
        diagnostics.snapshots.push(measure_collapse(graph, &q)?);
        if cfg.keep_history {
            history.push(z.clone());
            graph_history.push(graph.clone());
        }
        Ok((z, z_t))
    };
    let (mut z, mut z_t) = record(&graph, &params)?;

    let mut loss_traces = Vec::new();
    let rounds = cfg.outer_epochs.max(1);
    for epoch in 0..rounds {
        let (trained, trace) = train(&graph, x, graph.anchors(), &params, &cfg.train)?;
        params = trained;
        loss_traces.push(trace);
        if cfg.outer_epochs == 0 {
            z = encode_samples(&graph, x, &params)?;
            ensure_finite(&z, "sample embedding")?;
            z_t = encode_anchors(&graph, graph.anchors(), &params)?;
            ensure_finite(&z_t, "anchor embedding")?;
            break;
        }

        if cfg.mode.refits() {
            let embedded = encode_samples(&graph, x, &params)?;
            ensure_finite(&embedded, "sample embedding before refit")?;
            let embedded_anchors = encode_anchors(&graph, graph.anchors(), &params)?;
            ensure_finite(&embedded_anchors, "anchor embedding before refit")?;
            let refit = fit_anchor_graph(
                &embedded,
                &embedded_anchors,
                &ConnectivitySolveConfig::new(k).with_weighting(weighting),
            )?;
            let anchors = pullback_anchors(x, &refit)?;
            ensure_finite(&anchors, "anchor pullback")?;
            graph = refit.with_anchors(anchors);
            if cfg.mode.grows_k() {
                k = schedule.step(k);
            }
        }
        log::info!("outer epoch {}/{} done, k = {}", epoch + 1, cfg.outer_epochs, graph.k());
        (z, z_t) = record(&graph, &params)?;
    }

    Ok(AnchorGaeOutput {
        embedding: z,
        anchor_embedding: z_t,
        graph,
        params,
        schedule,
        diagnostics,
        loss_traces,
        history,
        graph_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor_graph::KSparseMatrix;

    fn graph_from(rows: &[&[f64]], k: usize) -> AnchorGraph {
        let dense = DenseMatrix::from_rows(rows).unwrap();
        AnchorGraph::new(KSparseMatrix::from_dense(&dense, k).unwrap(), DenseMatrix::zeros(dense.cols(), 1)).unwrap()
    }

    #[test]
    fn schedule_hand_example() {
        let s = SparsitySchedule::new(10_000, 500, 10, 3, 5, Some(1000)).unwrap();
        assert_eq!((s.k_max, s.delta_k), (50, 9));
        assert_eq!(s.path(), vec![3, 12, 21, 30, 39, 48]);
    }

    #[test]
    fn schedule_defaults_and_clamps() {
        let s = SparsitySchedule::new(2000, 200, 4, 3, 5, None).unwrap();
        assert_eq!(s.smallest_cluster, 500);
        let tight = SparsitySchedule::new(100, 10, 1, 3, 2, None).unwrap();
        assert_eq!(tight.k_max, 10);
        assert_eq!(tight.step(8), 9);
        assert_eq!(tight.step(9), 9);
        let flat = SparsitySchedule::new(100, 10, 50, 3, 5, None).unwrap();
        assert_eq!(flat.delta_k, 0);
        assert_eq!(flat.step(3), 3);
        assert!(SparsitySchedule::new(100, 3, 2, 3, 5, None).is_err());
    }

    #[test]
    fn pullback_identity_and_midpoint() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, -4.0], [0.5, 0.0]]).unwrap();
        let g = AnchorGraph::new(KSparseMatrix::identity(3), DenseMatrix::zeros(3, 1)).unwrap();
        assert_eq!(pullback_anchors(&x, &g).unwrap(), x);

        let g = graph_from(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]], 1);
        let c = pullback_anchors(&x, &g).unwrap();
        assert_eq!(c.row(0), &[2.0, -1.0]);
        assert_eq!(c.row(1), &[0.5, 0.0]);
    }

    #[test]
    fn collapse_measures() {
        let g = graph_from(
            &[
                &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0],
                &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0],
                &[0.0, 0.0, 0.5, 0.5, 0.0, 0.0],
                &[0.0, 0.0, 0.0, 0.0, 0.5, 0.5],
            ],
            2,
        );
        let q = g.b().to_dense();
        let s = measure_collapse(&g, &q).unwrap();
        assert_eq!(s.uniformity_gap, 0.0);
        assert_eq!(s.reconstruction_gap, 0.0);
        assert_eq!(s.component_count, 3);

        let g = graph_from(&[&[0.9, 0.1, 0.0], &[0.0, 0.5, 0.5]], 2);
        let q = DenseMatrix::from_rows(&[[0.8, 0.1, 0.1], [0.0, 0.5, 0.5]]).unwrap();
        let s = measure_collapse(&g, &q).unwrap();
        assert!((s.uniformity_gap - 0.4).abs() < 1e-12);
        assert!((s.mean_uniformity_gap - 0.2).abs() < 1e-12);
        assert!((s.reconstruction_gap - 0.1).abs() < 1e-12);
        assert_eq!(s.component_count, 1);
    }

    fn two_groups(rng: &mut SeededRng) -> DenseMatrix {
        DenseMatrix::from_fn(60, 3, |i, _| if i < 30 { 0.0 } else { 5.0 } + 0.3 * rng.normal())
    }

    fn small_config(mode: LoopMode, outer: usize) -> AnchorGaeConfig {
        AnchorGaeConfig {
            n_clusters: 2,
            n_anchors: 12,
            layers: vec![8, 4],
            outer_epochs: outer,
            train: TrainConfig {
                inner_epochs: 15,
                ..TrainConfig::default()
            },
            mode,
            seed: 4,
            keep_history: true,
            ..AnchorGaeConfig::default()
        }
    }

    #[test]
    fn loop_shapes_and_k_path() {
        let x = two_groups(&mut SeededRng::new(1));
        let out = run_anchorgae(&x, &small_config(LoopMode::Full, 3)).unwrap();
        assert_eq!(out.embedding.shape(), (60, 4));
        assert_eq!(out.anchor_embedding.shape(), (12, 4));
        assert_eq!(out.diagnostics.snapshots.len(), 4);
        assert_eq!(out.history.len(), 4);
        assert_eq!(out.graph_history.len(), 4);
        assert_eq!(out.loss_traces.len(), 3);
        let ks: Vec<usize> = out.diagnostics.snapshots.iter().map(|s| s.k).collect();
        assert!(ks.windows(2).all(|w| w[0] <= w[1]));
        assert!(ks.iter().all(|&k| k < 12));
    }

    #[test]
    fn fixed_modes_hold_k() {
        let x = two_groups(&mut SeededRng::new(2));
        for mode in [LoopMode::FixedK, LoopMode::FixedB] {
            let out = run_anchorgae(&x, &small_config(mode, 2)).unwrap();
            assert!(out.diagnostics.snapshots.iter().all(|s| s.k == 3));
        }
        let out = run_anchorgae(&x, &small_config(LoopMode::Knn, 2)).unwrap();
        assert!(out.diagnostics.snapshots.iter().all(|s| s.uniformity_gap < 1e-12));
    }

    #[test]
    fn zero_outer_epochs_trains_once() {
        let x = two_groups(&mut SeededRng::new(3));
        let out = run_anchorgae(&x, &small_config(LoopMode::Full, 0)).unwrap();
        assert_eq!(out.diagnostics.snapshots.len(), 1);
        assert_eq!(out.loss_traces.len(), 1);
    }

    #[test]
    fn deterministic() {
        let x = two_groups(&mut SeededRng::new(5));
        let a = run_anchorgae(&x, &small_config(LoopMode::Full, 2)).unwrap();
        let b = run_anchorgae(&x, &small_config(LoopMode::Full, 2)).unwrap();
        assert_eq!(a.embedding, b.embedding);
        assert_eq!(a.diagnostics, b.diagnostics);
    }

    #[test]
    fn non_finite_input_is_named() {
        let mut x = two_groups(&mut SeededRng::new(6));
        x[(3, 1)] = f64::NAN;
        match run_anchorgae(&x, &small_config(LoopMode::Full, 1)) {
            Err(Error::NonFinite { stage }) => assert_eq!(stage, "input features"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
