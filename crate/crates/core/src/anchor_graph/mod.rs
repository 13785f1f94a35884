//! Anchors and the k-sparse bipartite transition matrix between samples and
//! anchors.
//!
//! Each sample `v_i` carries a connectivity distribution `p(·|v_i)` over the
//! `m` anchors. Minimizing the expected sample-to-anchor distance plus a
//! quadratic pull towards the uniform distribution has a closed-form solution
//! with exactly `k` nonzeros when the regularization weight is tied to the
//! `(k+1)`-th smallest distance:
//!
//! ```text
//! p(u_j|v_i) = (d_{k+1} − d_j)_+ / Σ_{l≤k} (d_{k+1} − d_l)
//! ```
//!
//! Given the distributions, each anchor moves to the `p`-weighted mean of the
//! samples. [`fit_anchor_graph`] alternates the two steps.
//!
//! The stored rows form `B` (n×m, row-stochastic). With the anchor degrees
//! `Δ = diag(Bᵀ1)`, the implied sample graph is `A = B Δ⁻¹ Bᵀ` and the anchor
//! graph is `A_t = Δ⁻¹ Bᵀ B`. Both are row-stochastic and neither is formed
//! outside of [`dense_adjacency`].

mod sparse;

use rayon::prelude::*;

pub use sparse::KSparseMatrix;

use crate::error::{invalid, Error, Result};
use crate::numerics::{pairwise_sq_dist, DenseMatrix, SeededRng};

/// Anchors whose degree falls below this are treated as disconnected.
pub const MIN_DEGREE: f64 = 1e-12;

const ROW_SUM_TOL: f64 = 1e-10;
const DIST_BLOCK: usize = 1024;

/// How the `k` retained edges of a row are weighted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EdgeWeighting {
    /// Closed-form distance-dependent weights.
    #[default]
    Generative,
    /// Plain `1/k` on the `k` nearest anchors (a kNN graph).
    Uniform,
}

/// Settings for the alternating anchor/connectivity fit.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivitySolveConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative objective change drops below this.
    pub tol: f64,
    pub weighting: EdgeWeighting,
}

impl ConnectivitySolveConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters: 30,
            tol: 1e-6,
            weighting: EdgeWeighting::Generative,
        }
    }

    pub fn with_weighting(mut self, weighting: EdgeWeighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.k == 0 || self.k >= m {
            return Err(invalid(format!("sparsity k = {} must satisfy 1 <= k < m = {m}", self.k)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// The fitted bipartite graph: `B`, the anchor degrees `Δ`, and the anchors in
/// the feature space `B` was fitted in.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorGraph {
    b: KSparseMatrix,
    degrees: Vec<f64>,
    anchors: DenseMatrix,
}

impl AnchorGraph {
    /// Wraps a row-stochastic `b`. Degrees are recomputed from its columns.
    pub fn new(b: KSparseMatrix, anchors: DenseMatrix) -> Result<Self> {
        if anchors.rows() != b.cols() {
            return Err(invalid(format!(
                "B has {} anchor columns but {} anchors were given",
                b.cols(),
                anchors.rows()
            )));
        }
        if b.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("entries of B must lie in [0, 1]"));
        }
        for (i, s) in b.row_sums().into_iter().enumerate() {
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(invalid(format!("row {i} of B sums to {s}, not 1")));
            }
        }
        let degrees = b.column_sums();
        Ok(Self { b, degrees, anchors })
    }

    pub fn b(&self) -> &KSparseMatrix {
        &self.b
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn anchors(&self) -> &DenseMatrix {
        &self.anchors
    }

    pub fn n_samples(&self) -> usize {
        self.b.rows()
    }

    pub fn n_anchors(&self) -> usize {
        self.b.cols()
    }

    pub fn k(&self) -> usize {
        self.b.k()
    }

    /// `Δ⁻¹`, or an error naming the first disconnected anchor.
    pub fn inverse_degrees(&self) -> Result<Vec<f64>> {
        self.degrees
            .iter()
            .enumerate()
            .map(|(j, &d)| {
                if d < MIN_DEGREE {
                    Err(Error::ZeroDegreeAnchor { anchor: j })
                } else {
                    Ok(1.0 / d)
                }
            })
            .collect()
    }

    pub(crate) fn with_anchors(mut self, anchors: DenseMatrix) -> Self {
        debug_assert_eq!(anchors.rows(), self.n_anchors());
        self.anchors = anchors;
        self
    }
}

/// One k-sparse row of `B`, nearest anchor first.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn to_dense(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j] = v;
        }
        out
    }
}

fn check_row_input(dists: &[f64], k: usize) -> Result<()> {
    let m = dists.len();
    if k == 0 || k >= m {
        return Err(invalid(format!("sparsity k = {k} must satisfy 1 <= k < m = {m}")));
    }
    if let Some((j, d)) = dists.iter().enumerate().find(|(_, d)| !(d.is_finite() && **d >= 0.0)) {
        return Err(invalid(format!("distance {j} is {d}; distances must be finite and nonnegative")));
    }
    Ok(())
}

/// Indices of the `count` smallest distances, ascending, ties to the lower index.
fn nearest(dists: &[f64], count: usize) -> Vec<usize> {
    let cmp = |a: &usize, b: &usize| dists[*a].total_cmp(&dists[*b]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..dists.len()).collect();
    if count < idx.len() {
        idx.select_nth_unstable_by(count - 1, cmp);
        idx.truncate(count);
    }
    idx.sort_by(cmp);
    idx
}

/// Closed-form k-sparse connectivity distribution for one sample.
///
/// When the `k` nearest distances all equal the `(k+1)`-th the formula is
/// `0/0`; the row then falls back to `1/k` on those `k` anchors.
pub fn solve_connectivity_row(dists: &[f64], k: usize) -> Result<SparseRow> {
    check_row_input(dists, k)?;
    Ok(generative_row(dists, k).0)
}

/// Uniform `1/k` weights on the `k` nearest anchors.
pub fn uniform_knn_row(dists: &[f64], k: usize) -> Result<SparseRow> {
    check_row_input(dists, k)?;
    let indices = nearest(dists, k);
    Ok(SparseRow {
        indices,
        values: vec![1.0 / k as f64; k],
    })
}

/// Returns the row and the implied regularization weight
/// `γ = ½ Σ_{l≤k} (d_{k+1} − d_l)`.
fn generative_row(dists: &[f64], k: usize) -> (SparseRow, f64) {
    let near = nearest(dists, k + 1);
    let kth = dists[near[k]];
    let indices = near[..k].to_vec();
    let denom: f64 = indices.iter().map(|&j| kth - dists[j]).sum();
    let values = if denom > 0.0 {
        indices.iter().map(|&j| (kth - dists[j]) / denom).collect()
    } else {
        vec![1.0 / k as f64; k]
    };
    (SparseRow { indices, values }, 0.5 * denom)
}

/// `m` distinct rows of `x` drawn uniformly without replacement.
pub fn init_anchors(x: &DenseMatrix, m: usize, rng: &mut SeededRng) -> Result<DenseMatrix> {
    if m == 0 || m > x.rows() {
        return Err(invalid(format!(
            "cannot draw {m} anchors from {} samples",
            x.rows()
        )));
    }
    Ok(x.select_rows(&rng.sample_indices(x.rows(), m)))
}

/// Anchor `j` becomes the `B`-weighted mean of the mapped samples:
/// `c_j = Σ_i b_ij x_i / Σ_i b_ij`.
pub fn update_anchors(x_mapped: &DenseMatrix, g: &AnchorGraph) -> Result<DenseMatrix> {
    weighted_means(x_mapped, g.b(), g.degrees())
}

fn weighted_means(x: &DenseMatrix, b: &KSparseMatrix, degrees: &[f64]) -> Result<DenseMatrix> {
    if x.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            op: "update_anchors",
            left: (b.rows(), b.cols()),
            right: x.shape(),
        });
    }
    let inv: Vec<f64> = degrees
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            if d < MIN_DEGREE {
                Err(Error::ZeroDegreeAnchor { anchor: j })
            } else {
                Ok(1.0 / d)
            }
        })
        .collect::<Result<_>>()?;
    let mut sums = b.t_mul_dense(x)?;
    sums.scale_rows_in_place(&inv);
    Ok(sums)
}

/// Result of [`fit_anchor_graph_traced`].
#[derive(Clone, Debug)]
pub struct AnchorFit {
    pub graph: AnchorGraph,
    /// Objective value after each accepted iteration; non-increasing.
    pub objective: Vec<f64>,
    /// Anchors moved onto far-away samples after losing all their edges.
    pub reseeded: usize,
}

/// Alternating estimation of connectivity distributions and anchors.
pub fn fit_anchor_graph(
    x_mapped: &DenseMatrix,
    anchors0: &DenseMatrix,
    cfg: &ConnectivitySolveConfig,
) -> Result<AnchorGraph> {
    fit_anchor_graph_traced(x_mapped, anchors0, cfg).map(|fit| fit.graph)
}

/// [`fit_anchor_graph`] that also reports the objective after each iteration.
///
/// The tracked objective is
/// `Σ_i Σ_j p_ij ‖x_i − c_j‖² + γ_i Σ_j (p_ij − 1/m)²`, with `γ_i` the weight
/// that makes row `i` exactly k-sparse (zero for the uniform kNN weighting).
/// An iteration that would raise it is discarded and the fit stops.
pub fn fit_anchor_graph_traced(
    x_mapped: &DenseMatrix,
    anchors0: &DenseMatrix,
    cfg: &ConnectivitySolveConfig,
) -> Result<AnchorFit> {
    let m = anchors0.rows();
    if x_mapped.cols() != anchors0.cols() {
        return Err(Error::DimensionMismatch {
            op: "fit_anchor_graph",
            left: x_mapped.shape(),
            right: anchors0.shape(),
        });
    }
    cfg.validate(m)?;
    if !x_mapped.is_finite() || !anchors0.is_finite() {
        return Err(Error::NonFinite {
            stage: "anchor graph input".into(),
        });
    }

    let mut anchors = anchors0.clone();
    let mut objective: Vec<f64> = Vec::new();
    let mut accepted: Option<(KSparseMatrix, Vec<f64>, DenseMatrix)> = None;
    let mut reseeded = 0;

    for _ in 0..cfg.max_iters {
        let step = assign_with_reseed(x_mapped, &mut anchors, cfg)?;
        reseeded += step.reseeded;
        let degrees = step.b.column_sums();
        let next_anchors = weighted_means(x_mapped, &step.b, &degrees)?;
        let value = objective_value(x_mapped, &step.b, &next_anchors, &step.gammas);

        if let Some(&prev) = objective.last() {
            if value > prev + 1e-9 * prev.abs().max(1.0) {
                log::debug!("anchor fit stopped: objective rose from {prev} to {value}");
                break;
            }
        }
        objective.push(value);
        anchors = next_anchors.clone();
        accepted = Some((step.b, degrees, next_anchors));

        let n = objective.len();
        if n >= 2 {
            let prev = objective[n - 2];
            if (prev - value).abs() <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }

    let (b, degrees, anchors) = accepted.expect("first iteration is always accepted");
    Ok(AnchorFit {
        graph: AnchorGraph { b, degrees, anchors },
        objective,
        reseeded,
    })
}

struct AssignStep {
    b: KSparseMatrix,
    gammas: Vec<f64>,
    reseeded: usize,
}

/// Solves all rows against `anchors`, moving any anchor that ends up with no
/// edges onto the sample farthest from its nearest anchor and solving again.
fn assign_with_reseed(
    x: &DenseMatrix,
    anchors: &mut DenseMatrix,
    cfg: &ConnectivitySolveConfig,
) -> Result<AssignStep> {
    let m = anchors.rows();
    let mut reseeded = 0;
    for _ in 0..=m {
        let (b, gammas, mut nearest_dist) = assign_rows(x, anchors, cfg)?;
        let degrees = b.column_sums();
        let empty: Vec<usize> = (0..m).filter(|&j| degrees[j] < MIN_DEGREE).collect();
        if empty.is_empty() {
            return Ok(AssignStep { b, gammas, reseeded });
        }
        for &j in &empty {
            let far = nearest_dist
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best })
                .0;
            anchors.row_mut(j).copy_from_slice(x.row(far));
            let target = x.row(far);
            for (i, nd) in nearest_dist.iter_mut().enumerate() {
                let d: f64 = x.row(i).iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
                *nd = nd.min(d);
            }
            reseeded += 1;
        }
    }
    let degrees = assign_rows(x, anchors, cfg)?.0.column_sums();
    let anchor = degrees.iter().position(|&d| d < MIN_DEGREE).unwrap_or(0);
    Err(Error::ZeroDegreeAnchor { anchor })
}

/// Row solves in distance blocks so the full n×m distance matrix is never held.
/// Returns `B`, per-row `γ_i`, and each sample's distance to its nearest anchor.
fn assign_rows(
    x: &DenseMatrix,
    anchors: &DenseMatrix,
    cfg: &ConnectivitySolveConfig,
) -> Result<(KSparseMatrix, Vec<f64>, Vec<f64>)> {
    let n = x.rows();
    let m = anchors.rows();
    let k = cfg.k;
    let mut indices = Vec::with_capacity(n * k);
    let mut values = Vec::with_capacity(n * k);
    let mut gammas = Vec::with_capacity(n);
    let mut nearest_dist = Vec::with_capacity(n);

    let mut start = 0;
    while start < n {
        let end = (start + DIST_BLOCK).min(n);
        let block: Vec<usize> = (start..end).collect();
        let dists = pairwise_sq_dist(&x.select_rows(&block), anchors)?;
        let rows: Vec<(SparseRow, f64, f64)> = dists
            .as_slice()
            .par_chunks(m)
            .map(|d| {
                let (row, gamma) = match cfg.weighting {
                    EdgeWeighting::Generative => generative_row(d, k),
                    EdgeWeighting::Uniform => (
                        SparseRow {
                            indices: nearest(d, k),
                            values: vec![1.0 / k as f64; k],
                        },
                        0.0,
                    ),
                };
                let closest = d[row.indices[0]];
                (row, gamma, closest)
            })
            .collect();
        for (row, gamma, closest) in rows {
            indices.extend(row.indices);
            values.extend(row.values);
            gammas.push(gamma);
            nearest_dist.push(closest);
        }
        start = end;
    }
    let b = KSparseMatrix::new(n, m, k, indices, values)?;
    Ok((b, gammas, nearest_dist))
}

fn objective_value(x: &DenseMatrix, b: &KSparseMatrix, anchors: &DenseMatrix, gammas: &[f64]) -> f64 {
    let m = anchors.rows() as f64;
    let per_row: Vec<f64> = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let (idx, val) = b.row(i);
            let xi = x.row(i);
            let mut expected = 0.0;
            let mut sq = 0.0;
            for (&j, &p) in idx.iter().zip(val) {
                let d: f64 = xi.iter().zip(anchors.row(j)).map(|(a, c)| (a - c) * (a - c)).sum();
                expected += p * d;
                sq += p * p;
            }
            // Σ_j (p_j − 1/m)² = Σ_j p_j² − 1/m on the simplex
            expected + gammas[i] * (sq - 1.0 / m)
        })
        .collect();
    per_row.iter().sum()
}

/// `p(v_i|u_j) = b_ij / Δ_j` as a dense m×n matrix.
pub fn normalize_anchor_side(g: &AnchorGraph) -> Result<DenseMatrix> {
    let inv = g.inverse_degrees()?;
    let mut out = DenseMatrix::zeros(g.n_anchors(), g.n_samples());
    for i in 0..g.n_samples() {
        let (idx, val) = g.b().row(i);
        for (&j, &v) in idx.iter().zip(val) {
            out[(j, i)] += v * inv[j];
        }
    }
    Ok(out)
}

/// Dense `A = B Δ⁻¹ Bᵀ` (n×n) and `A_t = Δ⁻¹ Bᵀ B` (m×m).
///
/// Quadratic in `n`; meant for reference checks and small benchmarks only.
pub fn dense_adjacency(g: &AnchorGraph) -> Result<(DenseMatrix, DenseMatrix)> {
    let inv = g.inverse_degrees()?;
    let b = g.b().to_dense();
    let mut b_scaled = b.clone();
    // B Δ^{-1}: scale columns
    for i in 0..b_scaled.rows() {
        for (v, s) in b_scaled.row_mut(i).iter_mut().zip(&inv) {
            *v *= s;
        }
    }
    let a = b_scaled.matmul_t(&b)?;
    let mut a_t = b.t_matmul(&b)?;
    a_t.scale_rows_in_place(&inv);
    Ok((a, a_t))
}
