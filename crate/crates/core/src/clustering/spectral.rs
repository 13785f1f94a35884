use super::{kmeans, ClusterAssignment};
use crate::anchor_graph::AnchorGraph;
use crate::error::{invalid, Result};
use crate::numerics::{sym_eig_topc, DenseMatrix, SeededRng};

/// Singular values below this fraction of the largest are treated as zero.
/// They come from square roots of Gram eigenvalues, which carry absolute
/// error near `ε λ_max`, so anything much below `√ε` is noise.
const RANK_TOL: f64 = 1e-7;
const LABEL_RESTARTS: usize = 10;

/// Co-clustering embedding of samples (`v`) and anchors (`u`).
#[derive(Clone, Debug)]
pub struct SpectralEmbedding {
    /// `n x c`, the leading left singular vectors of `B Δ^{-1/2}` times `√2/2`.
    pub v: DenseMatrix,
    /// `m x c`, the matching right singular vectors times `√2/2`.
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub assignment: ClusterAssignment,
}

/// `Bᵀ B` accumulated from the k-sparse rows in `O(n k²)`.
pub(crate) fn gram(g: &AnchorGraph) -> DenseMatrix {
    let m = g.n_anchors();
    let mut out = DenseMatrix::zeros(m, m);
    for i in 0..g.n_samples() {
        let (idx, val) = g.b().row(i);
        for (&a, &va) in idx.iter().zip(val) {
            for (&b, &vb) in idx.iter().zip(val) {
                out[(a, b)] += va * vb;
            }
        }
    }
    out
}

/// Spectral clustering on the bipartite graph through the SVD of
/// `B̂ = B Δ^{-1/2}`.
///
/// The right singular vectors come from the `c` leading eigenpairs of the
/// `m x m` matrix `B̂ᵀ B̂`; the left ones are `B̂ u / σ`. Labels are k-means on
/// the ℓ2-normalized rows of `v`. The `√2/2` scale does not change the labels.
pub fn spectral_via_svd(g: &AnchorGraph, c: usize, rng: &mut SeededRng) -> Result<SpectralEmbedding> {
    let m = g.n_anchors();
    let n = g.n_samples();
    if c == 0 || c > m {
        return Err(invalid(format!("cannot extract {c} singular vectors from {m} anchors")));
    }
    if c > n {
        return Err(invalid(format!("cannot form {c} clusters from {n} samples")));
    }
    let inv_sqrt: Vec<f64> = g.inverse_degrees()?.into_iter().map(f64::sqrt).collect();

    let mut b_hat_gram = gram(g);
    for a in 0..m {
        for b in 0..m {
            b_hat_gram[(a, b)] *= inv_sqrt[a] * inv_sqrt[b];
        }
    }
    let eig = sym_eig_topc(&b_hat_gram, c)?;
    let sigma: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let top = sigma[0].max(f64::MIN_POSITIVE);

    let mut right = eig.vectors;
    let mut scaled = right.clone();
    scaled.scale_rows_in_place(&inv_sqrt);
    let mut left = g.b().mul_dense(&scaled)?;
    let mut deficient = 0;
    for (col, &s) in sigma.iter().enumerate() {
        let keep = s > RANK_TOL * top;
        if !keep {
            deficient += 1;
        }
        for i in 0..n {
            left[(i, col)] = if keep { left[(i, col)] / s } else { 0.0 };
        }
        if !keep {
            for j in 0..m {
                right[(j, col)] = 0.0;
            }
        }
    }
    if deficient > 0 {
        log::warn!("B Δ^-1/2 has rank below {c}; {deficient} singular vectors padded with zeros");
    }

    let half_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    left.scale_in_place(half_sqrt2);
    right.scale_in_place(half_sqrt2);

    let assignment = label_rows(&left, c, rng)?;
    Ok(SpectralEmbedding {
        v: left,
        u: right,
        singular_values: sigma,
        assignment,
    })
}

/// k-means on row-normalized `v`. Zero rows go to the cluster whose mean of
/// un-normalized rows is closest.
fn label_rows(v: &DenseMatrix, c: usize, rng: &mut SeededRng) -> Result<ClusterAssignment> {
    let norms: Vec<f64> = v.row_sq_norms().into_iter().map(f64::sqrt).collect();
    let nonzero: Vec<usize> = (0..v.rows()).filter(|&i| norms[i] > 1e-12).collect();
    if nonzero.len() < c {
        return Ok(kmeans(v, c, rng, LABEL_RESTARTS)?.assignment);
    }
    let mut unit = v.select_rows(&nonzero);
    let inv: Vec<f64> = nonzero.iter().map(|&i| 1.0 / norms[i]).collect();
    unit.scale_rows_in_place(&inv);
    let fit = kmeans(&unit, c, rng, LABEL_RESTARTS)?;

    let mut labels = vec![usize::MAX; v.rows()];
    for (&i, &l) in nonzero.iter().zip(&fit.assignment.labels) {
        labels[i] = l;
    }
    if nonzero.len() < v.rows() {
        let mut means = DenseMatrix::zeros(c, v.cols());
        let mut counts = vec![0usize; c];
        for &i in &nonzero {
            let l = labels[i];
            counts[l] += 1;
            means.row_mut(l).iter_mut().zip(v.row(i)).for_each(|(a, b)| *a += b);
        }
        for l in 0..c {
            if counts[l] > 0 {
                let s = 1.0 / counts[l] as f64;
                means.row_mut(l).iter_mut().for_each(|a| *a *= s);
            }
        }
        for label in labels.iter_mut().filter(|l| **l == usize::MAX) {
            // zero row: nearest mean is the one with the smallest norm
            *label = (0..c)
                .min_by(|&a, &b| {
                    let na: f64 = means.row(a).iter().map(|x| x * x).sum();
                    let nb: f64 = means.row(b).iter().map(|x| x * x).sum();
                    na.total_cmp(&nb).then(a.cmp(&b))
                })
                .expect("c > 0");
        }
    }
    Ok(ClusterAssignment {
        labels,
        n_clusters: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor_graph::KSparseMatrix;

    #[test]
    fn block_diagonal_groups_separate() {
        // 6 samples, 4 anchors, two disconnected groups
        let dense = DenseMatrix::from_rows(&[
            [0.7, 0.3, 0.0, 0.0],
            [0.4, 0.6, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.9, 0.1],
            [0.0, 0.0, 0.2, 0.8],
            [0.0, 0.0, 0.5, 0.5],
        ])
        .unwrap();
        let g = AnchorGraph::new(KSparseMatrix::from_dense(&dense, 2).unwrap(), DenseMatrix::zeros(4, 1)).unwrap();
        let s = spectral_via_svd(&g, 2, &mut SeededRng::new(0)).unwrap();
        let l = &s.assignment.labels;
        assert!(l[0] == l[1] && l[1] == l[2]);
        assert!(l[3] == l[4] && l[4] == l[5]);
        assert_ne!(l[0], l[3]);
        assert!((s.singular_values[0] - 1.0).abs() < 1e-10);
        assert!((s.singular_values[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rank_deficiency_is_padded() {
        // every sample on one anchor pair: rank of B Δ^{-1/2} is at most 2
        let dense = DenseMatrix::from_rows(&[
            [0.5, 0.5, 0.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0],
        ])
        .unwrap();
        let g = AnchorGraph::new(KSparseMatrix::from_dense(&dense, 2).unwrap(), DenseMatrix::zeros(3, 1)).unwrap();
        let s = spectral_via_svd(&g, 3, &mut SeededRng::new(1)).unwrap();
        assert!(s.singular_values[2] < 1e-7, "{:?}", s.singular_values);
        assert!(s.v.column(2).iter().all(|&x| x == 0.0));
        assert_eq!(s.assignment.labels.len(), 4);
    }

    #[test]
    fn too_many_clusters() {
        let g = AnchorGraph::new(KSparseMatrix::identity(3), DenseMatrix::zeros(3, 1)).unwrap();
        assert!(spectral_via_svd(&g, 4, &mut SeededRng::new(0)).is_err());
    }
}
