use rayon::prelude::*;

use crate::anchor_graph::{AnchorGraph, KSparseMatrix};
use crate::error::{invalid, Error, Result};
use crate::numerics::{pairwise_sq_dist, DenseMatrix};

/// Floor applied to `q` before taking its logarithm.
pub const Q_FLOOR: f64 = 1e-300;

/// Softmax reconstruction of the connectivity distributions together with the
/// quantities needed to evaluate the loss in the log domain.
#[derive(Clone, Debug)]
pub(crate) struct Reconstruction {
    pub dists: DenseMatrix,
    /// `log Σ_l exp(−d_il)` per sample.
    pub log_norm: Vec<f64>,
    pub q: DenseMatrix,
}

pub(crate) fn reconstruct(z: &DenseMatrix, z_t: &DenseMatrix) -> Result<Reconstruction> {
    let dists = pairwise_sq_dist(z, z_t).map_err(|e| match e {
        Error::DimensionMismatch { left, right, .. } => Error::DimensionMismatch {
            op: "decode",
            left,
            right,
        },
        other => other,
    })?;
    let m = dists.cols();
    if m == 0 {
        return Err(invalid("decode needs at least one anchor"));
    }
    let mut q = DenseMatrix::zeros(dists.rows(), m);
    let log_norm: Vec<f64> = q
        .as_mut_slice()
        .par_chunks_mut(m)
        .zip(dists.as_slice().par_chunks(m))
        .map(|(q_row, d_row)| {
            let shift = d_row.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let mut total = 0.0;
            for (qv, &d) in q_row.iter_mut().zip(d_row) {
                *qv = (shift - d).exp();
                total += *qv;
            }
            q_row.iter_mut().for_each(|v| *v /= total);
            total.ln() - shift
        })
        .collect();
    Ok(Reconstruction { dists, log_norm, q })
}

/// `q(u_j|v_i) = exp(−‖z_i − t_j‖²) / Σ_l exp(−‖z_i − t_l‖²)`.
pub fn decode(z: &DenseMatrix, z_t: &DenseMatrix) -> Result<DenseMatrix> {
    reconstruct(z, z_t).map(|r| r.q)
}

/// Cross-entropy value plus a count of `q` entries that had to be floored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub clamped: usize,
}

/// `L = Σ_i Σ_j p(u_j|v_i) log(1 / q(u_j|v_i))` over the support of `p`.
pub fn loss(p: &AnchorGraph, q: &DenseMatrix) -> Result<LossValue> {
    let b = p.b();
    if q.shape() != (b.rows(), b.cols()) {
        return Err(Error::DimensionMismatch {
            op: "loss",
            left: (b.rows(), b.cols()),
            right: q.shape(),
        });
    }
    let mut value = 0.0;
    let mut clamped = 0;
    for i in 0..b.rows() {
        let (idx, val) = b.row(i);
        for (&j, &pv) in idx.iter().zip(val) {
            if pv == 0.0 {
                continue;
            }
            let mut qv = q[(i, j)];
            if qv < Q_FLOOR {
                qv = Q_FLOOR;
                clamped += 1;
            }
            value -= pv * qv.ln();
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} reconstruction probabilities underflowed and were clamped");
    }
    Ok(LossValue { value, clamped })
}

/// Log-domain loss: `−log q_ij = d_ij + log_norm_i`, which cannot underflow.
pub(crate) fn loss_from_reconstruction(b: &KSparseMatrix, r: &Reconstruction) -> f64 {
    let per_row: Vec<f64> = (0..b.rows())
        .into_par_iter()
        .map(|i| {
            let (idx, val) = b.row(i);
            idx.iter()
                .zip(val)
                .filter(|(_, &p)| p != 0.0)
                .map(|(&j, &p)| p * (r.dists[(i, j)] + r.log_norm[i]))
                .sum::<f64>()
        })
        .collect();
    per_row.iter().sum()
}

/// `∂L/∂d_ij = p_ij − q_ij Σ_l p_il` as a dense n×m matrix.
pub(crate) fn distance_gradient(b: &KSparseMatrix, q: &DenseMatrix) -> DenseMatrix {
    let m = q.cols();
    let mut grad = q.clone();
    grad.as_mut_slice()
        .par_chunks_mut(m)
        .enumerate()
        .for_each(|(i, row)| {
            let (idx, val) = b.row(i);
            let mass: f64 = val.iter().sum();
            row.iter_mut().for_each(|v| *v *= -mass);
            for (&j, &p) in idx.iter().zip(val) {
                row[j] += p;
            }
        });
    grad
}

/// Chain rule through `d_ij = ‖z_i − t_j‖²` given `G = ∂L/∂d`.
pub(crate) fn embedding_gradients(
    grad_d: &DenseMatrix,
    z: &DenseMatrix,
    z_t: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    // ∂z_i = 2 (r_i z_i − Σ_j G_ij t_j),  ∂t_j = 2 (c_j t_j − Σ_i G_ij z_i)
    let row_sums = grad_d.row_sums();
    let mut col_sums = vec![0.0; grad_d.cols()];
    for r in grad_d.row_iter() {
        col_sums.iter_mut().zip(r).for_each(|(c, v)| *c += v);
    }
    let mut dz = grad_d.matmul(z_t)?;
    for (i, row) in (0..dz.rows()).zip(row_sums) {
        let zi = z.row(i);
        dz.row_mut(i)
            .iter_mut()
            .zip(zi)
            .for_each(|(g, &zv)| *g = 2.0 * (row * zv - *g));
    }
    let mut dt = grad_d.t_matmul(z)?;
    for (j, col) in (0..dt.rows()).zip(col_sums) {
        let tj = z_t.row(j);
        dt.row_mut(j)
            .iter_mut()
            .zip(tj)
            .for_each(|(g, &tv)| *g = 2.0 * (col * tv - *g));
    }
    Ok((dz, dt))
}
