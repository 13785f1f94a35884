use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::numerics::DenseMatrix;

/// Rows per partial sum in [`KSparseMatrix::t_mul_dense`]. Fixed so the
/// reduction order never depends on the thread count.
const REDUCE_BLOCK: usize = 2048;

/// Sparse matrix storing exactly `k` entries per row.
///
/// Entries of a row are kept in the order they were produced (for fitted
/// graphs, nearest anchor first). A stored entry may hold the value zero.
#[derive(Clone, Debug, PartialEq)]
pub struct KSparseMatrix {
    rows: usize,
    cols: usize,
    k: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl KSparseMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        k: usize,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indices.len() != rows * k || values.len() != rows * k {
            return Err(invalid(format!(
                "expected {} stored entries for {rows} rows with k = {k}, got {} indices and {} values",
                rows * k,
                indices.len(),
                values.len()
            )));
        }
        for (i, row) in indices.chunks(k.max(1)).enumerate().take(rows) {
            for (a, &j) in row.iter().enumerate() {
                if j >= cols {
                    return Err(invalid(format!("row {i}: column {j} out of range ({cols})")));
                }
                if row[..a].contains(&j) {
                    return Err(invalid(format!("row {i}: column {j} stored twice")));
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            k,
            indices,
            values,
        })
    }

    /// Keeps the `k` largest entries of each row (ties to the lower column).
    /// Fails if a row has more than `k` nonzero entries.
    pub fn from_dense(dense: &DenseMatrix, k: usize) -> Result<Self> {
        if k == 0 || k > dense.cols() {
            return Err(invalid(format!(
                "k = {k} is not valid for {} columns",
                dense.cols()
            )));
        }
        let mut indices = Vec::with_capacity(dense.rows() * k);
        let mut values = Vec::with_capacity(dense.rows() * k);
        for (i, row) in dense.row_iter().enumerate() {
            let nnz = row.iter().filter(|v| **v != 0.0).count();
            if nnz > k {
                return Err(invalid(format!("row {i} has {nnz} nonzeros, more than k = {k}")));
            }
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            for &j in &order[..k] {
                indices.push(j);
                values.push(row[j]);
            }
        }
        Self::new(dense.rows(), dense.cols(), k, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            k: 1,
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Stored entries per row.
    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = i * self.k..(i + 1) * self.k;
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().position(|&c| c == j).map_or(0.0, |p| val[p])
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j] += v;
        }
        out
    }

    /// Number of strictly positive stored entries.
    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.0).count()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                out[(i, j)] += v;
            }
        }
        out
    }

    /// `self * x`, `(rows x cols) * (cols x d)`.
    pub fn mul_dense(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "sparse mul",
                left: (self.rows, self.cols),
                right: x.shape(),
            });
        }
        let d = x.cols();
        let mut out = DenseMatrix::zeros(self.rows, d);
        if d == 0 {
            return Ok(out);
        }
        let k = self.k;
        out.as_mut_slice()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(i, row)| {
                let base = i * k;
                for e in base..base + k {
                    let v = self.values[e];
                    if v != 0.0 {
                        let src = x.row(self.indices[e]);
                        row.iter_mut().zip(src).for_each(|(o, s)| *o += v * s);
                    }
                }
            });
        Ok(out)
    }

    /// `selfᵀ * x`, `(cols x rows) * (rows x d)`.
    pub fn t_mul_dense(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "sparse transpose mul",
                left: (self.cols, self.rows),
                right: x.shape(),
            });
        }
        let d = x.cols();
        let m = self.cols;
        let k = self.k;
        let scatter = |start: usize, end: usize| {
            let mut acc = vec![0.0; m * d];
            for i in start..end {
                let src = x.row(i);
                for e in i * k..(i + 1) * k {
                    let v = self.values[e];
                    if v != 0.0 {
                        let dst = &mut acc[self.indices[e] * d..(self.indices[e] + 1) * d];
                        dst.iter_mut().zip(src).for_each(|(o, s)| *o += v * s);
                    }
                }
            }
            acc
        };
        let blocks = self.rows.div_ceil(REDUCE_BLOCK);
        let partials: Vec<Vec<f64>> = (0..blocks)
            .into_par_iter()
            .map(|b| scatter(b * REDUCE_BLOCK, ((b + 1) * REDUCE_BLOCK).min(self.rows)))
            .collect();
        let mut total = vec![0.0; m * d];
        for p in &partials {
            total.iter_mut().zip(p).for_each(|(t, v)| *t += v);
        }
        DenseMatrix::from_vec(m, d, total)
    }
}
