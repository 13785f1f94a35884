use std::fmt;
use std::ops::{Index, IndexMut};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Row blocks handed to each parallel `dgemm` call. Fixed so that results do
/// not depend on the size of the thread pool.
const ROW_BLOCK: usize = 256;

/// Expanded distances below this fraction of `‖a‖² + ‖b‖²` are recomputed
/// from coordinate differences.
const CANCELLATION_GUARD: f64 = 1e-6;

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "buffer of length {} cannot back a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. All rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(invalid(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Copies the listed rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// Multiplies row `i` by `s[i]`.
    pub fn scale_rows_in_place(&mut self, s: &[f64]) {
        debug_assert_eq!(s.len(), self.rows);
        let cols = self.cols;
        if cols == 0 {
            return;
        }
        self.data
            .chunks_exact_mut(cols)
            .zip(s)
            .for_each(|(row, &f)| row.iter_mut().for_each(|v| *v *= f));
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        self.check_same_shape("add", other)?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape("sub", other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise absolute difference. Shapes must agree.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> Result<f64> {
        self.check_same_shape("max_abs_diff", other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.row_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn row_sq_norms(&self) -> Vec<f64> {
        self.row_iter().map(|r| r.iter().map(|v| v * v).sum()).collect()
    }

    /// Column-wise `(min, max)` pairs.
    pub fn column_ranges(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); self.cols];
        for r in self.row_iter() {
            for (slot, &v) in out.iter_mut().zip(r) {
                slot.0 = slot.0.min(v);
                slot.1 = slot.1.max(v);
            }
        }
        out
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        matmul(self, other)
    }

    /// `selfᵀ * other` without materializing the transpose.
    pub fn t_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                op: "t_matmul",
                left: (self.cols, self.rows),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.cols, self.rows, other.cols);
        let mut out = DenseMatrix::zeros(m, n);
        if m == 0 || n == 0 || k == 0 {
            return Ok(out);
        }
        // SAFETY: strides describe the transposed view of `self`, which is in bounds.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                self.data.as_ptr(),
                1,
                self.cols as isize,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        Ok(out)
    }

    /// `self * otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "matmul_t",
                left: self.shape(),
                right: (other.cols, other.rows),
            });
        }
        gemm_blocked(self, other, other.rows, 1, other.cols as isize)
    }

    fn check_same_shape(&self, op: &'static str, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Standard matrix product `a * b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    gemm_blocked(a, b, b.cols, b.cols as isize, 1)
}

/// `a * op(b)` where `op(b)` is `a.cols x n` with the given strides, split into
/// fixed row blocks of `a` that run in parallel.
fn gemm_blocked(
    a: &DenseMatrix,
    b: &DenseMatrix,
    n: usize,
    rsb: isize,
    csb: isize,
) -> Result<DenseMatrix> {
    let (rows, k) = (a.rows, a.cols);
    let mut out = DenseMatrix::zeros(rows, n);
    if rows == 0 || n == 0 || k == 0 {
        return Ok(out);
    }
    let b_ptr = b.data.as_ptr() as usize;
    out.data
        .par_chunks_mut(ROW_BLOCK * n)
        .zip(a.data.par_chunks(ROW_BLOCK * k))
        .for_each(|(c_block, a_block)| {
            let m = a_block.len() / k;
            // SAFETY: each block reads disjoint rows of `a`, all of `b`, and
            // writes only its own rows of the output.
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    k,
                    n,
                    1.0,
                    a_block.as_ptr(),
                    k as isize,
                    1,
                    b_ptr as *const f64,
                    rsb,
                    csb,
                    0.0,
                    c_block.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        });
    Ok(out)
}

/// Squared Euclidean distances between the rows of `a` (n×d) and `b` (m×d).
///
/// Uses the `‖a‖² + ‖b‖² − 2⟨a,b⟩` expansion for speed. Entries small enough
/// for that expansion to cancel badly are recomputed from coordinate
/// differences, so the result is nonnegative and exactly zero for equal rows.
pub fn pairwise_sq_dist(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(Error::DimensionMismatch {
            op: "pairwise_sq_dist",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = a.matmul_t(b)?;
    let na = a.row_sq_norms();
    let nb = b.row_sq_norms();
    let m = b.rows;
    if m == 0 {
        return Ok(out);
    }
    out.data
        .par_chunks_mut(m)
        .zip(na.par_iter())
        .enumerate()
        .for_each(|(i, (row, &ai))| {
            for (j, (v, &bj)) in row.iter_mut().zip(&nb).enumerate() {
                let d = ai + bj - 2.0 * *v;
                // close pairs lose most digits to cancellation; redo them directly
                *v = if d <= CANCELLATION_GUARD * (ai + bj) {
                    a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum()
                } else {
                    d
                };
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn random(rows: usize, cols: usize, rng: &mut SeededRng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.uniform_range(-1.0, 1.0))
    }

    fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut c = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for l in 0..a.cols() {
                    s += a[(i, l)] * b[(l, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    #[test]
    fn identity_times_matrix() {
        let m = DenseMatrix::from_rows(&[[1.5, -2.0], [0.25, 4.0]]).unwrap();
        let out = matmul(&DenseMatrix::identity(2), &m).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn hand_product() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = SeededRng::new(11);
        let a = random(5, 7, &mut rng);
        let b = random(7, 3, &mut rng);
        let diff = matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)).unwrap();
        assert!(diff < 1e-12, "{diff}");

        // large enough to span several parallel row blocks
        let a = random(600, 9, &mut rng);
        let b = random(9, 5, &mut rng);
        let diff = matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)).unwrap();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn transposed_products() {
        let mut rng = SeededRng::new(3);
        let a = random(6, 4, &mut rng);
        let b = random(6, 5, &mut rng);
        let c = random(3, 4, &mut rng);
        let tn = a.t_matmul(&b).unwrap();
        assert!(tn.max_abs_diff(&naive_matmul(&a.transpose(), &b)).unwrap() < 1e-12);
        let nt = a.matmul_t(&c).unwrap();
        assert!(nt.max_abs_diff(&naive_matmul(&a, &c.transpose())).unwrap() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_names_shapes() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        let err = matmul(&a, &b).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch { left: (2, 3), right: (2, 3), .. }
        ));
        assert!(err.to_string().contains("2x3"));
    }

    #[test]
    fn three_four_five() {
        let a = DenseMatrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(pairwise_sq_dist(&a, &b).unwrap().as_slice(), &[25.0]);
    }

    #[test]
    fn self_distance_diagonal_is_zero() {
        let mut rng = SeededRng::new(5);
        let m = random(9, 4, &mut rng).map(|v| v * 1e3);
        let d = pairwise_sq_dist(&m, &m).unwrap();
        for i in 0..9 {
            assert_eq!(d[(i, i)], 0.0);
        }
    }

    #[test]
    fn distances_match_per_pair_loop() {
        let mut rng = SeededRng::new(17);
        let a = random(10, 4, &mut rng);
        let b = random(6, 4, &mut rng);
        let d = pairwise_sq_dist(&a, &b).unwrap();
        for i in 0..10 {
            for j in 0..6 {
                let want: f64 = a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
                assert!((d[(i, j)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn distance_shape_mismatch() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 4);
        assert!(pairwise_sq_dist(&a, &b).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(DenseMatrix::from_rows(&rows).is_err());
    }
}
