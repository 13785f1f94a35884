//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod checks;

use anchorgae::anchor_graph::{fit_anchor_graph, init_anchors, AnchorGraph, ConnectivitySolveConfig};
use anchorgae::conv::{Activation, EncoderParams};
use anchorgae::training::reconstruction_loss;
use anchorgae::{DenseMatrix, SeededRng};

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumulative += ui;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Minimizes `Σ p_j d_j + γ Σ p_j²` over the simplex by projected gradient
/// descent from the uniform point.
pub fn projected_gradient_row(d: &[f64], gamma: f64, iters: usize) -> Vec<f64> {
    let m = d.len();
    let step = 0.5 / (2.0 * gamma);
    let mut p = vec![1.0 / m as f64; m];
    for _ in 0..iters {
        let moved: Vec<f64> = p.iter().zip(d).map(|(pj, dj)| pj - step * (dj + 2.0 * gamma * pj)).collect();
        p = project_simplex(&moved);
    }
    p
}

/// `γ = ½ Σ_{l≤k} (d_(k+1) − d_(l))` from a full sort.
pub fn gamma_for(d: &[f64], k: usize) -> f64 {
    let mut s = d.to_vec();
    s.sort_by(f64::total_cmp);
    0.5 * s[..k].iter().map(|v| s[k] - v).sum::<f64>()
}

pub fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.cols(), b.rows());
    DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|l| a[(i, l)] * b[(l, j)]).sum())
}

/// `A = B Δ⁻¹ Bᵀ` and `A_t = Δ⁻¹ Bᵀ B` entry by entry from the dense `B`.
pub fn loop_adjacency(g: &AnchorGraph) -> (DenseMatrix, DenseMatrix) {
    let b = g.b().to_dense();
    let (n, m) = b.shape();
    let delta: Vec<f64> = (0..m).map(|j| (0..n).map(|i| b[(i, j)]).sum()).collect();
    let a = DenseMatrix::from_fn(n, n, |i, l| (0..m).map(|j| b[(i, j)] * b[(l, j)] / delta[j]).sum());
    let a_t = DenseMatrix::from_fn(m, m, |j, l| (0..n).map(|i| b[(i, j)] * b[(i, l)]).sum::<f64>() / delta[j]);
    (a, a_t)
}

/// `H ← φ(adj H W)` layer by layer.
pub fn dense_conv(adj: &DenseMatrix, x: &DenseMatrix, params: &EncoderParams) -> DenseMatrix {
    let mut h = x.clone();
    for (w, act) in params.layers().iter().zip(params.activations()) {
        let pre = naive_matmul(adj, &naive_matmul(&h, w));
        h = pre.map(|v| match act {
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        });
    }
    h
}

/// Central differences of the reconstruction loss in every weight.
pub fn finite_difference_grads(
    g: &AnchorGraph,
    x: &DenseMatrix,
    c: &DenseMatrix,
    params: &EncoderParams,
    h: f64,
) -> Vec<DenseMatrix> {
    let layers = params.layers().to_vec();
    let mut out = Vec::new();
    for (l, w) in layers.iter().enumerate() {
        let mut grad = DenseMatrix::zeros(w.rows(), w.cols());
        for i in 0..w.rows() {
            for j in 0..w.cols() {
                let eval = |delta: f64| {
                    let mut shifted = layers.clone();
                    shifted[l][(i, j)] += delta;
                    reconstruction_loss(g, x, c, &EncoderParams::new(shifted).unwrap()).unwrap()
                };
                grad[(i, j)] = (eval(h) - eval(-h)) / (2.0 * h);
            }
        }
        out.push(grad);
    }
    out
}

/// Leading `c` eigenvectors of a symmetric matrix, from nalgebra.
pub fn top_eigenvectors(s: &DenseMatrix, c: usize) -> (Vec<f64>, DenseMatrix) {
    let n = s.rows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| s[(i, j)]);
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DenseMatrix::from_fn(n, c, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Largest principal-angle sine between the column spans of `a` and `b`,
/// as the spectral norm of `(I − Q_a Q_aᵀ) Q_b`.
pub fn max_principal_sine(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let na = nalgebra::DMatrix::from_fn(qa.rows(), qa.cols(), |i, j| qa[(i, j)]);
    let nb = nalgebra::DMatrix::from_fn(qb.rows(), qb.cols(), |i, j| qb[(i, j)]);
    let residual = &nb - &na * (na.transpose() * &nb);
    residual.singular_values().max()
}

fn orthonormal_basis(a: &DenseMatrix) -> DenseMatrix {
    let m = nalgebra::DMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)]);
    let q = m.qr().q();
    DenseMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)])
}

/// Best matched fraction over all injective maps from the smaller label set
/// into the larger one.
pub fn brute_force_acc(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let size = kp.max(kt);
    let mut count = vec![vec![0usize; size]; size];
    for (&p, &t) in pred.iter().zip(truth) {
        count[p][t] += 1;
    }
    let mut perm: Vec<usize> = (0..size).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |perm| {
        let matched = (0..size).map(|i| count[i][perm[i]]).sum::<usize>();
        best = best.max(matched);
    });
    best as f64 / pred.len() as f64
}

fn permute(v: &mut Vec<usize>, at: usize, visit: &mut impl FnMut(&[usize])) {
    if at == v.len() {
        visit(v);
        return;
    }
    for i in at..v.len() {
        v.swap(at, i);
        permute(v, at + 1, visit);
        v.swap(at, i);
    }
}

/// An anchor graph fitted to Gaussian data.
pub fn random_fitted_graph(n: usize, m: usize, d: usize, k: usize, rng: &mut SeededRng) -> AnchorGraph {
    let x = DenseMatrix::from_fn(n, d, |_, _| rng.normal());
    let anchors = init_anchors(&x, m, rng).unwrap();
    fit_anchor_graph(&x, &anchors, &ConnectivitySolveConfig::new(k)).unwrap()
}
