//! Measurements behind the oracle tests and the acceptance report. Each
//! returns the worst observed error so callers pick their own tolerance.

use anchorgae::anchor_graph::{dense_adjacency, solve_connectivity_row, AnchorGraph};
use anchorgae::clustering::spectral_via_svd;
use anchorgae::conv::{conv_forward_anchors, conv_forward_samples, init_params};
use anchorgae::metrics::acc;
use anchorgae::training::loss_and_gradients;
use anchorgae::{DenseMatrix, SeededRng};

use super::*;

/// Worst gap between the closed-form row and projected gradient descent.
pub fn closed_form_gap(instances: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let m = 2 + rng.below(49);
        let k = 1 + rng.below(10.min(m - 1));
        let d: Vec<f64> = (0..m).map(|_| rng.uniform_range(0.0, 10.0)).collect();
        let gamma = gamma_for(&d, k);
        let oracle = projected_gradient_row(&d, gamma, 200);
        let row = solve_connectivity_row(&d, k).unwrap().to_dense(m);
        let gap = row.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(gap);
    }
    worst
}

/// Worst `‖A·1 − 1‖∞` and `‖A_t·1 − 1‖∞` over fitted graphs.
pub fn degree_identity_gap(instances: usize, seed: u64) -> (f64, f64) {
    let mut rng = SeededRng::new(seed);
    let (mut wa, mut wt): (f64, f64) = (0.0, 0.0);
    for _ in 0..instances {
        let n = 20 + rng.below(80);
        let m = 3 + rng.below(12);
        let k = 1 + rng.below(m - 1);
        let g = random_fitted_graph(n, m, 1 + rng.below(4), k, &mut rng);
        let (a, a_t) = dense_adjacency(&g).unwrap();
        wa = wa.max(a.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max));
        wt = wt.max(a_t.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max));
    }
    (wa, wt)
}

/// Worst difference between the factored encoder and the dense loop-built
/// convolution, over both branches.
pub fn conv_gap(instances: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = 20 + rng.below(181);
        let m = 3 + rng.below(18);
        let d = 1 + rng.below(6);
        let g = random_fitted_graph(n, m, d, 1 + rng.below(m - 1), &mut rng);
        let x = DenseMatrix::from_fn(n, d, |_, _| rng.normal());
        let c = DenseMatrix::from_fn(m, d, |_, _| rng.normal());
        let params = init_params(&[d, 2 + rng.below(6), 1 + rng.below(4)], &mut rng).unwrap();
        let (a, a_t) = loop_adjacency(&g);
        let (z, _) = conv_forward_samples(&g, &x, &params).unwrap();
        let (z_t, _) = conv_forward_anchors(&g, &c, &params).unwrap();
        worst = worst.max(z.max_abs_diff(&dense_conv(&a, &x, &params)).unwrap());
        worst = worst.max(z_t.max_abs_diff(&dense_conv(&a_t, &c, &params)).unwrap());
    }
    worst
}

/// Worst relative error `‖g − g_fd‖ / max(‖g‖, ‖g_fd‖)` against central
/// differences of the loss.
///
/// Instances whose gradient vanishes (every hidden ReLU dead) are redrawn:
/// there the ratio compares rounding noise with rounding noise.
pub fn gradient_relative_error(instances: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < instances {
        let n = 8 + rng.below(10);
        let m = 3 + rng.below(4);
        let d = 2 + rng.below(3);
        let g = random_fitted_graph(n, m, d, 1 + rng.below(m - 1), &mut rng);
        let x = DenseMatrix::from_fn(n, d, |_, _| rng.normal());
        let params = init_params(&[d, 3 + rng.below(3), 2], &mut rng).unwrap();
        let (_, grads) = loss_and_gradients(&g, &x, g.anchors(), &params).unwrap();
        if grads.global_norm() < 1e-8 {
            continue;
        }
        let fd = finite_difference_grads(&g, &x, g.anchors(), &params, 1e-6);
        let (mut diff, mut na, mut nf) = (0.0, 0.0, 0.0);
        for (ga, gf) in grads.layers.iter().zip(&fd) {
            diff += ga.sub(gf).unwrap().frobenius_norm().powi(2);
            na += ga.frobenius_norm().powi(2);
            nf += gf.frobenius_norm().powi(2);
        }
        worst = worst.max(diff.sqrt() / f64::max(na, nf).sqrt());
        done += 1;
    }
    worst
}

/// Random fitted graph whose dense `A` has a clear gap after the `c`-th
/// eigenvalue, so the leading subspace is well defined.
fn gapped_graph(c: usize, rng: &mut SeededRng) -> (AnchorGraph, Vec<f64>, DenseMatrix) {
    loop {
        let n = 20 + rng.below(81);
        let m = c + 2 + rng.below(10);
        let g = random_fitted_graph(n, m, 2, 2 + rng.below(m - 2), rng);
        let (a, _) = loop_adjacency(&g);
        let (values, vectors) = top_eigenvectors(&a, c);
        if values[c - 1] - values[c] > 1e-3 {
            return (g, values, vectors);
        }
    }
}

/// Worst principal-angle sine between the spectral route's `V` and the top
/// eigenvectors of the dense `A`, and the largest singular value seen.
pub fn spectral_subspace_gap(instances: usize, seed: u64) -> (f64, f64) {
    let mut rng = SeededRng::new(seed);
    let (mut worst, mut top): (f64, f64) = (0.0, 0.0);
    for _ in 0..instances {
        let c = 2 + rng.below(3);
        let (g, _, vectors) = gapped_graph(c, &mut rng);
        let s = spectral_via_svd(&g, c, &mut rng).unwrap();
        worst = worst.max(max_principal_sine(&s.v, &vectors));
        top = top.max(s.singular_values[0]);
    }
    (worst, top)
}

/// Number of trials where Hungarian ACC differs from brute force.
pub fn hungarian_mismatches(trials: usize, seed: u64) -> usize {
    let mut rng = SeededRng::new(seed);
    (0..trials)
        .filter(|_| {
            let n = 5 + rng.below(60);
            let cp = 1 + rng.below(6);
            let ct = 1 + rng.below(6);
            let pred: Vec<usize> = (0..n).map(|_| rng.below(cp)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.below(ct)).collect();
            let fast = acc(&pred, &truth).unwrap();
            (fast - brute_force_acc(&compact(&pred), &compact(&truth))).abs() > 1e-12
        })
        .count()
}

/// Relabels to `0..k` so the brute-force oracle sees no unused ids.
fn compact(labels: &[usize]) -> Vec<usize> {
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    labels.iter().map(|l| ids.binary_search(l).unwrap()).collect()
}
