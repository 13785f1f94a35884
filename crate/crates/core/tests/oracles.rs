mod common;

use anchorgae::anchor_graph::{fit_anchor_graph, init_anchors, ConnectivitySolveConfig, KSparseMatrix};
use anchorgae::clustering::{kmeans, spectral_via_svd};
use anchorgae::data::make_blobs;
use anchorgae::metrics::{acc, nmi};
use anchorgae::numerics::{pairwise_sq_dist, sym_eig_topc};
use anchorgae::refine::{measure_collapse, pullback_anchors};
use anchorgae::{DenseMatrix, SeededRng};

use common::checks;
use common::*;

#[test]
fn closed_form_matches_projected_gradient() {
    assert!(checks::closed_form_gap(30, 1) < 1e-6);
}

#[test]
fn fitted_graphs_have_unit_degrees() {
    let (a, a_t) = checks::degree_identity_gap(20, 2);
    assert!(a < 1e-10 && a_t < 1e-10, "{a} {a_t}");
}

#[test]
fn factored_convolution_matches_dense() {
    assert!(checks::conv_gap(10, 3) < 1e-8);
}

#[test]
fn backprop_matches_finite_differences() {
    let err = checks::gradient_relative_error(5, 4);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn spectral_route_matches_dense_eigenvectors() {
    let (sine, top) = checks::spectral_subspace_gap(10, 5);
    assert!(sine < 1e-6, "{sine}");
    assert!(top <= 1.0 + 1e-8, "{top}");
}

#[test]
fn hungarian_matches_brute_force() {
    assert_eq!(checks::hungarian_mismatches(50, 6), 0);
}

#[test]
fn eigensolver_matches_nalgebra() {
    let mut rng = SeededRng::new(7);
    for _ in 0..20 {
        let n = 2 + rng.below(30);
        let r = DenseMatrix::from_fn(n, n, |_, _| rng.normal());
        let s = naive_matmul(&r.transpose(), &r);
        let c = 1 + rng.below(n);
        let ours = sym_eig_topc(&s, c).unwrap();
        let (values, _) = top_eigenvectors(&s, c);
        let scale = values[0].abs().max(1.0);
        for j in 0..c {
            assert!((ours.values[j] - values[j]).abs() < 1e-10 * scale);
            // residual ‖S v − λ v‖
            let v = ours.vectors.column(j);
            let sv: Vec<f64> = (0..n).map(|i| (0..n).map(|l| s[(i, l)] * v[l]).sum()).collect();
            let res = sv.iter().zip(&v).map(|(a, b)| (a - ours.values[j] * b).abs()).fold(0.0, f64::max);
            assert!(res < 1e-9 * scale, "{res}");
        }
    }
}

#[test]
fn pairwise_distances_match_loops() {
    let mut rng = SeededRng::new(8);
    let a = DenseMatrix::from_fn(40, 7, |_, _| 100.0 + rng.normal());
    let b = DenseMatrix::from_fn(9, 7, |_, _| 100.0 + rng.normal());
    let d = pairwise_sq_dist(&a, &b).unwrap();
    for i in 0..40 {
        for j in 0..9 {
            let direct: f64 = a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            assert!((d[(i, j)] - direct).abs() < 1e-8 * direct.max(1.0));
        }
    }
}

#[test]
fn pullback_matches_weighted_loop_and_stays_in_hull() {
    let mut rng = SeededRng::new(9);
    let x = DenseMatrix::from_fn(80, 4, |_, _| rng.uniform_range(-3.0, 5.0));
    let g = random_fitted_graph(80, 10, 4, 3, &mut rng);
    let c = pullback_anchors(&x, &g).unwrap();
    let b = g.b().to_dense();
    let ranges = x.column_ranges();
    for j in 0..10 {
        let weight: f64 = (0..80).map(|i| b[(i, j)]).sum();
        for l in 0..4 {
            let expected: f64 = (0..80).map(|i| b[(i, j)] * x[(i, l)]).sum::<f64>() / weight;
            assert!((c[(j, l)] - expected).abs() < 1e-12);
            assert!(c[(j, l)] >= ranges[l].0 - 1e-12 && c[(j, l)] <= ranges[l].1 + 1e-12);
        }
    }
}

/// Component count of the bipartite graph by breadth-first search.
fn bfs_components(b: &KSparseMatrix) -> usize {
    let (n, m) = (b.rows(), b.cols());
    let mut adj = vec![Vec::new(); n + m];
    for i in 0..n {
        let (idx, val) = b.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            if v > 0.0 {
                adj[i].push(n + j);
                adj[n + j].push(i);
            }
        }
    }
    let mut seen = vec![false; n + m];
    let mut count = 0;
    for s in 0..n + m {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut queue = std::collections::VecDeque::from([s]);
        seen[s] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    count
}

#[test]
fn component_count_matches_bfs() {
    let mut rng = SeededRng::new(10);
    for _ in 0..20 {
        let groups = 1 + rng.below(4);
        let x = DenseMatrix::from_fn(60, 2, |i, _| 50.0 * (i % groups) as f64 + rng.normal());
        let anchors = init_anchors(&x, 12, &mut rng).unwrap();
        let g = fit_anchor_graph(&x, &anchors, &ConnectivitySolveConfig::new(1 + rng.below(3))).unwrap();
        let q = g.b().to_dense();
        assert_eq!(measure_collapse(&g, &q).unwrap().component_count, bfs_components(g.b()));
    }
}

#[test]
fn kmeans_recovers_separated_blobs() {
    let ds = make_blobs(400, 5, 4, 12.0, &mut SeededRng::new(11)).unwrap();
    let fit = kmeans(&ds.x, 4, &mut SeededRng::new(12), 10).unwrap();
    assert!(acc(&fit.assignment.labels, ds.labels.as_ref().unwrap()).unwrap() >= 0.99);
}

#[test]
fn far_blobs_match_nearest_center() {
    let sep = 100.0;
    let ds = make_blobs(300, 6, 5, sep, &mut SeededRng::new(13)).unwrap();
    let s = sep * std::f64::consts::FRAC_1_SQRT_2;
    for (i, &label) in ds.labels.as_ref().unwrap().iter().enumerate() {
        let nearest = (0..5)
            .min_by(|&a, &b| {
                let da: f64 = (0..6).map(|l| (ds.x[(i, l)] - if l == a { s } else { 0.0 }).powi(2)).sum();
                let db: f64 = (0..6).map(|l| (ds.x[(i, l)] - if l == b { s } else { 0.0 }).powi(2)).sum();
                da.total_cmp(&db)
            })
            .unwrap();
        assert_eq!(nearest, label);
    }
}

#[test]
fn random_labels_score_near_chance() {
    let mut rng = SeededRng::new(14);
    let n = 10_000;
    let truth: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let pred: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
    assert!((acc(&pred, &truth).unwrap() - 0.5).abs() < 0.05);
    let other: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
    assert!(nmi(&pred, &other).unwrap() <= 0.05);
}

#[test]
fn spectral_toy_matches_dense_eigenvectors() {
    let dense = DenseMatrix::from_rows(&[
        [0.7, 0.3, 0.0, 0.0],
        [0.4, 0.6, 0.0, 0.0],
        [0.5, 0.5, 0.0, 0.0],
        [0.0, 0.0, 0.9, 0.1],
        [0.0, 0.0, 0.2, 0.8],
        [0.0, 0.0, 0.5, 0.5],
    ])
    .unwrap();
    let g = anchorgae::anchor_graph::AnchorGraph::new(KSparseMatrix::from_dense(&dense, 2).unwrap(), DenseMatrix::zeros(4, 1))
        .unwrap();
    let s = spectral_via_svd(&g, 2, &mut SeededRng::new(0)).unwrap();
    let (a, _) = loop_adjacency(&g);
    let (_, vectors) = top_eigenvectors(&a, 2);
    assert!(max_principal_sine(&s.v, &vectors) < 1e-8);
}
