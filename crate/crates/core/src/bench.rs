//! Forward-pass timing of the factored convolution against a dense `A`
//! reference, for checking linear scaling in `n`.

use crate::anchor_graph::{dense_adjacency, AnchorGraph, KSparseMatrix};
use crate::conv::{encode_samples, init_params, EncoderParams};
use crate::error::{invalid, Result};
use crate::metrics::Stopwatch;
use crate::numerics::{DenseMatrix, SeededRng};

/// A random k-sparse row-stochastic graph in which every anchor has an edge:
/// row `i` always links anchor `i mod m`.
pub fn random_graph(n: usize, m: usize, k: usize, rng: &mut SeededRng) -> Result<AnchorGraph> {
    if k == 0 || k > m || n < m {
        return Err(invalid(format!("cannot build a {k}-sparse graph with n = {n}, m = {m}")));
    }
    let mut indices = Vec::with_capacity(n * k);
    let mut values = Vec::with_capacity(n * k);
    for i in 0..n {
        let first = i % m;
        let mut row = vec![first];
        while row.len() < k {
            let j = rng.below(m);
            if !row.contains(&j) {
                row.push(j);
            }
        }
        let w: Vec<f64> = (0..k).map(|_| 0.05 + rng.uniform()).collect();
        let total: f64 = w.iter().sum();
        indices.extend(row);
        values.extend(w.into_iter().map(|v| v / total));
    }
    let b = KSparseMatrix::new(n, m, k, indices, values)?;
    AnchorGraph::new(b, DenseMatrix::zeros(m, 1))
}

/// Sample-branch forward pass through an explicitly formed `A`.
pub fn dense_forward_samples(g: &AnchorGraph, x: &DenseMatrix, params: &EncoderParams) -> Result<DenseMatrix> {
    let (a, _) = dense_adjacency(g)?;
    let mut h = x.clone();
    for (w, act) in params.layers().iter().zip(params.activations()) {
        h = a.matmul(&h.matmul(w)?)?.map(|v| act.apply(v));
    }
    Ok(h)
}

#[derive(Clone, Debug)]
pub struct ScalingConfig {
    /// Ascending sample counts.
    pub sizes: Vec<usize>,
    pub n_anchors: usize,
    pub dim: usize,
    pub layers: Vec<usize>,
    pub k: usize,
    pub reps: usize,
    /// Largest `n` for which the dense path is timed.
    pub dense_cap: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            sizes: vec![10_000, 20_000, 40_000],
            n_anchors: 200,
            dim: 64,
            layers: vec![128, 64],
            k: 5,
            reps: 5,
            dense_cap: 4_000,
            seed: 0,
        }
    }
}

/// Median forward times in seconds; `t_dense` is `None` above the cap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub t_factored: f64,
    pub t_dense: Option<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn time_median(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let sw = Stopwatch::start();
        f()?;
        times.push(sw.seconds());
    }
    Ok(median(times))
}

/// Max abs difference between the factored and dense forward passes on one
/// random instance.
pub fn spot_check(n: usize, cfg: &ScalingConfig) -> Result<f64> {
    let mut rng = SeededRng::new(cfg.seed).fork(99);
    let (g, x, params) = instance(n, cfg, &mut rng)?;
    encode_samples(&g, &x, &params)?.max_abs_diff(&dense_forward_samples(&g, &x, &params)?)
}

fn instance(n: usize, cfg: &ScalingConfig, rng: &mut SeededRng) -> Result<(AnchorGraph, DenseMatrix, EncoderParams)> {
    let g = random_graph(n, cfg.n_anchors.min(n), cfg.k, rng)?;
    let x = DenseMatrix::from_fn(n, cfg.dim, |_, _| rng.normal());
    let mut dims = vec![cfg.dim];
    dims.extend(&cfg.layers);
    let params = init_params(&dims, rng)?;
    Ok((g, x, params))
}

pub fn run_scaling(cfg: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    if cfg.sizes.is_empty() || cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("benchmark sizes must be a nonempty ascending list"));
    }
    if cfg.reps == 0 {
        return Err(invalid("benchmark needs at least one repetition"));
    }
    let rng = SeededRng::new(cfg.seed);
    cfg.sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let (g, x, params) = instance(n, cfg, &mut rng.fork(i as u64))?;
            let t_factored = time_median(cfg.reps, || encode_samples(&g, &x, &params).map(drop))?;
            let t_dense = if n <= cfg.dense_cap {
                Some(time_median(cfg.reps, || dense_forward_samples(&g, &x, &params).map(drop))?)
            } else {
                None
            };
            log::info!("n = {n}: factored {t_factored:.4}s");
            Ok(ScalingRow { n, t_factored, t_dense })
        })
        .collect()
}
