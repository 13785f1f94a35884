use rayon::prelude::*;

use super::ClusterAssignment;
use crate::error::{invalid, Result};
use crate::numerics::{DenseMatrix, SeededRng};

const MAX_LLOYD_ITERS: usize = 300;

/// Outcome of the best k-means restart.
#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    pub centroids: DenseMatrix,
    /// Within-cluster sum of squares.
    pub wcss: f64,
    /// WCSS after each Lloyd iteration of the winning restart.
    pub wcss_trace: Vec<f64>,
}

/// Lloyd's algorithm from k-means++ seeds, best of `restarts` by WCSS.
///
/// Restart `r` draws from its own fork of `rng`, and ties between restarts go
/// to the lower index, so the result does not depend on scheduling.
pub fn kmeans(z: &DenseMatrix, c: usize, rng: &mut SeededRng, restarts: usize) -> Result<KMeansFit> {
    let n = z.rows();
    if c == 0 || c > n {
        return Err(invalid(format!("cannot form {c} clusters from {n} points")));
    }
    let base = rng.clone();
    // advance the caller's stream so repeated calls differ
    rng.uniform();
    let fits: Vec<KMeansFit> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| lloyd(z, c, &mut base.fork(r as u64)))
        .collect();
    let best = fits
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.wcss.total_cmp(&b.wcss).then(ia.cmp(ib)))
        .map(|(_, f)| f)
        .expect("at least one restart");
    Ok(best)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_plus_plus(z: &DenseMatrix, c: usize, rng: &mut SeededRng) -> DenseMatrix {
    let n = z.rows();
    let mut chosen = vec![rng.below(n)];
    let mut closest: Vec<f64> = z.row_iter().map(|r| sq_dist(r, z.row(chosen[0]))).collect();
    while chosen.len() < c {
        let next = rng.weighted_index(&closest);
        chosen.push(next);
        let centre = z.row(next);
        closest
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, d)| *d = d.min(sq_dist(z.row(i), centre)));
    }
    z.select_rows(&chosen)
}

/// Nearest centroid and its squared distance for every point.
fn assign(z: &DenseMatrix, centroids: &DenseMatrix) -> Vec<(usize, f64)> {
    (0..z.rows())
        .into_par_iter()
        .map(|i| {
            let zi = z.row(i);
            centroids
                .row_iter()
                .enumerate()
                .map(|(j, c)| (j, sq_dist(zi, c)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        })
        .collect()
}

fn lloyd(z: &DenseMatrix, c: usize, rng: &mut SeededRng) -> KMeansFit {
    let d = z.cols();
    let mut centroids = seed_plus_plus(z, c, rng);
    let mut labels = assign(z, &centroids);
    let mut trace = vec![labels.iter().map(|l| l.1).sum::<f64>()];

    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = DenseMatrix::zeros(c, d);
        let mut counts = vec![0usize; c];
        for (i, &(l, _)) in labels.iter().enumerate() {
            counts[l] += 1;
            sums.row_mut(l).iter_mut().zip(z.row(i)).for_each(|(s, v)| *s += v);
        }
        let mut taken: Vec<usize> = Vec::new();
        for j in 0..c {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (dst, s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *dst = s * inv;
                }
            } else {
                // empty cluster: move it to the point farthest from its centroid
                let far = labels
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken.contains(i))
                    .fold((0, f64::NEG_INFINITY), |best, (i, l)| if l.1 > best.1 { (i, l.1) } else { best })
                    .0;
                taken.push(far);
                centroids.row_mut(j).copy_from_slice(z.row(far));
            }
        }
        let next = assign(z, &centroids);
        let wcss: f64 = next.iter().map(|l| l.1).sum();
        let changed = next.iter().zip(&labels).any(|(a, b)| a.0 != b.0);
        labels = next;
        trace.push(wcss);
        if !changed {
            break;
        }
    }

    let wcss = *trace.last().expect("nonempty trace");
    KMeansFit {
        assignment: ClusterAssignment {
            labels: labels.into_iter().map(|l| l.0).collect(),
            n_clusters: c,
        },
        centroids,
        wcss,
        wcss_trace: trace,
    }
}
