//! K-means over sparse TF-IDF vectors: k-means++ seeding, Lloyd iterations
//! on squared Euclidean distance, lowest-index tie-breaking.

use std::collections::HashSet;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::textvec::SparseVector;

pub const DEFAULT_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster index of every input, in `0..k`.
    pub assignments: Vec<usize>,
    /// Dense centroids over `0..dim`.
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Effective cluster count; smaller than requested when there are fewer
    /// distinct inputs.
    pub k: usize,
    /// Inertia after every assignment pass, first to last.
    pub inertia_history: Vec<f64>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

fn sq_dist(x: &SparseVector, c: &[f64], c_sq: f64) -> f64 {
    let dot: f64 = x.iter().map(|(i, w)| w * c[i]).sum();
    (x.norm() * x.norm() - 2.0 * dot + c_sq).max(0.0)
}

fn nearest(x: &SparseVector, centroids: &[Vec<f64>], sq_norms: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, (c, &n)) in centroids.iter().zip(sq_norms).enumerate() {
        let d = sq_dist(x, c, n);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn distinct_count(vectors: &[SparseVector]) -> usize {
    vectors
        .iter()
        .map(|v| v.iter().map(|(i, w)| (i, w.to_bits())).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

pub fn kmeans(vectors: &[SparseVector], k: usize, seed: u64, max_iter: usize) -> Result<Clustering> {
    if vectors.is_empty() {
        return Err(Error::InvalidInput("k-means on an empty input".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k-means needs k >= 1".into()));
    }
    if max_iter == 0 {
        return Err(Error::InvalidInput("k-means needs max_iter >= 1".into()));
    }
    let k = k.min(distinct_count(vectors));
    let dim = vectors
        .iter()
        .filter_map(|v| v.iter().map(|(i, _)| i).last())
        .max()
        .map_or(1, |m| m + 1);
    let to_dense = |v: &SparseVector| v.to_dense(dim);

    // k-means++ seeding
    let mut rng = rng::stream(seed, Purpose::Cluster, 0);
    let mut centroids: Vec<Vec<f64>> = vec![to_dense(&vectors[rng.random_range(0..vectors.len())])];
    let mut nearest_sq: Vec<f64> = {
        let c = &centroids[0];
        let n = c.iter().map(|v| v * v).sum();
        vectors.iter().map(|x| sq_dist(x, c, n)).collect()
    };
    while centroids.len() < k {
        let total: f64 = nearest_sq.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in nearest_sq.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                if acc > r {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| nearest_sq.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            break;
        };
        let c = to_dense(&vectors[pick]);
        let n: f64 = c.iter().map(|v| v * v).sum();
        for (x, d) in vectors.iter().zip(nearest_sq.iter_mut()) {
            *d = d.min(sq_dist(x, &c, n));
        }
        centroids.push(c);
    }
    let k = centroids.len();

    let assign = |centroids: &[Vec<f64>]| -> (Vec<usize>, Vec<f64>, f64) {
        let norms: Vec<f64> = centroids.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let mut assignments = Vec::with_capacity(vectors.len());
        let mut dists = Vec::with_capacity(vectors.len());
        for x in vectors {
            let (a, d) = nearest(x, centroids, &norms);
            assignments.push(a);
            dists.push(d);
        }
        let inertia = dists.iter().sum();
        (assignments, dists, inertia)
    };

    let (mut assignments, mut dists, mut inertia) = assign(&centroids);
    let mut history = vec![inertia];
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in vectors.iter().zip(&assignments) {
            counts[a] += 1;
            for (i, w) in x.iter() {
                sums[a][i] += w;
            }
        }
        let mut reseeded = HashSet::new();
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s / n).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..vectors.len())
                    .filter(|i| !reseeded.contains(i))
                    .fold(None::<usize>, |best, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("fewer points than clusters");
                reseeded.insert(far);
                centroids[c] = to_dense(&vectors[far]);
            }
        }
        let (next, next_dists, next_inertia) = assign(&centroids);
        history.push(next_inertia);
        let stable = next == assignments;
        assignments = next;
        dists = next_dists;
        inertia = next_inertia;
        if stable {
            break;
        }
    }
    Ok(Clustering {
        assignments,
        centroids,
        inertia,
        k,
        inertia_history: history,
    })
}
