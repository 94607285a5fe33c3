//! Latent-space clustering and outcome anchoring.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 10;
const LLOYD_MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub labels: Vec<usize>,
    #[serde(with = "crate::matrix_serde")]
    pub centroids: Array2<f64>,
    pub wcss: f64,
}

/// Reference (`a`, highest mean outcome) and target (`b`, lowest) clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub labels: Vec<usize>,
    #[serde(rename = "A")]
    pub a: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub reference_indices: Vec<usize>,
    pub target_indices: Vec<usize>,
    pub cluster_means: Vec<f64>,
}

impl GroupAssignment {
    pub fn n_reference(&self) -> usize {
        self.reference_indices.len()
    }

    pub fn n_target(&self) -> usize {
        self.target_indices.len()
    }
}

/// Uniform empirical measure over a multiset of latent codes.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub support: Array2<f64>,
    pub weights: Array1<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn count_distinct_rows(x: ArrayView2<f64>) -> usize {
    let mut rows: Vec<Vec<u64>> = x
        .outer_iter()
        .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

fn kmeans_pp_init(x: ArrayView2<f64>, g: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::<f64>::zeros((g, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..g {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                if target < v {
                    chosen = i;
                    break;
                }
                target -= v;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

fn lloyd(x: ArrayView2<f64>, mut centroids: Array2<f64>) -> Clustering {
    let (n, k) = x.dim();
    let g = centroids.nrows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..LLOYD_MAX_ITERS {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..g {
                let dd = sq_dist(x.row(i), centroids.row(c));
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }

        // repair empty clusters with the point farthest from its centroid
        loop {
            let mut counts = vec![0usize; g];
            for &l in &labels {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(x.row(a), centroids.row(labels[a]))
                        .total_cmp(&sq_dist(x.row(b), centroids.row(labels[b])))
                        .then(b.cmp(&a))
                })
                .expect("n >= g guarantees a donor cluster");
            labels[far] = empty;
            centroids.row_mut(empty).assign(&x.row(far));
            changed = true;
        }

        let mut sums = Array2::<f64>::zeros((g, k));
        let mut counts = vec![0usize; g];
        for i in 0..n {
            let mut row = sums.row_mut(labels[i]);
            row += &x.row(i);
            counts[labels[i]] += 1;
        }
        for c in 0..g {
            let mut row = sums.row_mut(c);
            row /= counts[c] as f64;
        }
        centroids = sums;
        if !changed {
            break;
        }
    }
    let wcss = (0..n).map(|i| sq_dist(x.row(i), centroids.row(labels[i]))).sum();
    Clustering {
        labels,
        centroids,
        wcss,
    }
}

/// Lloyd's k-means with k-means++ seeding; the best of `restarts` runs by
/// within-cluster sum of squares wins, ties going to the earlier restart.
pub fn kmeans(codes: ArrayView2<f64>, g: usize, seed: u64, restarts: usize) -> Result<Clustering> {
    let n = codes.nrows();
    if g < 2 {
        return Err(Error::invalid(format!("G = {g}: need at least two clusters")));
    }
    if g > n {
        return Err(Error::invalid(format!("G = {g} exceeds the number of points {n}")));
    }
    if count_distinct_rows(codes) < g {
        return Err(Error::Degenerate(format!("fewer than G = {g} distinct latent codes")));
    }
    let restarts = restarts.max(1);
    let runs: Vec<Clustering> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            lloyd(codes, kmeans_pp_init(codes, g, &mut rng))
        })
        .collect();
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.wcss.total_cmp(&b.wcss).then(ia.cmp(ib)))
        .map(|(_, c)| c)
        .expect("at least one restart");
    Ok(best)
}

/// Picks the reference cluster (highest mean outcome) and the target cluster
/// (lowest), breaking ties toward the lower cluster id.
pub fn anchor_groups(labels: &[usize], y: ArrayView1<f64>, g: usize) -> Result<GroupAssignment> {
    if labels.len() != y.len() {
        return Err(Error::dim(format!("{} labels vs {} outcomes", labels.len(), y.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= g) {
        return Err(Error::invalid(format!("label {bad} out of range for G = {g}")));
    }
    let mut sums = vec![0.0; g];
    let mut counts = vec![0usize; g];
    for (&l, &yi) in labels.iter().zip(y.iter()) {
        sums[l] += yi;
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Degenerate(format!("cluster {c} is empty")));
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();

    let mut a = 0;
    let mut b = 0;
    for c in 1..g {
        if means[c] > means[a] {
            a = c;
        }
        if means[c] < means[b] {
            b = c;
        }
    }
    if a == b {
        return Err(Error::Degenerate(
            "reference and target clusters coincide (all cluster means equal)".into(),
        ));
    }
    let members = |c: usize| (0..labels.len()).filter(|&i| labels[i] == c).collect::<Vec<_>>();
    Ok(GroupAssignment {
        labels: labels.to_vec(),
        a,
        b,
        reference_indices: members(a),
        target_indices: members(b),
        cluster_means: means,
    })
}

pub fn empirical_measure(codes: ArrayView2<f64>, indices: &[usize]) -> Result<EmpiricalMeasure> {
    if indices.is_empty() {
        return Err(Error::invalid("empirical measure needs at least one index"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= codes.nrows()) {
        return Err(Error::invalid(format!("index {bad} out of range")));
    }
    let m = indices.len();
    Ok(EmpiricalMeasure {
        support: codes.select(ndarray::Axis(0), indices),
        weights: Array1::from_elem(m, 1.0 / m as f64),
    })
}
