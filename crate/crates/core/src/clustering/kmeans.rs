//! Lloyd's k-means with k-means++ seeding and deterministic empty-cluster
//! repair.
//!
//! Ties always go to the lowest index: a point equidistant from several
//! centroids joins the first, and repair picks the first of equally bad
//! donor clusters and the first of equally far points.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once one Lloyd iteration improves inertia by less than this.
    pub tol: f64,
    /// Independent k-means++ starts; the lowest final inertia wins (first on
    /// ties).
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-10,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    /// `k x P`.
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    /// Inertia after seeding and after every Lloyd iteration.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Nearest-centroid labels for new points.
    pub fn predict(&self, points: &FeatureMatrix) -> Vec<usize> {
        assign_nearest(points, &self.centroids)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Index of the nearest centroid for every row, first index on ties.
pub fn assign_nearest(points: &FeatureMatrix, centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter_rows().map(|p| nearest(p, centroids).0).collect()
}

fn inertia(points: &FeatureMatrix, centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter_rows()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

fn plus_plus<R: Rng>(points: &FeatureMatrix, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.rows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points.iter_rows().map(|p| sq_dist(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target == total; take the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            // every point coincides with a center: take the first unused index
            (0..n).find(|i| !chosen.contains(i)).expect("n >= k")
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points.iter_rows()) {
            *d = d.min(sq_dist(p, points.row(next)));
        }
    }
    chosen.iter().map(|&i| points.row(i).to_vec()).collect()
}

/// Moves points into empty clusters: the farthest point of the cluster with
/// the largest within-cluster sum of squares becomes the empty cluster's
/// centroid.
fn repair_empty(points: &FeatureMatrix, centroids: &mut [Vec<f64>], assignments: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        let mut sse = vec![0.0f64; k];
        for (p, &a) in points.iter_rows().zip(assignments.iter()) {
            sizes[a] += 1;
            sse[a] += sq_dist(p, &centroids[a]);
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..k)
            .filter(|&c| sizes[c] >= 2)
            .fold(None, |best: Option<usize>, c| match best {
                Some(b) if sse[b] >= sse[c] => Some(b),
                _ => Some(c),
            })
            .expect("n >= k leaves a cluster with two members");
        let mut far = (usize::MAX, -1.0);
        for (i, (p, &a)) in points.iter_rows().zip(assignments.iter()).enumerate() {
            if a == donor {
                let d = sq_dist(p, &centroids[donor]);
                if d > far.1 {
                    far = (i, d);
                }
            }
        }
        centroids[empty] = points.row(far.0).to_vec();
        assignments[far.0] = empty;
    }
}

fn means(points: &FeatureMatrix, assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; points.cols()]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter_rows().zip(assignments) {
        counts[a] += 1;
        for (s, &v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= c as f64);
    }
    sums
}

/// Best of `config.n_init` seeded runs. Start `r` uses `seed` itself for
/// `r = 0` and `derive_seed(seed, r)` after that.
pub fn kmeans(points: &FeatureMatrix, k: usize, seed: u64, config: KMeansConfig) -> Result<KMeansModel> {
    let n = points.rows();
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if n < k {
        return Err(Error::InvalidParameter(format!("k-means needs N >= k, got N = {n}, k = {k}")));
    }
    if config.n_init == 0 {
        return Err(Error::InvalidParameter("n_init must be at least 1".into()));
    }
    let mut best = kmeans_single(points, k, seed, config);
    for r in 1..config.n_init {
        let candidate = kmeans_single(points, k, derive_seed(seed, r as u64), config);
        if candidate.inertia < best.inertia {
            best = candidate;
        }
    }
    Ok(best)
}

/// One Lloyd run from one k-means++ seeding.
pub fn kmeans_single(points: &FeatureMatrix, k: usize, seed: u64, config: KMeansConfig) -> KMeansModel {
    let mut rng = rng(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut assignments = assign_nearest(points, &centroids);
    repair_empty(points, &mut centroids, &mut assignments);
    let mut current = inertia(points, &centroids, &assignments);
    let mut trace = vec![current];
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        let mut next_centroids = means(points, &assignments, k);
        let mut next = assign_nearest(points, &next_centroids);
        repair_empty(points, &mut next_centroids, &mut next);
        let next_inertia = inertia(points, &next_centroids, &next);
        assert!(
            next_inertia <= current + 1e-9 * current.max(1.0),
            "k-means inertia increased from {current} to {next_inertia}"
        );
        let improvement = current - next_inertia;
        let unchanged = next == assignments;
        centroids = next_centroids;
        assignments = next;
        current = next_inertia;
        trace.push(current);
        if unchanged || improvement < config.tol {
            break;
        }
    }
    KMeansModel {
        centroids,
        assignments,
        inertia: current,
        inertia_trace: trace,
        iterations,
    }
}

/// Cluster assignments in dataset order, used as classification targets.
pub fn pseudo_labels(model: &KMeansModel) -> Vec<usize> {
    model.assignments.clone()
}
