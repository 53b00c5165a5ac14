//! Unsupervised clustering metrics: matched accuracy, silhouette
//! coefficient and Davies-Bouldin score, plus the `metrics.csv` report.

mod hungarian;

pub use hungarian::min_cost_assignment;

use std::fmt::Write as _;
use std::path::Path;

use crate::clustering::FeatureMatrix;
use crate::error::{Error, Result};

/// `k_pred x k_true` co-occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(pred: &[usize], truth: &[usize], k: usize) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Shape(format!("{} predictions vs {} labels", pred.len(), truth.len())));
        }
        let mut counts = vec![vec![0u64; k]; k];
        for (&p, &t) in pred.iter().zip(truth) {
            for label in [p, t] {
                if label >= k {
                    return Err(Error::LabelOutOfRange { label, k });
                }
            }
            counts[p][t] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Fraction of points correct under the best one-to-one mapping from
/// predicted clusters to true classes.
pub fn matched_accuracy(pred: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    let confusion = ConfusionMatrix::new(pred, truth, k)?;
    let n = confusion.total();
    if n == 0 {
        return Err(Error::InvalidParameter("no points to score".into()));
    }
    let cost: Vec<Vec<i64>> = confusion
        .counts
        .iter()
        .map(|row| row.iter().map(|&c| -(c as i64)).collect())
        .collect();
    let matching = min_cost_assignment(&cost);
    let hits: u64 = matching.iter().enumerate().map(|(p, &t)| confusion.counts[p][t]).sum();
    Ok(hits as f64 / n as f64)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Labels compacted to `0..m` over the clusters actually present.
fn present_clusters(labels: &[usize]) -> (Vec<usize>, usize) {
    let max = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut remap = vec![usize::MAX; max];
    let mut m = 0;
    for &l in labels {
        if remap[l] == usize::MAX {
            remap[l] = m;
            m += 1;
        }
    }
    (labels.iter().map(|&l| remap[l]).collect(), m)
}

fn check_points(points: &FeatureMatrix, labels: &[usize]) -> Result<()> {
    if points.rows() != labels.len() {
        return Err(Error::Shape(format!("{} points vs {} labels", points.rows(), labels.len())));
    }
    Ok(())
}

/// Mean silhouette `(b - a) / max(a, b)` over all points; points in
/// singleton clusters score 0.
pub fn silhouette(points: &FeatureMatrix, labels: &[usize]) -> Result<f64> {
    check_points(points, labels)?;
    let n = labels.len();
    let (labels, m) = present_clusters(labels);
    if m < 2 {
        return Err(Error::SingleCluster);
    }
    if n < 3 {
        return Err(Error::InvalidParameter("silhouette needs at least 3 points".into()));
    }
    let mut sizes = vec![0usize; m];
    for &l in &labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; m];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist(points.row(i), points.row(j));
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..m)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Mean over clusters of the worst `(S_i + S_j) / M_ij`, with `S` the mean
/// distance to the centroid and `M` the centroid distance. Coincident
/// centroids give `+inf`.
pub fn davies_bouldin(points: &FeatureMatrix, labels: &[usize]) -> Result<f64> {
    check_points(points, labels)?;
    let (labels, m) = present_clusters(labels);
    if m < 2 {
        return Err(Error::SingleCluster);
    }
    let p = points.cols();
    let mut centroids = vec![vec![0.0; p]; m];
    let mut sizes = vec![0usize; m];
    for (row, &l) in points.iter_rows().zip(&labels) {
        sizes[l] += 1;
        for (c, &v) in centroids[l].iter_mut().zip(row) {
            *c += v;
        }
    }
    for (c, &s) in centroids.iter_mut().zip(&sizes) {
        c.iter_mut().for_each(|v| *v /= s as f64);
    }
    let mut scatter = vec![0.0; m];
    for (row, &l) in points.iter_rows().zip(&labels) {
        scatter[l] += dist(row, &centroids[l]);
    }
    for (s, &n) in scatter.iter_mut().zip(&sizes) {
        *s /= n as f64;
    }
    let mut total = 0.0;
    for i in 0..m {
        let mut worst = 0.0f64;
        for j in 0..m {
            if i == j {
                continue;
            }
            let sep = dist(&centroids[i], &centroids[j]);
            if sep == 0.0 {
                return Ok(f64::INFINITY);
            }
            worst = worst.max((scatter[i] + scatter[j]) / sep);
        }
        total += worst;
    }
    Ok(total / m as f64)
}

pub const METRICS_HEADER: &str = "method,clustering_accuracy,silhouette,davies_bouldin";

/// One row of the clustering performance table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub method: String,
    pub clustering_accuracy: f64,
    pub silhouette: f64,
    pub davies_bouldin: f64,
}

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.4},{:.4},{:.4}",
            self.method, self.clustering_accuracy, self.silhouette, self.davies_bouldin
        )
    }
}

/// Bundles the three metrics for one method.
pub fn report(method: &str, pred: &[usize], truth: &[usize], k: usize, points: &FeatureMatrix) -> Result<MetricsReport> {
    Ok(MetricsReport {
        method: method.to_string(),
        clustering_accuracy: matched_accuracy(pred, truth, k)?,
        silhouette: silhouette(points, pred)?,
        davies_bouldin: davies_bouldin(points, pred)?,
    })
}

pub fn metrics_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    writeln!(out, "{METRICS_HEADER}").expect("write to string");
    for r in reports {
        writeln!(out, "{}", r.csv_row()).expect("write to string");
    }
    out
}

pub fn write_metrics_csv(reports: &[MetricsReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, metrics_csv(reports)).map_err(|e| Error::io(path, e))
}
