//! Scores a clustering three ways: matched accuracy against known classes,
//! silhouette and Davies-Bouldin, then writes the metrics table.
//!
//! cargo run --example cluster_metrics

use dense_cluster::clustering::FeatureMatrix;
use dense_cluster::evaluation::{davies_bouldin, matched_accuracy, metrics_csv, report, silhouette, ConfusionMatrix};

fn main() -> dense_cluster::Result<()> {
    let points = FeatureMatrix::new(4, 1, vec![0.0, 1.0, 10.0, 11.0])?;
    let labels = [0, 0, 1, 1];
    println!("two pairs on a line: silhouette {:.4}, Davies-Bouldin {:.4}", silhouette(&points, &labels)?, davies_bouldin(&points, &labels)?);

    // cluster ids are arbitrary, so a relabelled perfect answer still scores 1
    let truth = [0, 0, 1, 1, 2, 2];
    let pred = [2, 2, 0, 0, 1, 1];
    println!("relabelled perfect clustering: accuracy {}", matched_accuracy(&pred, &truth, 3)?);

    let pred = [0, 0, 0, 1, 1, 0, 1, 1, 1, 1, 0, 0];
    let truth = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 0];
    let confusion = ConfusionMatrix::new(&pred, &truth, 2)?;
    println!("confusion {:?} -> accuracy {:.4}", confusion.counts, matched_accuracy(&pred, &truth, 2)?);

    let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![pred[i] as f64 * 4.0 + (i as f64 * 0.37).sin(), (i as f64).cos()]).collect();
    let features = FeatureMatrix::from_rows(&rows)?;
    let table = [report("noisy", &pred, &truth, 2, &features)?, report("labels-as-truth", &truth, &truth, 2, &features)?];
    print!("{}", metrics_csv(&table));
    Ok(())
}
