//! Trains a network on synthetic phantoms by alternating k-means
//! pseudo-labelling with classifier training, then clusters a held-out set.
//!
//! cargo run --release --example deep_cluster_training -- [variant] [epochs] [seed]

use std::time::Instant;

use dense_cluster::clustering::KMeansConfig;
use dense_cluster::nn::Variant;
use dense_cluster::pipeline::{evaluate, train, TrainConfig};
use dense_cluster::seed::Seeds;
use dense_cluster::volume::generate_dataset;

fn main() -> dense_cluster::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let variant: Variant = args.first().map_or(Ok(Variant::Proposed), |s| s.parse())?;
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(15);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let dims = [16, 16, 16];
    let train_set = generate_dataset(3, 20, dims, 100 + seed)?;
    let test_set = generate_dataset(3, 10, dims, 200 + seed)?;
    let config = TrainConfig {
        epochs,
        k: 3,
        variant,
        seeds: Seeds::from_base(seed),
        ..TrainConfig::default()
    };

    let start = Instant::now();
    let outcome = train(&config, &train_set, |epoch, _, _, log| {
        if let Some(log) = log {
            println!(
                "epoch {epoch:2}  inertia {:8.4}  clusters {:?}  loss {:.4} -> {:.4}  changed {:.2}",
                log.inertia, log.histogram, log.loss_start, log.loss_end, log.label_change
            );
        }
        Ok(())
    })?;
    println!("trained {} in {:.1}s", variant.name(), start.elapsed().as_secs_f64());

    for (name, data) in [("train", &train_set), ("test", &test_set)] {
        let eval = evaluate(
            &outcome.net,
            data,
            3,
            config.preprocess(),
            KMeansConfig::default(),
            config.seeds.kmeans,
            variant.name(),
        )?;
        let r = &eval.report;
        println!(
            "{name:5}  accuracy {:.3}  silhouette {:.3}  davies-bouldin {:.3}  (raw silhouette {:.3})",
            r.clustering_accuracy, r.silhouette, r.davies_bouldin, eval.raw_report.silhouette
        );
    }
    Ok(())
}
