//! Trains the dense U-Net and the downsampling baseline on the same phantom
//! data and prints a metrics table for a held-out set.
//!
//! cargo run --release --example baseline_vs_proposed -- [epochs] [seed]

use dense_cluster::clustering::KMeansConfig;
use dense_cluster::evaluation::metrics_csv;
use dense_cluster::nn::Variant;
use dense_cluster::pipeline::{evaluate, train, TrainConfig};
use dense_cluster::seed::Seeds;
use dense_cluster::volume::generate_dataset;

fn main() -> dense_cluster::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().and_then(|s| s.parse().ok()).unwrap_or(5);
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let train_set = generate_dataset(3, 12, [16, 16, 16], 100 + seed)?;
    let test_set = generate_dataset(3, 8, [16, 16, 16], 200 + seed)?;

    let mut rows = Vec::new();
    for variant in [Variant::Proposed, Variant::Baseline] {
        let config = TrainConfig { epochs, k: 3, variant, seeds: Seeds::from_base(seed), ..TrainConfig::default() };
        let model = train(&config, &train_set, |_, _, _, _| Ok(()))?;
        println!(
            "{:8} {} parameters, features at 1/{} resolution",
            variant.name(),
            model.net.param_count(),
            config.topology().output_stride()
        );
        let eval = evaluate(&model.net, &test_set, 3, config.preprocess(), KMeansConfig::default(), config.seeds.kmeans, variant.name())?;
        rows.push(eval.report);
    }
    print!("{}", metrics_csv(&rows));
    Ok(())
}
