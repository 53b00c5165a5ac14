//! Pseudo-labels from an untrained network: pooled lung features are
//! standardized, PCA-reduced, L2-normalized and clustered with k-means.
//! Even random convolutions separate the phantom classes well above chance.
//!
//! cargo run --release --example kmeans_pseudo_labels -- [seed]

use dense_cluster::clustering::{kmeans, pseudo_labels, KMeansConfig, PreprocessConfig, Preprocessor};
use dense_cluster::evaluation::matched_accuracy;
use dense_cluster::nn::{FeatureNet, Topology};
use dense_cluster::pipeline::extract_features;
use dense_cluster::seed::rng;
use dense_cluster::volume::generate_dataset;

fn main() -> dense_cluster::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let dataset = generate_dataset(3, 15, [16, 16, 16], seed)?;
    let truth = dataset.true_classes().expect("phantoms carry their class");
    let net = FeatureNet::<f32>::init(Topology::proposed(), &mut rng(seed))?;

    let features = extract_features(&net, &dataset)?;
    let (pre, reduced) = Preprocessor::fit(&features, PreprocessConfig::default())?;
    println!(
        "{} subjects, {} pooled features -> {} PCA dims, explained variance {:?}",
        features.rows(),
        features.cols(),
        reduced.cols(),
        pre.pca.explained_variance().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
    );

    for n_init in [1, 10] {
        let model = kmeans(&reduced, 3, seed, KMeansConfig { n_init, ..KMeansConfig::default() })?;
        let labels = pseudo_labels(&model);
        println!(
            "n_init {n_init:2}: inertia {:.4} after {} Lloyd steps, sizes {:?}, accuracy vs classes {:.3}",
            model.inertia,
            model.inertia_trace.len(),
            model.cluster_sizes(),
            matched_accuracy(&labels, &truth, 3)?
        );
    }
    Ok(())
}
