//! Trains a small proposed network for a few epochs, then renders dense
//! cluster activation maps of one apical-blob phantom as PGM slices and
//! checks that their lung mean reproduces the pooled logits.
//!
//! cargo run --release --example dcam_slices -- [out_dir] [epochs]

use dense_cluster::dcam::{compute_dcam, export_slices, Axis};
use dense_cluster::nn::masked_avg_pool;
use dense_cluster::pipeline::{train, TrainConfig};
use dense_cluster::volume::generate_dataset;

fn main() -> dense_cluster::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().cloned().unwrap_or_else(|| "dcam_slices".into());
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);

    let dataset = generate_dataset(3, 8, [16, 16, 16], 3)?;
    let config = TrainConfig { epochs, k: 3, ..TrainConfig::default() };
    let model = train(&config, &dataset, |_, _, _, _| Ok(()))?;

    let subject = dataset.subjects.iter().find(|s| s.true_class == Some(1)).expect("class 1 present");
    let dcam = compute_dcam(&model.net, &model.head, subject)?;
    let pooled = model.head.apply(&masked_avg_pool(&model.net.features(&subject.volume)?, &subject.mask)?)?;
    for (c, logit) in pooled.iter().enumerate() {
        println!("cluster {c}: lung mean of map {:+.6}, pooled logit {logit:+.6}", dcam.masked_mean(c));
    }
    let channel = dcam.assigned_cluster;
    let (top, bottom) = dcam.third_masses(channel)?;
    println!("{} assigned to cluster {channel}; activation mass top third {top:.1}, bottom third {bottom:.1}", subject.id);
    for axis in [Axis::Z, Axis::Y] {
        let paths = export_slices(&dcam, channel, axis, &out)?;
        println!("{} {axis} slices in {out}/", paths.len());
    }
    Ok(())
}
