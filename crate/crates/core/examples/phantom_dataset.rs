//! Generates a synthetic phantom dataset, writes it to disk and reads it
//! back, printing per-class intensity statistics inside the lung mask.
//!
//! cargo run --release --example phantom_dataset -- [out_dir] [classes] [per_class]

use dense_cluster::volume::{generate_dataset, load_manifest, masked_mean, save_dataset, PhantomClass};

fn main() -> dense_cluster::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().cloned().unwrap_or_else(|| "phantoms".into());
    let classes = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let per_class = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);

    let dataset = generate_dataset(classes, per_class, [16, 16, 16], 7)?;
    save_dataset(&dataset, &out)?;
    let reloaded = load_manifest(&out)?;
    assert_eq!(reloaded, dataset);
    println!("{} subjects written to {out}/ and reloaded", reloaded.len());

    for class in 0..classes {
        let members: Vec<_> = reloaded.subjects.iter().filter(|s| s.true_class == Some(class)).collect();
        let means: Vec<f64> = members.iter().map(|s| masked_mean(&s.volume, &s.mask)).collect::<Result<_, _>>()?;
        let lung = members[0].mask.count() as f64 / members[0].mask.as_slice().len() as f64;
        println!(
            "class {class} {:<15} lung fraction {:.2}  masked mean {:.3} .. {:.3}",
            format!("{:?}", PhantomClass::from_id(class)?),
            lung,
            means.iter().copied().fold(f64::INFINITY, f64::min),
            means.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
    }
    Ok(())
}
