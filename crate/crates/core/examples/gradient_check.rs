//! Checks backpropagation through the whole classification route (U-Net,
//! lung pooling, linear head, softmax cross-entropy) against central finite
//! differences in double precision.
//!
//! cargo run --release --example gradient_check -- [seed]

use dense_cluster::nn::{masked_avg_pool, masked_avg_pool_backward, softmax_xent, FeatureNet, Head, Tensor4, Topology};
use dense_cluster::seed::rng;
use dense_cluster::volume::generate_phantom;
use rand::Rng;

fn loss(net: &FeatureNet<f64>, head: &Head<f64>, x: &Tensor4<f64>, mask: &dense_cluster::volume::Mask) -> f64 {
    let features = net.forward(x).unwrap();
    let logits = head.apply(&masked_avg_pool(&features, mask).unwrap()).unwrap();
    softmax_xent(&logits, 1).unwrap().0
}

fn main() -> dense_cluster::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let topology = Topology {
        levels: 2,
        base_filters: 2,
        feature_channels: 2,
        ..Topology::proposed()
    };
    let mut r = rng(seed);
    let mut net = FeatureNet::<f64>::init(topology, &mut r)?;
    let head = Head::<f64>::init(2, 3, &mut r)?;
    let subject = generate_phantom(1, [8, 8, 8], seed)?;
    let x: Tensor4<f64> = Tensor4::<f32>::from_volume(&subject.volume).cast();

    let (features, cache) = net.forward_train(&x)?;
    let pooled = masked_avg_pool(&features, &subject.mask)?;
    let (_, grad_logits) = softmax_xent(&head.apply(&pooled)?, 1)?;
    let (grad_pooled, _) = head.backward(&pooled, &grad_logits)?;
    let grads = net.backward(&cache, &masked_avg_pool_backward(&grad_pooled, &subject.mask))?;

    let h = 1e-5;
    let mut worst = 0f64;
    for layer in 0..net.layers.len() {
        for _ in 0..3 {
            let i = r.gen_range(0..net.layers[layer].weight.len());
            let original = net.layers[layer].weight[i];
            net.layers[layer].weight[i] = original + h;
            let up = loss(&net, &head, &x, &subject.mask);
            net.layers[layer].weight[i] = original - h;
            let down = loss(&net, &head, &x, &subject.mask);
            net.layers[layer].weight[i] = original;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[layer].weight[i];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
            worst = worst.max(rel);
            println!("layer {layer:2} weight {i:4}: analytic {analytic:+.6e}  numeric {numeric:+.6e}  rel {rel:.1e}");
        }
    }
    // a probe straddling a ReLU or max-pool switch can disagree; the test
    // suite excludes those, this example just shows them
    println!("worst relative error {worst:.2e}");
    Ok(())
}
