//! Test oracles shared by the integration tests and the acceptance runner:
//! central finite differences in f64 and exhaustive enumeration.
#![allow(dead_code)]

use dense_cluster::clustering::{FeatureMatrix, KMeansModel};
use dense_cluster::dcam::compute_dcam;
use dense_cluster::nn::ops::{
    maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, trilinear_up2_backward, trilinear_up2_forward,
};
use dense_cluster::nn::{
    masked_avg_pool, masked_avg_pool_backward, softmax_xent, Conv3d, FeatureNet, Head, Tensor4, Topology,
};
use dense_cluster::seed::rng;
use dense_cluster::volume::{generate_phantom, Mask};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|)` over whole gradient vectors; 0 when both vanish.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` at `x`, every coordinate.
pub fn fd_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + FD_STEP;
            let up = f(&probe);
            probe[i] = x[i] - FD_STEP;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values at least `gap` away from zero.
pub fn away_from_zero(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(gap..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

/// Distinct values spaced 0.01 apart in random order: no pooling window has
/// a near-tie.
pub fn well_separated(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - n as f64 * 0.005).collect();
    v.shuffle(rng);
    v
}

pub fn tensor(shape: [usize; 4], data: Vec<f64>) -> Tensor4<f64> {
    Tensor4::from_vec(shape, data).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn random_mask(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Mask {
    let n = dims.iter().product();
    let mut inside: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    inside[0] = true;
    Mask::new(dims, inside).unwrap()
}

/// One gradient comparison: which quantity, and its relative error.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: String,
    pub rel_err: f64,
}

fn check(out: &mut Vec<GradCheck>, name: &str, analytic: &[f64], numeric: &[f64]) {
    out.push(GradCheck {
        name: name.to_string(),
        rel_err: rel_err(analytic, numeric),
    });
}

fn conv_checks(out: &mut Vec<GradCheck>, rng: &mut ChaCha8Rng, kernel: usize) {
    let shape = [2, 4, 4, 4];
    let c_out = 3;
    let n = shape.iter().product();
    let x = uniform(rng, n, -1.0, 1.0);
    let conv = Conv3d::from_parts(2, c_out, kernel, uniform(rng, c_out * 2 * kernel.pow(3), -0.5, 0.5), uniform(rng, c_out, -0.5, 0.5)).unwrap();
    let r = uniform(rng, c_out * 64, -1.0, 1.0);
    let loss = |conv: &Conv3d<f64>, x: &[f64]| dot(conv.forward(&tensor(shape, x.to_vec())).unwrap().data(), &r);

    let (g_in, grads) = conv.backward(&tensor(shape, x.clone()), &tensor([c_out, 4, 4, 4], r.clone()), true).unwrap();
    let fd_in = fd_gradient(&x, |p| loss(&conv, p));
    let fd_w = fd_gradient(&conv.weight, |p| {
        let mut c = conv.clone();
        c.weight.copy_from_slice(p);
        loss(&c, &x)
    });
    let fd_b = fd_gradient(&conv.bias, |p| {
        let mut c = conv.clone();
        c.bias.copy_from_slice(p);
        loss(&c, &x)
    });
    let k = format!("conv{kernel}x{kernel}x{kernel}");
    check(out, &format!("{k} input"), g_in.unwrap().data(), &fd_in);
    check(out, &format!("{k} weight"), &grads.weight, &fd_w);
    check(out, &format!("{k} bias"), &grads.bias, &fd_b);
}

fn relu_check(out: &mut Vec<GradCheck>, rng: &mut ChaCha8Rng) {
    let shape = [2, 4, 4, 4];
    let x = away_from_zero(rng, 128, 0.01);
    let r = uniform(rng, 128, -1.0, 1.0);
    let y = relu_forward(&tensor(shape, x.clone()));
    let g = relu_backward(&y, &tensor(shape, r.clone()));
    let fd = fd_gradient(&x, |p| dot(relu_forward(&tensor(shape, p.to_vec())).data(), &r));
    check(out, "relu", g.data(), &fd);
}

fn maxpool_check(out: &mut Vec<GradCheck>, rng: &mut ChaCha8Rng) {
    let shape = [2, 4, 4, 4];
    let x = well_separated(rng, 128);
    let r = uniform(rng, 16, -1.0, 1.0);
    let pooled = maxpool2_forward(&tensor(shape, x.clone())).unwrap();
    let g = maxpool2_backward(&pooled, &tensor([2, 2, 2, 2], r.clone())).unwrap();
    let fd = fd_gradient(&x, |p| dot(maxpool2_forward(&tensor(shape, p.to_vec())).unwrap().output.data(), &r));
    check(out, "maxpool", g.data(), &fd);
}

fn upsample_check(out: &mut Vec<GradCheck>, rng: &mut ChaCha8Rng) {
    let shape = [2, 2, 3, 4];
    let x = uniform(rng, 48, -1.0, 1.0);
    let r = uniform(rng, 48 * 8, -1.0, 1.0);
    let g = trilinear_up2_backward(&tensor([2, 4, 6, 8], r.clone())).unwrap();
    let fd = fd_gradient(&x, |p| dot(trilinear_up2_forward(&tensor(shape, p.to_vec())).data(), &r));
    check(out, "trilinear upsample", g.data(), &fd);
}

fn pool_check(out: &mut Vec<GradCheck>, rng: &mut ChaCha8Rng) {
    let dims = [4, 4, 4];
    let mask = random_mask(rng, dims);
    let x = uniform(rng, 3 * 64, -1.0, 1.0);
    let r = uniform(rng, 3, -1.0, 1.0);
    let g = masked_avg_pool_backward(&r, &mask);
    let fd = fd_gradient(&x, |p| dot(&masked_avg_pool(&tensor([3, 4, 4, 4], p.to_vec()), &mask).unwrap(), &r));
    check(out, "masked pooling", g.data(), &fd);
}

fn head_and_loss_checks(out: &mut Vec<GradCheck>, rng: &mut ChaCha8Rng) {
    let (f, k) = (5, 4);
    let head: Head<f64> = Head::init(f, k, rng).unwrap();
    let pooled = uniform(rng, f, -1.0, 1.0);
    let label = rng.gen_range(0..k);
    let loss = |h: &Head<f64>, p: &[f64]| softmax_xent(&h.apply(p).unwrap(), label).unwrap().0;

    let logits = head.apply(&pooled).unwrap();
    let (_, g_logits) = softmax_xent(&logits, label).unwrap();
    let fd_logits = fd_gradient(&logits, |z| softmax_xent(z, label).unwrap().0);
    check(out, "softmax cross-entropy", &g_logits, &fd_logits);

    let (g_pooled, grads) = head.backward(&pooled, &g_logits).unwrap();
    check(out, "head input", &g_pooled, &fd_gradient(&pooled, |p| loss(&head, p)));
    let fd_w = fd_gradient(&head.conv.weight, |p| {
        let mut h = head.clone();
        h.conv.weight.copy_from_slice(p);
        loss(&h, &pooled)
    });
    let fd_b = fd_gradient(&head.conv.bias, |p| {
        let mut h = head.clone();
        h.conv.bias.copy_from_slice(p);
        loss(&h, &pooled)
    });
    check(out, "head weight", &grads.weight, &fd_w);
    check(out, "head bias", &grads.bias, &fd_b);
}

/// Small proposed-style topology used for the composed check.
pub fn tiny_topology() -> Topology {
    Topology {
        levels: 2,
        base_filters: 2,
        feature_channels: 2,
        ..Topology::proposed()
    }
}

/// Loss of the full pooled route for an f64 network.
pub fn route_loss(net: &FeatureNet<f64>, head: &Head<f64>, x: &Tensor4<f64>, mask: &Mask, label: usize) -> f64 {
    let features = net.forward(x).unwrap();
    let pooled = masked_avg_pool(&features, mask).unwrap();
    softmax_xent(&head.apply(&pooled).unwrap(), label).unwrap().0
}

/// Which piece of a piecewise-linear network is active: the sign of every
/// ReLU input and the winner of every max-pool window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern {
    relu: Vec<bool>,
    pools: Vec<usize>,
}

fn relu_recorded(x: Tensor4<f64>, pattern: &mut ActivationPattern) -> Tensor4<f64> {
    pattern.relu.extend(x.data().iter().map(|&v| v > 0.0));
    relu_forward(&x)
}

/// Independent re-implementation of the network forward pass from the
/// public layer list and ops, recording the activation pattern.
pub fn reference_forward(net: &FeatureNet<f64>, x: &Tensor4<f64>) -> (Tensor4<f64>, ActivationPattern) {
    let t = *net.topology();
    let l = t.levels;
    let mut pattern = ActivationPattern {
        relu: Vec::new(),
        pools: Vec::new(),
    };
    let block = |first: usize, input: &Tensor4<f64>, relu_out: bool, pattern: &mut ActivationPattern| {
        let mid = relu_recorded(net.layers[first].forward(input).unwrap(), pattern);
        let pre = net.layers[first + 1].forward(&mid).unwrap();
        if relu_out {
            relu_recorded(pre, pattern)
        } else {
            pre
        }
    };
    let mut skips = Vec::new();
    let mut h = x.clone();
    for i in 0..l {
        let out = block(2 * i, &h, true, &mut pattern);
        let pooled = maxpool2_forward(&out).unwrap();
        pattern.pools.extend_from_slice(&pooled.argmax);
        h = pooled.output;
        skips.push(out);
    }
    h = block(2 * l, &h, t.post_activation || t.upsampling, &mut pattern);
    if t.upsampling {
        for m in 0..l {
            let up = trilinear_up2_forward(&h);
            let joined = if t.skip_connections { skips[l - 1 - m].concat(&up).unwrap() } else { up };
            h = block(2 * l + 2 + 2 * m, &joined, t.post_activation || m + 1 < l, &mut pattern);
        }
    }
    (h, pattern)
}

fn reference_loss(net: &FeatureNet<f64>, head: &Head<f64>, x: &Tensor4<f64>, mask: &Mask, label: usize) -> (f64, ActivationPattern) {
    let (features, pattern) = reference_forward(net, x);
    let pooled = masked_avg_pool(&features, mask).unwrap();
    (softmax_xent(&head.apply(&pooled).unwrap(), label).unwrap().0, pattern)
}

/// Central differences restricted to coordinates whose `+h` and `-h`
/// probes leave the activation pattern unchanged; elsewhere the function
/// is not differentiable at the probe scale and the difference quotient
/// says nothing about the derivative. Returns `(index, derivative)` pairs
/// and the number of coordinates skipped.
fn fd_on_smooth_piece(
    x: &[f64],
    indices: &[usize],
    base: &ActivationPattern,
    mut f: impl FnMut(&[f64]) -> (f64, ActivationPattern),
) -> (Vec<(usize, f64)>, usize) {
    let mut probe = x.to_vec();
    let mut kept = Vec::new();
    let mut skipped = 0;
    for &i in indices {
        probe[i] = x[i] + FD_STEP;
        let (up, p_up) = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let (down, p_down) = f(&probe);
        probe[i] = x[i];
        if &p_up == base && &p_down == base {
            kept.push((i, (up - down) / (2.0 * FD_STEP)));
        } else {
            skipped += 1;
        }
    }
    (kept, skipped)
}

fn sample_indices(rng: &mut ChaCha8Rng, n: usize, max: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    if n > max {
        all.shuffle(rng);
        all.truncate(max);
        all.sort_unstable();
    }
    all
}

/// Coordinates compared and skipped in the composed-network check.
#[derive(Debug, Clone, Copy, Default)]
pub struct CoverageCount {
    pub compared: usize,
    pub skipped: usize,
}

fn composed_checks(out: &mut Vec<GradCheck>, coverage: &mut CoverageCount, rng: &mut ChaCha8Rng) {
    let dims = [8, 8, 8];
    let shape = [1, 8, 8, 8];
    let mut net: FeatureNet<f64> = FeatureNet::init(tiny_topology(), rng).unwrap();
    let head: Head<f64> = Head::init(2, 3, rng).unwrap();
    let x = tensor(shape, uniform(rng, 512, 0.0, 1.0));
    let mask = random_mask(rng, dims);
    let label = rng.gen_range(0..3);

    let (features, cache) = net.forward_train(&x).unwrap();
    let (reference, base) = reference_forward(&net, &x);
    check(out, "network forward (reference)", features.data(), reference.data());

    let pooled = masked_avg_pool(&features, &mask).unwrap();
    let (_, g_logits) = softmax_xent(&head.apply(&pooled).unwrap(), label).unwrap();
    let (g_pooled, _) = head.backward(&pooled, &g_logits).unwrap();
    let g_features = masked_avg_pool_backward(&g_pooled, &mask);
    let (grads, g_input) = net.backward_with_input(&cache, &g_features, true).unwrap();
    let g_input = g_input.unwrap();

    let mut compare = |name: &str, analytic: &[f64], numeric: Vec<(usize, f64)>, skipped: usize, out: &mut Vec<GradCheck>| {
        coverage.compared += numeric.len();
        coverage.skipped += skipped;
        let a: Vec<f64> = numeric.iter().map(|&(i, _)| analytic[i]).collect();
        let n: Vec<f64> = numeric.iter().map(|&(_, v)| v).collect();
        check(out, name, &a, &n);
    };

    let idx = sample_indices(rng, 512, 96);
    let (numeric, skipped) = fd_on_smooth_piece(x.data(), &idx, &base, |p| {
        reference_loss(&net, &head, &tensor(shape, p.to_vec()), &mask, label)
    });
    compare("network input", g_input.data(), numeric, skipped, out);

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut skipped_params = 0;
    for i in 0..net.layers.len() {
        for bias in [false, true] {
            let values = if bias { net.layers[i].bias.clone() } else { net.layers[i].weight.clone() };
            let grad = if bias { &grads[i].bias } else { &grads[i].weight };
            let idx = sample_indices(rng, values.len(), 24);
            let (kept, skipped) = fd_on_smooth_piece(&values, &idx, &base, |p| {
                if bias {
                    net.layers[i].bias.copy_from_slice(p);
                } else {
                    net.layers[i].weight.copy_from_slice(p);
                }
                reference_loss(&net, &head, &x, &mask, label)
            });
            if bias {
                net.layers[i].bias.copy_from_slice(&values);
            } else {
                net.layers[i].weight.copy_from_slice(&values);
            }
            skipped_params += skipped;
            let offset = analytic.len();
            analytic.extend_from_slice(grad);
            numeric.extend(kept.into_iter().map(|(j, v)| (offset + j, v)));
        }
    }
    compare("network parameters", &analytic, numeric, skipped_params, out);
}

/// Every gradient comparison for one seeded random instance.
pub fn gradient_suite(seed: u64) -> (Vec<GradCheck>, CoverageCount) {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    let mut coverage = CoverageCount::default();
    conv_checks(&mut out, &mut rng, 3);
    conv_checks(&mut out, &mut rng, 1);
    relu_check(&mut out, &mut rng);
    maxpool_check(&mut out, &mut rng);
    upsample_check(&mut out, &mut rng);
    pool_check(&mut out, &mut rng);
    head_and_loss_checks(&mut out, &mut rng);
    composed_checks(&mut out, &mut coverage, &mut rng);
    (out, coverage)
}

/// Smallest sum of squared deviations over all 2-partitions of a 1-D set.
pub fn best_two_partition_inertia(points: &[f64]) -> f64 {
    let n = points.len();
    let sse = |members: &[f64]| {
        let mean = members.iter().sum::<f64>() / members.len() as f64;
        members.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
    };
    let mut best = f64::INFINITY;
    for bits in 1..(1u32 << n) - 1 {
        let (a, b): (Vec<f64>, Vec<f64>) = {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (i, &p) in points.iter().enumerate() {
                if bits >> i & 1 == 1 {
                    a.push(p);
                } else {
                    b.push(p);
                }
            }
            (a, b)
        };
        best = best.min(sse(&a) + sse(&b));
    }
    best
}

/// Best matched count over every permutation of `0..k`.
pub fn brute_force_accuracy(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let hits = pred.iter().zip(truth).filter(|(&a, &b)| p[a] == b).count();
        best = best.max(hits);
    });
    best as f64 / pred.len() as f64
}

fn permute(v: &mut Vec<usize>, i: usize, visit: &mut impl FnMut(&[usize])) {
    if i == v.len() {
        visit(v);
        return;
    }
    for j in i..v.len() {
        v.swap(i, j);
        permute(v, i + 1, visit);
        v.swap(i, j);
    }
}

/// Lloyd fixed point: every point sits with a nearest centroid and every
/// centroid is the mean of its points.
pub fn locally_optimal(points: &FeatureMatrix, model: &KMeansModel) -> bool {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    for (p, &a) in points.iter_rows().zip(&model.assignments) {
        let own = sq(p, &model.centroids[a]);
        if model.centroids.iter().any(|c| sq(p, c) < own - 1e-12) {
            return false;
        }
    }
    for (c, centroid) in model.centroids.iter().enumerate() {
        let members: Vec<&[f64]> = points
            .iter_rows()
            .zip(&model.assignments)
            .filter(|(_, &a)| a == c)
            .map(|(p, _)| p)
            .collect();
        for (j, &v) in centroid.iter().enumerate() {
            let mean = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            if (mean - v).abs() > 1e-12 {
                return false;
            }
        }
    }
    true
}

pub fn line(values: &[f64]) -> FeatureMatrix {
    FeatureMatrix::new(values.len(), 1, values.to_vec()).unwrap()
}

/// Worst relative gap, over all channels, between the lung-masked mean of a
/// dense map and the logits of the pooled route, for a random full-size
/// proposed network in f64 on one phantom.
pub fn dcam_consistency_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let net = FeatureNet::<f64>::init(Topology::proposed(), &mut r).unwrap();
    let head = Head::<f64>::from_parts(
        net.feature_channels(),
        6,
        uniform(&mut r, 6 * net.feature_channels(), -1.0, 1.0),
        uniform(&mut r, 6, -0.5, 0.5),
    )
    .unwrap();
    let subject = generate_phantom((seed % 6) as usize, [16, 16, 16], seed).unwrap();
    let dcam = compute_dcam(&net, &head, &subject).unwrap();
    let features = net.features(&subject.volume).unwrap();
    let pooled = head.apply(&masked_avg_pool(&features, &subject.mask).unwrap()).unwrap();
    (0..dcam.k())
        .map(|c| (dcam.masked_mean(c) - pooled[c]).abs() / pooled[c].abs().max(1e-12))
        .fold(0.0, f64::max)
}
