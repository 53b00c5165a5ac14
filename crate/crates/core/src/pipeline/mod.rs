//! The alternating clustering / classification training loop.
//!
//! Each epoch:
//! 1. pooled features for every subject with the network frozen,
//! 2. standardize, PCA and row-normalize,
//! 3. k-means pseudo-labels,
//! 4. a freshly drawn head,
//! 5. momentum SGD on network and head against the pseudo-labels.

mod config;
mod log;

pub use self::config::TrainConfig;
pub use self::log::{epochs_csv, write_epochs_csv, EpochLog, EPOCHS_HEADER};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::clustering::{kmeans, pseudo_labels, FeatureMatrix, KMeansConfig, PreprocessConfig, Preprocessor};
use crate::error::{Error, Result};
use crate::evaluation::{self, MetricsReport};
use crate::nn::{
    mask_at_stride, masked_avg_pool, masked_avg_pool_backward, param_buffers_mut, softmax_xent, FeatureNet, GradientSet,
    Head, Sgd, Tensor4,
};
use crate::seed::{derive_seed, rng, stream_rng};
use crate::volume::{Dataset, Mask};

/// Lung masks reduced to the network's feature resolution.
pub fn feature_masks(net: &FeatureNet<f32>, dataset: &Dataset) -> Result<Vec<Mask>> {
    let stride = net.topology().output_stride();
    dataset
        .subjects
        .iter()
        .map(|s| mask_at_stride(&s.mask, stride))
        .collect()
}

/// Lung-pooled features of every subject, one row per subject in dataset
/// order. Takes the network by shared reference: parameters cannot change.
pub fn extract_features(net: &FeatureNet<f32>, dataset: &Dataset) -> Result<FeatureMatrix> {
    let masks = feature_masks(net, dataset)?;
    extract_with_masks(net, dataset, &masks)
}

fn extract_with_masks(net: &FeatureNet<f32>, dataset: &Dataset, masks: &[Mask]) -> Result<FeatureMatrix> {
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    let rows: Vec<Vec<f64>> = dataset
        .subjects
        .par_iter()
        .zip(masks.par_iter())
        .map(|(s, m)| {
            let features = net.features(&s.volume)?;
            Ok(masked_avg_pool(&features, m)?.into_iter().map(f64::from).collect())
        })
        .collect::<Result<_>>()?;
    FeatureMatrix::from_rows(&rows)
}

/// Per-subject weights of the classifier objective: equal per pseudo-class
/// under uniform class sampling, equal per subject otherwise. Sums to 1.
pub fn loss_weights(labels: &[usize], uniform_sampling: bool) -> Vec<f64> {
    let n = labels.len();
    if !uniform_sampling {
        return vec![1.0 / n as f64; n];
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let present = sizes.iter().filter(|&&s| s > 0).count() as f64;
    labels.iter().map(|&l| 1.0 / (present * sizes[l] as f64)).collect()
}

fn weighted_loss(head: &Head<f32>, features: &FeatureMatrix, labels: &[usize], weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for ((row, &y), &w) in features.iter_rows().zip(labels).zip(weights) {
        let pooled: Vec<f32> = row.iter().map(|&v| v as f32).collect();
        let (loss, _) = softmax_xent(&head.apply(&pooled)?, y)?;
        total += w * loss as f64;
    }
    Ok(total)
}

/// Classification objective of `(net, head)` over the whole dataset,
/// weighted by [`loss_weights`].
pub fn dataset_loss(
    net: &FeatureNet<f32>,
    head: &Head<f32>,
    dataset: &Dataset,
    labels: &[usize],
    uniform_sampling: bool,
) -> Result<f64> {
    weighted_loss(head, &extract_features(net, dataset)?, labels, &loss_weights(labels, uniform_sampling))
}

/// Loss and parameter gradients for one subject.
pub fn subject_gradients(
    net: &FeatureNet<f32>,
    head: &Head<f32>,
    input: &Tensor4<f32>,
    mask: &Mask,
    label: usize,
) -> Result<(f32, GradientSet<f32>)> {
    let (features, cache) = net.forward_train(input)?;
    let pooled = masked_avg_pool(&features, mask)?;
    let logits = head.apply(&pooled)?;
    let (loss, grad_logits) = softmax_xent(&logits, label)?;
    let (grad_pooled, head_grads) = head.backward(&pooled, &grad_logits)?;
    let grad_features = masked_avg_pool_backward(&grad_pooled, mask);
    let net_grads = net.backward(&cache, &grad_features)?;
    Ok((
        loss,
        GradientSet {
            net: net_grads,
            head: head_grads,
        },
    ))
}

/// Batch index stream for the classifier phase.
struct Sampler {
    rng: rand_chacha::ChaCha8Rng,
    by_label: Vec<Vec<usize>>,
    uniform: bool,
    order: Vec<usize>,
    cursor: usize,
}

impl Sampler {
    fn new(labels: &[usize], k: usize, uniform: bool, seed: u64) -> Self {
        let mut by_label = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            by_label[l].push(i);
        }
        by_label.retain(|members| !members.is_empty());
        Self {
            rng: rng(seed),
            by_label,
            uniform,
            order: (0..labels.len()).collect(),
            cursor: labels.len(),
        }
    }

    fn next(&mut self) -> usize {
        if self.uniform {
            let members = &self.by_label[self.rng.gen_range(0..self.by_label.len())];
            return members[self.rng.gen_range(0..members.len())];
        }
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    fn batch(&mut self, size: usize) -> Vec<usize> {
        (0..size).map(|_| self.next()).collect()
    }
}

/// Fraction of subjects whose label changed, after matching the two
/// labelings one-to-one (cluster ids themselves are arbitrary per epoch).
/// The first epoch, with nothing to compare against, reports 1.
pub fn label_change_fraction(prev: Option<&[usize]>, labels: &[usize], k: usize) -> Result<f64> {
    match prev {
        None => Ok(1.0),
        Some(p) => Ok(1.0 - evaluation::matched_accuracy(labels, p, k)?),
    }
}

/// Head used before the first epoch and re-drawn at the start of each one.
pub fn init_head(config: &TrainConfig, features: usize, epoch: usize) -> Result<Head<f32>> {
    Head::init(features, config.k, &mut stream_rng(config.seeds.head, epoch as u64))
}

pub fn init_net(config: &TrainConfig) -> Result<FeatureNet<f32>> {
    FeatureNet::init(config.topology(), &mut rng(config.seeds.net))
}

/// What one epoch produced.
#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub log: EpochLog,
    pub labels: Vec<usize>,
    /// Head parameters right after the reset, before any SGD step.
    pub head_at_reset: Head<f32>,
}

/// Runs epoch `epoch` (1-based). Replaces `head` with a fresh draw, then
/// trains `net` and `head` in place.
pub fn run_epoch(
    net: &mut FeatureNet<f32>,
    head: &mut Head<f32>,
    dataset: &Dataset,
    config: &TrainConfig,
    epoch: usize,
    prev_labels: Option<&[usize]>,
) -> Result<EpochOutcome> {
    config.validate()?;
    let n = dataset.len();
    if n < config.k {
        return Err(Error::InvalidParameter(format!("{n} subjects cannot fill k = {} clusters", config.k)));
    }
    let masks = feature_masks(net, dataset)?;

    let features = extract_with_masks(net, dataset, &masks)?;
    let (_, reduced) = Preprocessor::fit(&features, config.preprocess())?;
    let clusters = kmeans(&reduced, config.k, derive_seed(config.seeds.kmeans, epoch as u64), config.kmeans())?;
    let labels = pseudo_labels(&clusters);

    *head = init_head(config, net.feature_channels(), epoch)?;
    let head_at_reset = head.clone();
    let weights = loss_weights(&labels, config.uniform_sampling);
    let loss_start = weighted_loss(head, &features, &labels, &weights)?;

    let inputs: Vec<Tensor4<f32>> = dataset.subjects.iter().map(|s| Tensor4::from_volume(&s.volume)).collect();
    let mut sampler = Sampler::new(&labels, config.k, config.uniform_sampling, derive_seed(config.seeds.sampler, epoch as u64));
    let mut optimizer = Sgd::new(config.learning_rate as f32, config.momentum as f32);
    let steps = config.steps_per_epoch(n);
    for _ in 0..steps {
        let batch = sampler.batch(config.batch_size);
        let per_subject: Vec<GradientSet<f32>> = batch
            .par_iter()
            .map(|&i| subject_gradients(net, head, &inputs[i], &masks[i], labels[i]).map(|(_, g)| g))
            .collect::<Result<_>>()?;
        let mut total = GradientSet::zeros(net, head);
        for g in &per_subject {
            total.add_assign(g);
        }
        total.scale(1.0 / batch.len() as f32);
        optimizer.step(param_buffers_mut(net, head), total.buffers())?;
    }

    let loss_end = weighted_loss(head, &extract_with_masks(net, dataset, &masks)?, &labels, &weights)?;
    let loss_increased = loss_end > loss_start + 1e-6;
    if loss_increased {
        ::log::warn!("epoch {epoch}: classifier loss rose from {loss_start:.6} to {loss_end:.6}");
    }
    let log = EpochLog {
        epoch,
        inertia: clusters.inertia,
        histogram: clusters.cluster_sizes(),
        loss_start,
        loss_end,
        label_change: label_change_fraction(prev_labels, &labels, config.k)?,
        loss_increased,
    };
    Ok(EpochOutcome {
        log,
        labels,
        head_at_reset,
    })
}

/// Final models and per-epoch logs of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: FeatureNet<f32>,
    pub head: Head<f32>,
    pub logs: Vec<EpochLog>,
    pub labels: Option<Vec<usize>>,
}

/// Trains for `config.epochs` epochs. `on_epoch` sees the models after
/// initialization (epoch 0, no log) and after every epoch.
pub fn train<F>(config: &TrainConfig, dataset: &Dataset, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &FeatureNet<f32>, &Head<f32>, Option<&EpochLog>) -> Result<()>,
{
    config.validate()?;
    let mut net = init_net(config)?;
    if let Some(dims) = dataset.dims() {
        net.check_input_dims(dims)?;
    }
    let mut head = init_head(config, net.feature_channels(), 0)?;
    on_epoch(0, &net, &head, None)?;
    let mut logs = Vec::with_capacity(config.epochs);
    let mut labels: Option<Vec<usize>> = None;
    for epoch in 1..=config.epochs {
        let outcome = run_epoch(&mut net, &mut head, dataset, config, epoch, labels.as_deref())?;
        ::log::info!(
            "epoch {epoch}: inertia {:.4}, loss {:.4} -> {:.4}, change {:.3}",
            outcome.log.inertia,
            outcome.log.loss_start,
            outcome.log.loss_end,
            outcome.log.label_change
        );
        on_epoch(epoch, &net, &head, Some(&outcome.log))?;
        logs.push(outcome.log);
        labels = Some(outcome.labels);
    }
    Ok(TrainOutcome { net, head, logs, labels })
}

/// Clustering of a dataset with a frozen network, scored against the
/// dataset's true classes.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Metrics in the reduced space k-means clustered in.
    pub report: MetricsReport,
    /// Silhouette and Davies-Bouldin on the raw pooled features.
    pub raw_report: MetricsReport,
    pub labels: Vec<usize>,
    pub features: FeatureMatrix,
    pub reduced: FeatureMatrix,
}

pub fn evaluate(
    net: &FeatureNet<f32>,
    dataset: &Dataset,
    k: usize,
    preprocess: PreprocessConfig,
    kmeans_config: KMeansConfig,
    seed: u64,
    method: &str,
) -> Result<Evaluation> {
    let truth = dataset
        .true_classes()
        .ok_or_else(|| Error::InvalidParameter("evaluation needs a true class for every subject".into()))?;
    let features = extract_features(net, dataset)?;
    let (_, reduced) = Preprocessor::fit(&features, preprocess)?;
    let clusters = kmeans(&reduced, k, seed, kmeans_config)?;
    let labels = pseudo_labels(&clusters);
    let k_score = k.max(dataset.k_true);
    let report = evaluation::report(method, &labels, &truth, k_score, &reduced)?;
    let raw_report = evaluation::report(method, &labels, &truth, k_score, &features)?;
    Ok(Evaluation {
        report,
        raw_report,
        labels,
        features,
        reduced,
    })
}
