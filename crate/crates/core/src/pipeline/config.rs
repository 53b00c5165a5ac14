use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{KMeansConfig, PreprocessConfig};
use crate::error::{Error, Result};
use crate::nn::{Topology, Variant};
use crate::seed::Seeds;

/// Hyperparameters of one training run. Unknown keys are rejected when
/// parsed from JSON; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// SGD steps in each epoch's classifier phase; `None` means
    /// `3 * ceil(N / batch_size)`.
    pub classifier_steps_per_epoch: Option<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Upper bound on the PCA dimension.
    pub pca_dim: usize,
    /// Number of k-means clusters and head outputs.
    pub k: usize,
    pub seeds: Seeds,
    pub variant: Variant,
    /// Overrides the variant's default topology.
    pub topology: Option<Topology>,
    /// Draw batches by first picking a pseudo-class uniformly.
    pub uniform_sampling: bool,
    pub standardize: bool,
    pub whiten: bool,
    pub l2_normalize: bool,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    /// k-means++ starts per epoch. One start keeps pseudo-labels from
    /// chasing the lowest-inertia split, which tends to isolate outliers.
    pub kmeans_n_init: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            classifier_steps_per_epoch: None,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 4,
            pca_dim: 32,
            k: 6,
            seeds: Seeds::default(),
            variant: Variant::Proposed,
            topology: None,
            uniform_sampling: true,
            standardize: true,
            whiten: false,
            l2_normalize: true,
            kmeans_max_iter: KMeansConfig::default().max_iter,
            kmeans_tol: KMeansConfig::default().tol,
            kmeans_n_init: 1,
        }
    }
}

impl TrainConfig {
    pub fn topology(&self) -> Topology {
        self.topology.unwrap_or_else(|| self.variant.topology())
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            standardize: self.standardize,
            pca_dim: self.pca_dim,
            whiten: self.whiten,
            l2_normalize: self.l2_normalize,
        }
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            max_iter: self.kmeans_max_iter,
            tol: self.kmeans_tol,
            n_init: self.kmeans_n_init,
        }
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        self.classifier_steps_per_epoch
            .unwrap_or_else(|| 3 * n.div_ceil(self.batch_size.max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k = {} must be at least 2", self.k)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate = {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum = {} must be in [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.kmeans_n_init == 0 {
            return Err(Error::Config("kmeans_n_init must be at least 1".into()));
        }
        if self.pca_dim == 0 {
            return Err(Error::Config("pca_dim must be at least 1".into()));
        }
        self.topology().validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
