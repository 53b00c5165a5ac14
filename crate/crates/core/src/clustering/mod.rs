//! Feature preprocessing and k-means pseudo-labelling.

mod kmeans;
mod pca;

pub use kmeans::{assign_nearest, kmeans, kmeans_single, pseudo_labels, KMeansConfig, KMeansModel};
pub use pca::{pca_fit, PcaModel};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviations at or below this are treated as constant columns.
pub const STD_EPSILON: f64 = 1e-8;

/// Dense row-major `N x F` matrix of per-subject feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("feature matrix has non-finite entries".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.rows as f64);
        mean
    }

    /// CSV dump with an optional trailing label column.
    pub fn write_csv(&self, path: impl AsRef<Path>, labels: Option<&[usize]>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        let mut header: Vec<String> = (0..self.cols).map(|j| format!("f{j}")).collect();
        if labels.is_some() {
            header.push("label".into());
        }
        writeln!(out, "{}", header.join(",")).expect("write to vec");
        for (i, row) in self.iter_rows().enumerate() {
            let mut fields: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            if let Some(l) = labels {
                fields.push(l[i].to_string());
            }
            writeln!(out, "{}", fields.join(",")).expect("write to vec");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Per-column statistics removed by [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub mean: Vec<f64>,
    /// Population standard deviation per column.
    pub std: Vec<f64>,
}

impl Scaling {
    pub fn apply(&self, features: &FeatureMatrix) -> FeatureMatrix {
        let mut out = features.clone();
        for i in 0..out.rows {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = if self.std[j] > STD_EPSILON { (*v - self.mean[j]) / self.std[j] } else { 0.0 };
            }
        }
        out
    }
}

/// Column-wise zero mean, unit population std. Constant columns become 0.
pub fn standardize(features: &FeatureMatrix) -> Result<(FeatureMatrix, Scaling)> {
    if features.rows < 2 {
        return Err(Error::InvalidParameter("standardize needs at least 2 rows".into()));
    }
    let mean = features.column_means();
    let mut var = vec![0.0; features.cols];
    for row in features.iter_rows() {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / features.rows as f64).sqrt()).collect();
    let scaling = Scaling { mean, std };
    Ok((scaling.apply(features), scaling))
}

/// Scales each nonzero row to unit Euclidean norm; zero rows stay zero.
pub fn l2_row_normalize(features: &FeatureMatrix) -> FeatureMatrix {
    let mut out = features.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// How pooled features are turned into k-means input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub standardize: bool,
    /// Upper bound on the PCA dimension; the effective value is
    /// `min(N - 1, F, pca_dim)`.
    pub pca_dim: usize,
    pub whiten: bool,
    pub l2_normalize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            standardize: true,
            pca_dim: 32,
            whiten: false,
            l2_normalize: true,
        }
    }
}

/// Fitted preprocessing chain, reusable on new rows.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub config: PreprocessConfig,
    pub scaling: Option<Scaling>,
    pub pca: PcaModel,
}

impl Preprocessor {
    pub fn fit(features: &FeatureMatrix, config: PreprocessConfig) -> Result<(Self, FeatureMatrix)> {
        let (scaled, scaling) = if config.standardize {
            let (s, sc) = standardize(features)?;
            (s, Some(sc))
        } else {
            (features.clone(), None)
        };
        let dim = config.pca_dim.min(features.rows.saturating_sub(1)).min(features.cols);
        let pca = pca_fit(&scaled, dim)?;
        let pre = Self { config, scaling, pca };
        let reduced = pre.finish(&scaled);
        Ok((pre, reduced))
    }

    pub fn transform(&self, features: &FeatureMatrix) -> FeatureMatrix {
        let scaled = match &self.scaling {
            Some(s) => s.apply(features),
            None => features.clone(),
        };
        self.finish(&scaled)
    }

    fn finish(&self, scaled: &FeatureMatrix) -> FeatureMatrix {
        let projected = self.pca.transform(scaled, self.config.whiten);
        if self.config.l2_normalize {
            l2_row_normalize(&projected)
        } else {
            projected
        }
    }
}
