use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Principal axes of a centered feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `P x F`, orthonormal rows, sign fixed so each row's largest-magnitude
    /// entry is positive.
    pub components: Vec<Vec<f64>>,
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    /// Number of rows the model was fit on.
    pub samples: usize,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Variance captured by each component, `s^2 / (N - 1)`.
    pub fn explained_variance(&self) -> Vec<f64> {
        let denom = (self.samples.max(2) - 1) as f64;
        self.singular_values.iter().map(|s| s * s / denom).collect()
    }

    /// Projects centered rows onto the components; with `whiten`, each
    /// coordinate is divided by its component's standard deviation
    /// (zero-variance components stay 0).
    pub fn transform(&self, rows: &FeatureMatrix, whiten: bool) -> FeatureMatrix {
        let p = self.dim();
        let scale: Vec<f64> = if whiten {
            self.explained_variance()
                .iter()
                .map(|v| if *v > 1e-24 { 1.0 / v.sqrt() } else { 0.0 })
                .collect()
        } else {
            vec![1.0; p]
        };
        let mut data = Vec::with_capacity(rows.rows() * p);
        for row in rows.iter_rows() {
            for (comp, s) in self.components.iter().zip(&scale) {
                let dot: f64 = row.iter().zip(&self.mean).zip(comp).map(|((x, m), c)| (x - m) * c).sum();
                data.push(dot * s);
            }
        }
        FeatureMatrix::new(rows.rows(), p, data).expect("projection shape")
    }

    /// Maps projected coordinates back to feature space (unwhitened input).
    pub fn inverse_transform(&self, reduced: &FeatureMatrix) -> FeatureMatrix {
        let f = self.mean.len();
        let mut data = Vec::with_capacity(reduced.rows() * f);
        for row in reduced.iter_rows() {
            for j in 0..f {
                data.push(self.mean[j] + row.iter().zip(&self.components).map(|(r, c)| r * c[j]).sum::<f64>());
            }
        }
        FeatureMatrix::new(reduced.rows(), f, data).expect("reconstruction shape")
    }
}

/// Top-`dim` right singular vectors of the column-centered matrix.
pub fn pca_fit(features: &FeatureMatrix, dim: usize) -> Result<PcaModel> {
    let (n, f) = (features.rows(), features.cols());
    if dim < 1 || dim > n.saturating_sub(1).min(f) {
        return Err(Error::InvalidParameter(format!(
            "pca dim {dim} outside [1, min(N - 1, F)] = [1, {}]",
            n.saturating_sub(1).min(f)
        )));
    }
    let mean = features.column_means();
    let centered = faer::Mat::<f64>::from_fn(n, f, |i, j| features.row(i)[j] - mean[j]);
    let svd = centered
        .thin_svd()
        .map_err(|e| Error::InvalidParameter(format!("pca: svd did not converge ({e:?})")))?;
    let sigma = svd.S().column_vector();
    let v = svd.V();
    let mut order: Vec<usize> = (0..sigma.nrows()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(dim);
    let mut singular_values = Vec::with_capacity(dim);
    for &idx in order.iter().take(dim) {
        let mut row: Vec<f64> = (0..f).map(|j| v[(j, idx)]).collect();
        let pivot = row
            .iter()
            .enumerate()
            .fold(0, |best, (j, v)| if v.abs() > row[best].abs() { j } else { best });
        if row[pivot] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(row);
        singular_values.push(sigma[idx]);
    }
    Ok(PcaModel {
        mean,
        components,
        singular_values,
        samples: n,
    })
}
