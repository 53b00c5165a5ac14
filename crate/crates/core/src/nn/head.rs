use rand::Rng;

use super::{Conv3d, ConvGrads, Scalar, Tensor4};
use crate::error::{Error, Result};

/// Cluster classifier: a 1x1x1 convolution with bias from `F` feature
/// channels to `k` logits. On a pooled feature vector it is the affine map
/// `W x + b`; on a dense feature map it yields one logit volume per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub conv: Conv3d<T>,
}

impl<T: Scalar> Head<T> {
    pub fn init<R: Rng>(features: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("head needs k >= 2, got {k}")));
        }
        Ok(Self {
            conv: Conv3d::init(features, k, 1, rng),
        })
    }

    pub fn from_parts(features: usize, k: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("head needs k >= 2, got {k}")));
        }
        Ok(Self {
            conv: Conv3d::from_parts(features, k, 1, weight, bias)?,
        })
    }

    pub fn k(&self) -> usize {
        self.conv.c_out()
    }

    pub fn features(&self) -> usize {
        self.conv.c_in()
    }

    /// Logits for a pooled feature vector.
    pub fn apply(&self, pooled: &[T]) -> Result<Vec<T>> {
        let f = self.features();
        if pooled.len() != f {
            return Err(Error::Shape(format!("head expects {f} features, got {}", pooled.len())));
        }
        Ok(self
            .conv
            .weight
            .chunks_exact(f)
            .zip(&self.conv.bias)
            .map(|(row, &b)| row.iter().zip(pooled).fold(b, |acc, (&w, &x)| acc + w * x))
            .collect())
    }

    /// Per-voxel logits for a dense feature map.
    pub fn apply_dense(&self, features: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.conv.forward(features)
    }

    /// Returns `(grad_pooled, grads)` for a gradient on the logits.
    pub fn backward(&self, pooled: &[T], grad_logits: &[T]) -> Result<(Vec<T>, ConvGrads<T>)> {
        let (f, k) = (self.features(), self.k());
        if pooled.len() != f || grad_logits.len() != k {
            return Err(Error::Shape(format!(
                "head backward: {} features / {} logit grads for {f}x{k} head",
                pooled.len(),
                grad_logits.len()
            )));
        }
        let mut grads = ConvGrads::zeros_like(&self.conv);
        let mut grad_pooled = vec![T::zero(); f];
        for (c, &g) in grad_logits.iter().enumerate() {
            grads.bias[c] = g;
            let row = &self.conv.weight[c * f..(c + 1) * f];
            for j in 0..f {
                grads.weight[c * f + j] = g * pooled[j];
                grad_pooled[j] += row[j] * g;
            }
        }
        Ok((grad_pooled, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    #[test]
    fn identity_weights() {
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let head = Head::from_parts(3, 3, w, vec![0.0; 3]).unwrap();
        assert_eq!(head.apply(&[0.2, -1.0, 4.0]).unwrap(), vec![0.2, -1.0, 4.0]);
    }

    #[test]
    fn zero_weights_give_bias() {
        let head = Head::from_parts(4, 2, vec![0.0; 8], vec![1.5, -2.0]).unwrap();
        assert_eq!(head.apply(&[9.0, 9.0, 9.0, 9.0]).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn ones_row() {
        let mut w = vec![0.0; 8];
        w[..4].fill(1.0);
        let head = Head::from_parts(4, 2, w, vec![0.0; 2]).unwrap();
        assert_eq!(head.apply(&[0.5; 4]).unwrap()[0], 2.0);
    }

    #[test]
    fn length_mismatch() {
        let head = Head::<f64>::init(4, 3, &mut rng(0)).unwrap();
        assert!(head.apply(&[1.0, 2.0]).is_err());
        assert!(Head::<f64>::init(4, 1, &mut rng(0)).is_err());
    }

    #[test]
    fn dense_matches_pointwise() {
        let head = Head::<f64>::init(3, 2, &mut rng(5)).unwrap();
        let feats = Tensor4::from_vec([3, 1, 2, 2], (0..12).map(|v| v as f64 * 0.1).collect()).unwrap();
        let dense = head.apply_dense(&feats).unwrap();
        for v in 0..4 {
            let x: Vec<f64> = (0..3).map(|c| feats.channel(c)[v]).collect();
            let l = head.apply(&x).unwrap();
            for c in 0..2 {
                assert!((dense.channel(c)[v] - l[c]).abs() < 1e-12);
            }
        }
    }
}
