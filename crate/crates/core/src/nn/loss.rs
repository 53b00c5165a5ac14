use super::Scalar;
use crate::error::{Error, Result};

/// Multinomial logistic loss `-log softmax(logits)[label]` and its gradient
/// `softmax - one_hot(label)`. Uses max subtraction.
pub fn softmax_xent<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    let k = logits.len();
    if label >= k {
        return Err(Error::LabelOutOfRange { label, k });
    }
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &e| a + e);
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<T> = exps.iter().map(|&e| e / sum).collect();
    grad[label] -= T::one();
    Ok((loss, grad))
}
