use super::{ConvGrads, FeatureNet, Head, NetGrads, Scalar};
use crate::error::{Error, Result};

/// One gradient buffer per parameter buffer of a (network, head) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    pub net: NetGrads<T>,
    pub head: ConvGrads<T>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros(net: &FeatureNet<T>, head: &Head<T>) -> Self {
        Self {
            net: net.layers.iter().map(ConvGrads::zeros_like).collect(),
            head: ConvGrads::zeros_like(&head.conv),
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet<T>) {
        for (a, b) in self.net.iter_mut().zip(&other.net) {
            a.add_assign(b);
        }
        self.head.add_assign(&other.head);
    }

    pub fn scale(&mut self, s: T) {
        self.net.iter_mut().for_each(|g| g.scale(s));
        self.head.scale(s);
    }

    /// Buffers in declaration order: each layer's weight then bias, head last.
    pub fn buffers(&self) -> Vec<&[T]> {
        self.net
            .iter()
            .chain(std::iter::once(&self.head))
            .flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()])
            .collect()
    }
}

/// Mutable parameter buffers in the same order as [`GradientSet::buffers`].
pub fn param_buffers_mut<'a, T: Scalar>(net: &'a mut FeatureNet<T>, head: &'a mut Head<T>) -> Vec<&'a mut [T]> {
    net.layers
        .iter_mut()
        .chain(std::iter::once(&mut head.conv))
        .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
        .collect()
}

pub fn param_buffers<'a, T: Scalar>(net: &'a FeatureNet<T>, head: &'a Head<T>) -> Vec<&'a [T]> {
    net.layers
        .iter()
        .chain(std::iter::once(&head.conv))
        .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
        .collect()
}

/// Momentum SGD on one buffer: `v = momentum * v + g; p = p - lr * v`.
pub fn sgd_step<T: Scalar>(params: &mut [T], grads: &[T], velocity: &mut [T], lr: T, momentum: T) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Shape(format!(
            "sgd buffers: {} params, {} grads, {} velocity",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub lr: T,
    pub momentum: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(lr: T, momentum: T) -> Self {
        Self {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!("{} param buffers vs {} grad buffers", params.len(), grads.len())));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        for ((p, g), v) in params.into_iter().zip(grads).zip(self.velocity.iter_mut()) {
            sgd_step(p, g, v, self.lr, self.momentum)?;
        }
        Ok(())
    }
}
