//! Parameter-free layers: ReLU, 2x2x2 max pooling, x2 trilinear upsampling
//! and lung-masked average pooling.

use super::{Scalar, Tensor4};
use crate::error::{Error, Result};
use crate::volume::Mask;

pub fn relu_forward<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
    out
}

/// Gradient through ReLU given the forward *output*; zero where the output
/// is zero.
pub fn relu_backward<T: Scalar>(output: &Tensor4<T>, grad_out: &Tensor4<T>) -> Tensor4<T> {
    let mut g = grad_out.clone();
    for (gv, &o) in g.data_mut().iter_mut().zip(output.data()) {
        if o <= T::zero() {
            *gv = T::zero();
        }
    }
    g
}

/// Output of a 2x2x2 stride-2 max pool with the flat input index each
/// output voxel came from.
#[derive(Debug, Clone)]
pub struct Pooled<T> {
    pub output: Tensor4<T>,
    pub argmax: Vec<usize>,
    pub input_shape: [usize; 4],
}

pub fn maxpool2_forward<T: Scalar>(input: &Tensor4<T>) -> Result<Pooled<T>> {
    let [c, d, h, w] = input.shape();
    if d % 2 != 0 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Indivisible {
            dims: [d, h, w],
            factor: 2,
            what: "max pooling".into(),
        });
    }
    let (od, oh, ow) = (d / 2, h / 2, w / 2);
    let mut output = Tensor4::zeros([c, od, oh, ow]);
    let mut argmax = Vec::with_capacity(c * od * oh * ow);
    let src = input.data();
    let out = output.data_mut();
    let mut o = 0;
    for ch in 0..c {
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = usize::MAX;
                    // scan order z, y, x; strict > keeps the first maximum
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = ((ch * d + 2 * z + dz) * h + 2 * y + dy) * w + 2 * x + dx;
                                if best == usize::MAX || src[i] > src[best] {
                                    best = i;
                                }
                            }
                        }
                    }
                    out[o] = src[best];
                    argmax.push(best);
                    o += 1;
                }
            }
        }
    }
    Ok(Pooled {
        output,
        argmax,
        input_shape: input.shape(),
    })
}

pub fn maxpool2_backward<T: Scalar>(pooled: &Pooled<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    if grad_out.shape() != pooled.output.shape() {
        return Err(Error::Shape(format!(
            "pool grad {:?} vs output {:?}",
            grad_out.shape(),
            pooled.output.shape()
        )));
    }
    let mut g = Tensor4::zeros(pooled.input_shape);
    let gd = g.data_mut();
    for (&i, &v) in pooled.argmax.iter().zip(grad_out.data()) {
        gd[i] += v;
    }
    Ok(g)
}

/// `(outer, n, inner)` view of a tensor around spatial axis `axis`
/// (0 = z, 1 = y, 2 = x).
fn axis_layout(shape: [usize; 4], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis + 1].iter().product();
    let n = shape[axis + 1];
    let inner: usize = shape[axis + 2..].iter().product();
    (outer, n, inner)
}

/// x2 linear upsampling along one axis with half-pixel alignment,
/// `src = (dst + 0.5) / 2 - 0.5`, clamped at the borders. Even outputs mix
/// `x[i]` with `x[i-1]`, odd outputs with `x[i+1]`, at weights 3/4 and 1/4.
fn upsample_axis<T: Scalar>(input: &Tensor4<T>, axis: usize) -> Tensor4<T> {
    let shape = input.shape();
    let (outer, n, inner) = axis_layout(shape, axis);
    let mut out_shape = shape;
    out_shape[axis + 1] = 2 * n;
    let mut out = Tensor4::zeros(out_shape);
    let (near, far) = (T::of(0.75), T::of(0.25));
    let src = input.data();
    let dst = out.data_mut();
    for o in 0..outer {
        for i in 0..n {
            let prev = i.saturating_sub(1);
            let next = (i + 1).min(n - 1);
            let base = o * n * inner;
            let obase = o * 2 * n * inner;
            for j in 0..inner {
                let xi = src[base + i * inner + j];
                dst[obase + 2 * i * inner + j] = near * xi + far * src[base + prev * inner + j];
                dst[obase + (2 * i + 1) * inner + j] = near * xi + far * src[base + next * inner + j];
            }
        }
    }
    out
}

fn upsample_axis_backward<T: Scalar>(grad_out: &Tensor4<T>, axis: usize) -> Tensor4<T> {
    let out_shape = grad_out.shape();
    let mut shape = out_shape;
    shape[axis + 1] /= 2;
    let (outer, n, inner) = axis_layout(shape, axis);
    let mut g = Tensor4::zeros(shape);
    let (near, far) = (T::of(0.75), T::of(0.25));
    let src = grad_out.data();
    let dst = g.data_mut();
    for o in 0..outer {
        for i in 0..n {
            let prev = i.saturating_sub(1);
            let next = (i + 1).min(n - 1);
            let base = o * n * inner;
            let obase = o * 2 * n * inner;
            for j in 0..inner {
                let even = src[obase + 2 * i * inner + j];
                let odd = src[obase + (2 * i + 1) * inner + j];
                dst[base + i * inner + j] += near * (even + odd);
                dst[base + prev * inner + j] += far * even;
                dst[base + next * inner + j] += far * odd;
            }
        }
    }
    g
}

/// x2 trilinear upsampling as three separable linear passes (x, y, z).
pub fn trilinear_up2_forward<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    let t = upsample_axis(input, 2);
    let t = upsample_axis(&t, 1);
    upsample_axis(&t, 0)
}

/// Transpose of [`trilinear_up2_forward`].
pub fn trilinear_up2_backward<T: Scalar>(grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [_, d, h, w] = grad_out.shape();
    if d % 2 != 0 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("upsample gradient {:?} has odd dims", grad_out.shape())));
    }
    let g = upsample_axis_backward(grad_out, 0);
    let g = upsample_axis_backward(&g, 1);
    Ok(upsample_axis_backward(&g, 2))
}

/// Per-channel mean of `features` over voxels inside `mask`. Sums are
/// accumulated in f64.
pub fn masked_avg_pool<T: Scalar>(features: &Tensor4<T>, mask: &Mask) -> Result<Vec<T>> {
    if features.spatial() != mask.dims() {
        return Err(Error::DimMismatch(format!(
            "features {:?} vs mask {:?}",
            features.spatial(),
            mask.dims()
        )));
    }
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((0..features.channels())
        .map(|c| {
            let sum: f64 = features
                .channel(c)
                .iter()
                .zip(mask.as_slice())
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v.f64())
                .sum();
            T::of(sum / n as f64)
        })
        .collect())
}

pub fn masked_avg_pool_backward<T: Scalar>(grad: &[T], mask: &Mask) -> Tensor4<T> {
    let [d, h, w] = mask.dims();
    let mut g = Tensor4::zeros([grad.len(), d, h, w]);
    let inv = T::one() / T::of(mask.count() as f64);
    for (c, &gc) in grad.iter().enumerate() {
        for (v, &m) in g.channel_mut(c).iter_mut().zip(mask.as_slice()) {
            if m {
                *v = gc * inv;
            }
        }
    }
    g
}
