//! Stride-1 3-D convolution (cross-correlation) with bias.
//!
//! 3x3x3 kernels use zero padding 1, 1x1x1 kernels no padding, so spatial
//! dims are always preserved. Both directions go through an im2col buffer
//! and one GEMM.

use rand::Rng;

use super::{Scalar, Tensor4};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d<T> {
    c_in: usize,
    c_out: usize,
    kernel: usize,
    /// `(c_out, c_in, k, k, k)` row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients of one convolution's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvGrads<T> {
    pub fn zeros_like(layer: &Conv3d<T>) -> Self {
        Self {
            weight: vec![T::zero(); layer.weight.len()],
            bias: vec![T::zero(); layer.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &ConvGrads<T>) {
        for (a, &b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, &b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.weight.iter_mut().chain(self.bias.iter_mut()).for_each(|v| *v *= s);
    }
}

impl<T: Scalar> Conv3d<T> {
    pub fn zeros(c_in: usize, c_out: usize, kernel: usize) -> Self {
        assert!(kernel == 1 || kernel == 3, "kernel must be 1 or 3");
        Self {
            c_in,
            c_out,
            kernel,
            weight: vec![T::zero(); c_out * c_in * kernel.pow(3)],
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn from_parts(c_in: usize, c_out: usize, kernel: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        let layer = Self::zeros(c_in, c_out, kernel);
        if weight.len() != layer.weight.len() || bias.len() != c_out {
            return Err(Error::Shape(format!(
                "conv {c_in}->{c_out} k{kernel}: got {} weights, {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias, ..layer })
    }

    /// Uniform in `[-b, b]` with `b = sqrt(1 / fan_in)`, for weights and bias.
    pub fn init<R: Rng>(c_in: usize, c_out: usize, kernel: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(c_in, c_out, kernel);
        let bound = layer.init_bound();
        for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
            *v = T::of(rng.gen_range(-bound..=bound));
        }
        layer
    }

    pub fn fan_in(&self) -> usize {
        self.c_in * self.kernel.pow(3)
    }

    pub fn init_bound(&self) -> f64 {
        (1.0 / self.fan_in() as f64).sqrt()
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn check_input(&self, input: &Tensor4<T>) -> Result<()> {
        if input.channels() != self.c_in {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.c_in,
                input.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(input)?;
        let [_, d, h, w] = input.shape();
        let voxels = input.voxels();
        let rows = self.fan_in();
        let mut out = Tensor4::zeros([self.c_out, d, h, w]);
        for (c, &b) in self.bias.iter().enumerate() {
            out.channel_mut(c).fill(b);
        }
        let col;
        let cols: &[T] = if self.kernel == 3 {
            col = im2col(input);
            &col
        } else {
            input.data()
        };
        T::gemm(self.c_out, rows, voxels, &self.weight, false, cols, false, out.data_mut(), true);
        Ok(out)
    }

    /// Returns `(grad_input, grads)`. `grad_input` is skipped (None) when
    /// `need_input_grad` is false.
    pub fn backward(
        &self,
        input: &Tensor4<T>,
        grad_out: &Tensor4<T>,
        need_input_grad: bool,
    ) -> Result<(Option<Tensor4<T>>, ConvGrads<T>)> {
        self.check_input(input)?;
        let [_, d, h, w] = input.shape();
        if grad_out.shape() != [self.c_out, d, h, w] {
            return Err(Error::Shape(format!(
                "grad_out {:?} does not match conv output [{}, {d}, {h}, {w}]",
                grad_out.shape(),
                self.c_out
            )));
        }
        let voxels = input.voxels();
        let rows = self.fan_in();
        let mut grads = ConvGrads::zeros_like(self);
        for c in 0..self.c_out {
            grads.bias[c] = grad_out.channel(c).iter().fold(T::zero(), |acc, &g| acc + g);
        }
        let col;
        let cols: &[T] = if self.kernel == 3 {
            col = im2col(input);
            &col
        } else {
            input.data()
        };
        // dW = dY (c_out x V) * cols^T (V x rows)
        T::gemm(self.c_out, voxels, rows, grad_out.data(), false, cols, true, &mut grads.weight, false);
        if !need_input_grad {
            return Ok((None, grads));
        }
        // dcols = W^T (rows x c_out) * dY (c_out x V)
        let mut dcols = vec![T::zero(); rows * voxels];
        T::gemm(rows, self.c_out, voxels, &self.weight, true, grad_out.data(), false, &mut dcols, false);
        let grad_in = if self.kernel == 3 {
            col2im(&dcols, input.shape())
        } else {
            Tensor4::from_vec(input.shape(), dcols)?
        };
        Ok((Some(grad_in), grads))
    }
}

/// `(src_start, dst_start, len)` of the valid x-run for a row shifted by `dx`.
#[inline]
fn shifted_run(w: usize, dx: isize) -> (usize, usize, usize) {
    // output x reads input x + dx
    if dx < 0 {
        (0, 1, w - 1)
    } else if dx > 0 {
        (1, 0, w - 1)
    } else {
        (0, 0, w)
    }
}

/// `(c_in * 27) x V` patch matrix for a 3x3x3 kernel with zero padding 1.
fn im2col<T: Scalar>(input: &Tensor4<T>) -> Vec<T> {
    let [c_in, d, h, w] = input.shape();
    let voxels = d * h * w;
    let mut col = vec![T::zero(); c_in * 27 * voxels];
    for ci in 0..c_in {
        let src = input.channel(ci);
        for t in 0..27 {
            let (dz, dy, dx) = ((t / 9) as isize - 1, ((t / 3) % 3) as isize - 1, (t % 3) as isize - 1);
            let row = &mut col[(ci * 27 + t) * voxels..(ci * 27 + t + 1) * voxels];
            let (s0, d0, len) = shifted_run(w, dx);
            if len == 0 {
                continue;
            }
            for z in 0..d {
                let sz = z as isize + dz;
                if sz < 0 || sz >= d as isize {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s = (sz as usize * h + sy as usize) * w;
                    let o = (z * h + y) * w;
                    row[o + d0..o + d0 + len].copy_from_slice(&src[s + s0..s + s0 + len]);
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`].
fn col2im<T: Scalar>(col: &[T], shape: [usize; 4]) -> Tensor4<T> {
    let [c_in, d, h, w] = shape;
    let voxels = d * h * w;
    let mut out = Tensor4::zeros(shape);
    for ci in 0..c_in {
        let dst = out.channel_mut(ci);
        for t in 0..27 {
            let (dz, dy, dx) = ((t / 9) as isize - 1, ((t / 3) % 3) as isize - 1, (t % 3) as isize - 1);
            let row = &col[(ci * 27 + t) * voxels..(ci * 27 + t + 1) * voxels];
            let (s0, d0, len) = shifted_run(w, dx);
            if len == 0 {
                continue;
            }
            for z in 0..d {
                let sz = z as isize + dz;
                if sz < 0 || sz >= d as isize {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s = (sz as usize * h + sy as usize) * w;
                    let o = (z * h + y) * w;
                    for (a, &g) in dst[s + s0..s + s0 + len].iter_mut().zip(&row[o + d0..o + d0 + len]) {
                        *a += g;
                    }
                }
            }
        }
    }
    out
}
