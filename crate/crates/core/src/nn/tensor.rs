use super::Scalar;
use crate::error::{Error, Result};
use crate::volume::{Dims, Volume};

/// Channel-major 4-D tensor `(C, D, H, W)`, x-fastest within a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: [usize; 4], value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero-sized shape {shape:?}")));
        }
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!("{} values for shape {:?}", data.len(), shape)));
        }
        Ok(Self { shape, data })
    }

    /// Single-channel tensor holding a volume's intensities.
    pub fn from_volume(volume: &Volume) -> Self {
        let [d, h, w] = volume.dims();
        Self {
            shape: [1, d, h, w],
            data: volume.values().iter().map(|&v| T::of(v as f64)).collect(),
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    pub fn spatial(&self) -> Dims {
        [self.shape[1], self.shape[2], self.shape[3]]
    }

    pub fn voxels(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let v = self.voxels();
        &self.data[c * v..(c + 1) * v]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let v = self.voxels();
        &mut self.data[c * v..(c + 1) * v]
    }

    pub fn get(&self, c: usize, z: usize, y: usize, x: usize) -> T {
        let [_, _, h, w] = self.shape;
        self.data[((c * self.shape[1] + z) * h + y) * w + x]
    }

    pub fn add_assign(&mut self, other: &Tensor4<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("add {:?} vs {:?}", self.shape, other.shape)));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Stacks `self` and `other` along channels.
    pub fn concat(&self, other: &Tensor4<T>) -> Result<Tensor4<T>> {
        if self.spatial() != other.spatial() {
            return Err(Error::Shape(format!("concat {:?} vs {:?}", self.shape, other.shape)));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        let [c, d, h, w] = self.shape;
        Ok(Tensor4 {
            shape: [c + other.channels(), d, h, w],
            data,
        })
    }

    /// Inverse of [`concat`](Self::concat): first `head` channels, then the rest.
    pub fn split(&self, head: usize) -> (Tensor4<T>, Tensor4<T>) {
        let [c, d, h, w] = self.shape;
        assert!(head < c, "split point {head} outside {c} channels");
        let cut = head * self.voxels();
        (
            Tensor4 {
                shape: [head, d, h, w],
                data: self.data[..cut].to_vec(),
            },
            Tensor4 {
                shape: [c - head, d, h, w],
                data: self.data[cut..].to_vec(),
            },
        )
    }

    /// Converts element type through f64.
    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }
}
