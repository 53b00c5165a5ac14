//! Volumes, lung masks, subjects and datasets.
//!
//! Voxel storage is x-fastest: the value at `(z, y, x)` lives at
//! `(z * H + y) * W + x` for dims `(D, H, W)`.

mod dataset;
mod io;
mod phantom;

pub use dataset::{generate_dataset, load_manifest, save_dataset, Dataset, ManifestEntry};
pub use io::{load_mask, load_volume, save_mask, save_mask_bytes, save_volume, Sidecar};
pub use phantom::{generate_phantom, PhantomClass, MAX_PHANTOM_CLASSES};

use crate::error::{Error, Result};

pub type Dims = [usize; 3];

pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

#[inline]
pub fn voxel_index(dims: Dims, z: usize, y: usize, x: usize) -> usize {
    (z * dims[1] + y) * dims[2] + x
}

/// Checks that every dim is at least 8 and divisible by `factor`.
pub fn check_dims(dims: Dims, factor: usize, what: &str) -> Result<()> {
    if dims.iter().any(|&d| d < 8 || d % factor != 0) {
        return Err(Error::Indivisible {
            dims,
            factor,
            what: what.to_string(),
        });
    }
    Ok(())
}

/// Dense scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    values: Vec<f32>,
}

impl Volume {
    pub fn new(dims: Dims, values: Vec<f32>) -> Result<Self> {
        if values.len() != voxel_count(dims) {
            return Err(Error::DimMismatch(format!(
                "{} values for dims {:?}",
                values.len(),
                dims
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { dims, values })
    }

    pub fn filled(dims: Dims, value: f32) -> Self {
        Self {
            dims,
            values: vec![value; voxel_count(dims)],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.values[voxel_index(self.dims, z, y, x)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }
}

/// Binary region of interest (the lung).
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    dims: Dims,
    inside: Vec<bool>,
}

impl Mask {
    /// Fails on an all-false mask.
    pub fn new(dims: Dims, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != voxel_count(dims) {
            return Err(Error::DimMismatch(format!(
                "{} mask voxels for dims {:?}",
                inside.len(),
                dims
            )));
        }
        if !inside.iter().any(|&b| b) {
            return Err(Error::EmptyMask);
        }
        Ok(Self { dims, inside })
    }

    pub fn full(dims: Dims) -> Self {
        Self {
            dims,
            inside: vec![true; voxel_count(dims)],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.inside
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.inside[voxel_index(self.dims, z, y, x)]
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Range of z slices touched by the mask, as `start..end`.
    pub fn z_extent(&self) -> std::ops::Range<usize> {
        let plane = self.dims[1] * self.dims[2];
        let first = self.inside.iter().position(|&b| b).unwrap_or(0) / plane;
        let last = self.inside.iter().rposition(|&b| b).unwrap_or(0) / plane;
        first..last + 1
    }

    /// One 2x2x2 max-reduction: a coarse voxel is inside when any of its
    /// eight children is.
    pub fn downsample2(&self) -> Result<Mask> {
        let [d, h, w] = self.dims;
        if d % 2 != 0 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Indivisible {
                dims: self.dims,
                factor: 2,
                what: "mask downsampling".into(),
            });
        }
        let out_dims = [d / 2, h / 2, w / 2];
        let mut inside = vec![false; voxel_count(out_dims)];
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    if self.get(z, y, x) {
                        inside[voxel_index(out_dims, z / 2, y / 2, x / 2)] = true;
                    }
                }
            }
        }
        Mask::new(out_dims, inside)
    }

    /// Restriction of the mask to a z range, everything else outside.
    pub fn restrict_z(&self, range: std::ops::Range<usize>) -> Result<Mask> {
        let plane = self.dims[1] * self.dims[2];
        let inside = self
            .inside
            .iter()
            .enumerate()
            .map(|(i, &b)| b && range.contains(&(i / plane)))
            .collect();
        Mask::new(self.dims, inside)
    }
}

/// Arithmetic mean of `volume` over voxels where `mask` is set.
pub fn masked_mean(volume: &Volume, mask: &Mask) -> Result<f64> {
    if volume.dims() != mask.dims() {
        return Err(Error::DimMismatch(format!(
            "volume {:?} vs mask {:?}",
            volume.dims(),
            mask.dims()
        )));
    }
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for (&v, &m) in volume.values().iter().zip(mask.as_slice()) {
        if m {
            sum += v as f64;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// One scan with its lung mask. `true_class` is only read by evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub volume: Volume,
    pub mask: Mask,
    pub true_class: Option<usize>,
}

impl Subject {
    pub fn new(id: impl Into<String>, volume: Volume, mask: Mask, true_class: Option<usize>) -> Result<Self> {
        if volume.dims() != mask.dims() {
            return Err(Error::DimMismatch(format!(
                "volume {:?} vs mask {:?}",
                volume.dims(),
                mask.dims()
            )));
        }
        Ok(Self {
            id: id.into(),
            volume,
            mask,
            true_class,
        })
    }

    pub fn dims(&self) -> Dims {
        self.volume.dims()
    }
}
