//! Synthetic CT stand-ins with known class-generating patterns.
//!
//! Every phantom shares a centered ellipsoidal lung mask filling roughly 40%
//! of the volume. Tissue outside the mask is bright, parenchyma inside is
//! mid-gray, and lesions are dark. Classes differ only in where the dark
//! lesions go.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{voxel_count, voxel_index, Dims, Mask, Subject, Volume};
use crate::error::{Error, Result};
use crate::seed::stream_rng;

pub const MAX_PHANTOM_CLASSES: usize = 6;

const TISSUE: f32 = 0.75;
const PARENCHYMA: f32 = 0.45;
/// Half-width of the per-subject parenchyma level shift.
const PARENCHYMA_JITTER: f32 = 0.015;
const LESION: f32 = 0.12;
const NOISE_SIGMA: f32 = 0.04;
const RIM_WIDTH: f64 = 2.0;
/// Ellipsoid semi-axis as a fraction of the half extent; (0.914)^3 * pi/6 ~ 0.40.
const SEMI_AXIS_FRACTION: f64 = 0.914;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomClass {
    /// Parenchyma texture only.
    Uniform,
    /// Dark blobs in the top third of the mask.
    ApicalBlobs,
    /// Dark rim hugging the mask boundary.
    SubpleuralRim,
    /// Many small blobs anywhere in the mask.
    ScatteredSmall,
    /// A few large blobs anywhere in the mask.
    LargeBlobs,
    /// Dense medium blobs anywhere in the mask.
    DenseMedium,
}

impl PhantomClass {
    pub fn from_id(class_id: usize) -> Result<Self> {
        Ok(match class_id {
            0 => Self::Uniform,
            1 => Self::ApicalBlobs,
            2 => Self::SubpleuralRim,
            3 => Self::ScatteredSmall,
            4 => Self::LargeBlobs,
            5 => Self::DenseMedium,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "phantom class {class_id} not in [0, {MAX_PHANTOM_CLASSES})"
                )))
            }
        })
    }
}

fn ellipsoid_mask(dims: Dims) -> Result<Mask> {
    let half = dims.map(|d| d as f64 / 2.0);
    let semi = half.map(|h| h * SEMI_AXIS_FRACTION);
    let mut inside = Vec::with_capacity(voxel_count(dims));
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let p = [z as f64 + 0.5, y as f64 + 0.5, x as f64 + 0.5];
                let r: f64 = (0..3).map(|a| ((p[a] - half[a]) / semi[a]).powi(2)).sum();
                inside.push(r <= 1.0);
            }
        }
    }
    Mask::new(dims, inside)
}

/// Mask voxels with an outside voxel (or the volume edge) within `width`.
fn rim(mask: &Mask, width: f64) -> Vec<bool> {
    let dims = mask.dims();
    let reach = width.ceil() as isize;
    let mut out = vec![false; voxel_count(dims)];
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                if !mask.get(z, y, x) {
                    continue;
                }
                'search: for dz in -reach..=reach {
                    for dy in -reach..=reach {
                        for dx in -reach..=reach {
                            if ((dz * dz + dy * dy + dx * dx) as f64) > width * width {
                                continue;
                            }
                            let (nz, ny, nx) = (z as isize + dz, y as isize + dy, x as isize + dx);
                            let outside_volume = nz < 0
                                || ny < 0
                                || nx < 0
                                || nz >= dims[0] as isize
                                || ny >= dims[1] as isize
                                || nx >= dims[2] as isize;
                            if outside_volume || !mask.get(nz as usize, ny as usize, nx as usize) {
                                out[voxel_index(dims, z, y, x)] = true;
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

struct BlobPlan {
    count: (usize, usize),
    radius: (f64, f64),
    /// Restrict centers to the top third of the mask.
    apical: bool,
}

fn paint_blobs(lesion: &mut [bool], mask: &Mask, plan: &BlobPlan, rng: &mut ChaCha8Rng) {
    let dims = mask.dims();
    let scale = *dims.iter().min().unwrap() as f64 / 16.0;
    let extent = mask.z_extent();
    let top_end = extent.start + (extent.end - extent.start) / 3;
    let candidates: Vec<[usize; 3]> = (0..dims[0])
        .filter(|&z| !plan.apical || z < top_end)
        .flat_map(|z| (0..dims[1]).flat_map(move |y| (0..dims[2]).map(move |x| [z, y, x])))
        .filter(|&[z, y, x]| mask.get(z, y, x))
        .collect();
    let count = rng.gen_range(plan.count.0..=plan.count.1);
    for _ in 0..count {
        let c = candidates[rng.gen_range(0..candidates.len())];
        let r = rng.gen_range(plan.radius.0..plan.radius.1) * scale;
        let reach = r.ceil() as isize;
        for dz in -reach..=reach {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    if ((dz * dz + dy * dy + dx * dx) as f64) > r * r {
                        continue;
                    }
                    let p = [c[0] as isize + dz, c[1] as isize + dy, c[2] as isize + dx];
                    if p.iter().zip(dims).any(|(&v, d)| v < 0 || v >= d as isize) {
                        continue;
                    }
                    let (z, y, x) = (p[0] as usize, p[1] as usize, p[2] as usize);
                    if plan.apical && z >= top_end {
                        continue;
                    }
                    if mask.get(z, y, x) {
                        lesion[voxel_index(dims, z, y, x)] = true;
                    }
                }
            }
        }
    }
}

/// Generates one phantom. Deterministic in `(class_id, dims, seed)`.
pub fn generate_phantom(class_id: usize, dims: Dims, seed: u64) -> Result<Subject> {
    let class = PhantomClass::from_id(class_id)?;
    if dims.iter().any(|&d| d < 8) {
        return Err(Error::InvalidParameter(format!("phantom dims {dims:?} must be at least 8")));
    }
    let mut rng = stream_rng(seed, class_id as u64);
    let mask = ellipsoid_mask(dims)?;

    let mut lesion = vec![false; voxel_count(dims)];
    let blobs = |count, radius, apical| BlobPlan { count, radius, apical };
    match class {
        PhantomClass::Uniform => {}
        PhantomClass::ApicalBlobs => paint_blobs(&mut lesion, &mask, &blobs((4, 6), (1.8, 2.6), true), &mut rng),
        PhantomClass::SubpleuralRim => lesion = rim(&mask, RIM_WIDTH),
        PhantomClass::ScatteredSmall => paint_blobs(&mut lesion, &mask, &blobs((10, 14), (0.8, 1.2), false), &mut rng),
        PhantomClass::LargeBlobs => paint_blobs(&mut lesion, &mask, &blobs((2, 3), (2.5, 3.0), false), &mut rng),
        PhantomClass::DenseMedium => paint_blobs(&mut lesion, &mask, &blobs((6, 8), (1.5, 2.0), false), &mut rng),
    }

    let parenchyma = PARENCHYMA + rng.gen_range(-PARENCHYMA_JITTER..PARENCHYMA_JITTER);
    let noise = Normal::new(0.0f32, NOISE_SIGMA).expect("valid sigma");
    let values = mask
        .as_slice()
        .iter()
        .zip(&lesion)
        .map(|(&inside, &dark)| {
            let base = match (inside, dark) {
                (false, _) => TISSUE,
                (true, false) => parenchyma,
                (true, true) => LESION,
            };
            (base + noise.sample(&mut rng)).clamp(0.0, 1.0)
        })
        .collect();
    let volume = Volume::new(dims, values)?;
    Subject::new(format!("c{class_id}_s{seed:016x}"), volume, mask, Some(class_id))
}
