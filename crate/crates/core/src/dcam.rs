//! Dense cluster activation maps: the classifier head applied at every
//! voxel of the full-resolution feature map, skipping the lung pooling.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{masked_avg_pool, FeatureNet, Head, Scalar, Tensor4};
use crate::volume::{save_volume, voxel_index, Dims, Mask, Subject, Volume};

/// Per-voxel logits for every cluster of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Dcam<T> {
    /// `[k, D, H, W]`, raw logits.
    pub logits: Tensor4<T>,
    pub mask: Mask,
    pub subject_id: String,
    /// Argmax of the pooled logits.
    pub assigned_cluster: usize,
}

impl<T: Scalar> Dcam<T> {
    pub fn k(&self) -> usize {
        self.logits.channels()
    }

    pub fn dims(&self) -> Dims {
        self.logits.spatial()
    }

    /// Mean logit of `channel` over the lung mask.
    pub fn masked_mean(&self, channel: usize) -> f64 {
        let (sum, n) = self
            .logits
            .channel(channel)
            .iter()
            .zip(self.mask.as_slice())
            .filter(|(_, &m)| m)
            .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v.f64(), n + 1));
        sum / n as f64
    }

    fn check_channel(&self, channel: usize) -> Result<()> {
        if channel >= self.k() {
            return Err(Error::InvalidParameter(format!("channel {channel} out of range for k = {}", self.k())));
        }
        Ok(())
    }

    /// `channel` min-max scaled to [0, 1] over the lung; `None` outside the
    /// lung. A constant channel maps to 0.5.
    pub fn normalized(&self, channel: usize) -> Result<Vec<Option<f64>>> {
        self.check_channel(channel)?;
        let values = self.logits.channel(channel);
        let inside = values.iter().zip(self.mask.as_slice()).filter(|(_, &m)| m).map(|(v, _)| v.f64());
        let (lo, hi) = inside.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        Ok(values
            .iter()
            .zip(self.mask.as_slice())
            .map(|(v, &m)| {
                m.then(|| if range > 0.0 { (v.f64() - lo) / range } else { 0.5 })
            })
            .collect())
    }

    /// Normalized activation summed over the top and the bottom third of the
    /// lung's z extent (low z is the top).
    pub fn third_masses(&self, channel: usize) -> Result<(f64, f64)> {
        let norm = self.normalized(channel)?;
        let extent = self.mask.z_extent();
        let third = extent.len() / 3;
        let [_, h, w] = self.dims();
        let mass = |zs: std::ops::Range<usize>| -> f64 {
            zs.flat_map(|z| (0..h * w).map(move |i| z * h * w + i))
                .filter_map(|i| norm[i])
                .sum()
        };
        Ok((
            mass(extent.start..extent.start + third),
            mass(extent.end - third..extent.end),
        ))
    }
}

/// Applies `head` densely to `net`'s features of `subject`. Refuses
/// networks whose features are below input resolution.
pub fn compute_dcam<T: Scalar>(net: &FeatureNet<T>, head: &Head<T>, subject: &Subject) -> Result<Dcam<T>> {
    let stride = net.topology().output_stride();
    if stride != 1 {
        return Err(Error::BaselineDcam { downsample: stride });
    }
    let features = net.features(&subject.volume)?;
    let logits = head.apply_dense(&features)?;
    let pooled = head.apply(&masked_avg_pool(&features, &subject.mask)?)?;
    let assigned_cluster = pooled
        .iter()
        .enumerate()
        .fold(0, |best, (c, &v)| if v > pooled[best] { c } else { best });
    Ok(Dcam {
        logits,
        mask: subject.mask.clone(),
        subject_id: subject.id.clone(),
        assigned_cluster,
    })
}

/// Slicing axis for image export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Axial slices, indexed by z.
    Z,
    /// Coronal slices, indexed by y.
    Y,
    /// Sagittal slices, indexed by x.
    X,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Z => "z",
            Axis::Y => "y",
            Axis::X => "x",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" | "axial" => Ok(Axis::Z),
            "y" | "coronal" => Ok(Axis::Y),
            "x" | "sagittal" => Ok(Axis::X),
            other => Err(Error::InvalidParameter(format!("unknown axis {other:?} (expected z, y or x)"))),
        }
    }
}

fn pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

fn to_byte(v: Option<f64>) -> u8 {
    match v {
        None => 0,
        Some(v) => (v * 255.0).round().clamp(0.0, 255.0) as u8,
    }
}

/// Writes one binary PGM per slice of `channel` along `axis` into `dir`,
/// named `<id>_c<channel>_<axis><index:03>.pgm`. Returns the paths in slice
/// order.
pub fn export_slices<T: Scalar>(dcam: &Dcam<T>, channel: usize, axis: Axis, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let norm = dcam.normalized(channel)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dims = dcam.dims();
    let [d, h, w] = dims;
    let (count, rows, cols) = match axis {
        Axis::Z => (d, h, w),
        Axis::Y => (h, d, w),
        Axis::X => (w, d, h),
    };
    let mut paths = Vec::with_capacity(count);
    for s in 0..count {
        let mut pixels = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let index = match axis {
                    Axis::Z => voxel_index(dims, s, r, c),
                    Axis::Y => voxel_index(dims, r, s, c),
                    Axis::X => voxel_index(dims, r, c, s),
                };
                pixels.push(to_byte(norm[index]));
            }
        }
        let path = dir.join(format!("{}_c{channel}_{axis}{s:03}.pgm", dcam.subject_id));
        std::fs::write(&path, pgm(cols, rows, &pixels)).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Raw logits of one channel as an f32 volume with sidecar.
pub fn save_channel<T: Scalar>(dcam: &Dcam<T>, channel: usize, path: impl AsRef<Path>) -> Result<()> {
    dcam.check_channel(channel)?;
    let values = dcam.logits.channel(channel).iter().map(|v| v.f64() as f32).collect();
    save_volume(&Volume::new(dcam.dims(), values)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Topology;
    use crate::seed::rng;
    use crate::volume::generate_phantom;

    fn small_net(seed: u64) -> FeatureNet<f64> {
        let topology = Topology {
            levels: 2,
            base_filters: 2,
            feature_channels: 3,
            ..Topology::proposed()
        };
        FeatureNet::init(topology, &mut rng(seed)).unwrap()
    }

    #[test]
    fn pooled_route_matches_dense_mean() {
        let net = small_net(1);
        let head = Head::init(3, 4, &mut rng(2)).unwrap();
        let subject = generate_phantom(1, [16, 16, 16], 5).unwrap();
        let dcam = compute_dcam(&net, &head, &subject).unwrap();
        assert_eq!(dcam.dims(), [16, 16, 16]);
        let features = net.features(&subject.volume).unwrap();
        let pooled = head.apply(&masked_avg_pool(&features, &subject.mask).unwrap()).unwrap();
        for (c, &p) in pooled.iter().enumerate() {
            assert!((dcam.masked_mean(c) - p).abs() <= 1e-10 * p.abs().max(1e-12));
        }
    }

    #[test]
    fn baseline_refused() {
        let net: FeatureNet<f32> = FeatureNet::init(Topology::baseline(), &mut rng(0)).unwrap();
        let head = Head::init(32, 3, &mut rng(0)).unwrap();
        let subject = generate_phantom(0, [16, 16, 16], 0).unwrap();
        assert!(matches!(compute_dcam(&net, &head, &subject), Err(Error::BaselineDcam { downsample: 16 })));
    }

    fn constant_dcam(dims: Dims) -> Dcam<f32> {
        let mut inside = vec![false; dims.iter().product()];
        inside[voxel_index(dims, 1, 1, 1)] = true;
        inside[voxel_index(dims, 2, 1, 2)] = true;
        Dcam {
            logits: Tensor4::filled([2, dims[0], dims[1], dims[2]], 0.3),
            mask: Mask::new(dims, inside).unwrap(),
            subject_id: "s".into(),
            assigned_cluster: 0,
        }
    }

    #[test]
    fn constant_channel_is_mid_gray_inside_black_outside() {
        let dir = tempfile::tempdir().unwrap();
        let dcam = constant_dcam([4, 3, 5]);
        let paths = export_slices(&dcam, 1, Axis::Z, dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        assert!(paths[1].ends_with("s_c1_z001.pgm"));
        let bytes = std::fs::read(&paths[1]).unwrap();
        let header = b"P5\n5 3\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let pixels = &bytes[header.len()..];
        assert_eq!(pixels.len(), 15);
        assert_eq!(pixels[5 + 1], 128);
        assert_eq!(pixels.iter().filter(|&&p| p != 0).count(), 1);
    }

    #[test]
    fn slice_shapes_per_axis() {
        let dir = tempfile::tempdir().unwrap();
        let dcam = constant_dcam([4, 3, 5]);
        for (axis, count, header) in [(Axis::Y, 3, "P5\n5 4\n255\n"), (Axis::X, 5, "P5\n3 4\n255\n")] {
            let paths = export_slices(&dcam, 0, axis, dir.path()).unwrap();
            assert_eq!(paths.len(), count);
            assert!(std::fs::read(&paths[0]).unwrap().starts_with(header.as_bytes()));
        }
    }

    #[test]
    fn min_max_scaling() {
        let dims = [2, 2, 2];
        let mut logits = Tensor4::<f32>::zeros([1, 2, 2, 2]);
        logits.data_mut().copy_from_slice(&[-1.0, 0.0, 1.0, 3.0, 100.0, 100.0, 100.0, 100.0]);
        let mut inside = vec![true; 8];
        inside[4..].iter_mut().for_each(|m| *m = false);
        let dcam = Dcam {
            logits,
            mask: Mask::new(dims, inside).unwrap(),
            subject_id: "m".into(),
            assigned_cluster: 0,
        };
        let norm = dcam.normalized(0).unwrap();
        assert_eq!(norm[0], Some(0.0));
        assert_eq!(norm[1], Some(0.25));
        assert_eq!(norm[3], Some(1.0));
        assert_eq!(norm[4], None);
        assert!(dcam.normalized(1).is_err());
    }

    #[test]
    fn head_of_constant_features_is_constant() {
        let head: Head<f64> = Head::init(2, 3, &mut rng(4)).unwrap();
        let features = Tensor4::from_vec([2, 2, 2, 2], [vec![0.7; 8], vec![-0.2; 8]].concat()).unwrap();
        let dense = head.apply_dense(&features).unwrap();
        let pooled = head.apply(&[0.7, -0.2]).unwrap();
        for c in 0..3 {
            assert!(dense.channel(c).iter().all(|&v| (v - pooled[c]).abs() < 1e-14));
        }
    }
}
