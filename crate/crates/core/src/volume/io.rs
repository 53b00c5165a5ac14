//! Raw volume and mask files with a JSON sidecar.
//!
//! `<name>.f32raw` holds little-endian f32 voxels, `<name>.u8raw` one byte
//! per mask voxel (0 or 1), and `<name>.json` the sidecar
//! `{"dims":[D,H,W],"dtype":"f32le"|"u8","kind":"volume"|"mask"}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{voxel_count, Dims, Mask, Volume};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub dims: Dims,
    pub dtype: String,
    pub kind: String,
}

impl Sidecar {
    pub fn volume(dims: Dims) -> Self {
        Self {
            dims,
            dtype: "f32le".into(),
            kind: "volume".into(),
        }
    }

    pub fn mask(dims: Dims) -> Self {
        Self {
            dims,
            dtype: "u8".into(),
            kind: "mask".into(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("sidecar serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// The sidecar lives next to the raw payload with a `.json` extension.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

fn read_payload(path: &Path, kind: &str, dtype: &str, elem: usize) -> Result<(Dims, Vec<u8>)> {
    let side_path = sidecar_path(path);
    if !side_path.exists() {
        return Err(Error::Sidecar {
            path: side_path,
            message: "missing".into(),
        });
    }
    let side = Sidecar::read(&side_path)?;
    if side.kind != kind || side.dtype != dtype {
        return Err(Error::Sidecar {
            path: side_path,
            message: format!("expected kind {kind:?} dtype {dtype:?}, found {:?} {:?}", side.kind, side.dtype),
        });
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = voxel_count(side.dims) * elem;
    if bytes.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            found: bytes.len(),
        });
    }
    Ok((side.dims, bytes))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let (dims, bytes) = read_payload(path.as_ref(), "volume", "f32le", 4)?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Volume::new(dims, values)
}

pub fn save_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(volume.values().len() * 4);
    for v in volume.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Sidecar::volume(volume.dims()).write(&sidecar_path(path))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let (dims, bytes) = read_payload(path.as_ref(), "mask", "u8", 1)?;
    let mut inside = Vec::with_capacity(bytes.len());
    for (index, &value) in bytes.iter().enumerate() {
        match value {
            0 => inside.push(false),
            1 => inside.push(true),
            _ => return Err(Error::MaskValue { index, value }),
        }
    }
    Mask::new(dims, inside)
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = mask.as_slice().iter().map(|&b| b as u8).collect();
    save_mask_bytes(mask.dims(), &bytes, path)
}

/// Writes raw mask bytes, refusing anything other than 0 and 1.
pub fn save_mask_bytes(dims: Dims, bytes: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if bytes.len() != voxel_count(dims) {
        return Err(Error::PayloadSize {
            expected: voxel_count(dims),
            found: bytes.len(),
        });
    }
    if let Some((index, &value)) = bytes.iter().enumerate().find(|(_, &v)| v > 1) {
        return Err(Error::MaskValue { index, value });
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Sidecar::mask(dims).write(&sidecar_path(path))
}
