//! Model checkpoints: `<name>.json` metadata plus `<name>.f32raw` holding
//! every parameter as little-endian f32, in declaration order (each network
//! layer's weight then bias, then the head's weight and bias).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{param_buffers, Conv3d, FeatureNet, Head, Topology, Variant};
use crate::error::{Error, Result};
use crate::seed::Seeds;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub variant: Variant,
    pub topology: Topology,
    pub k: usize,
    pub epoch: usize,
    pub seeds: Seeds,
    pub dtype: String,
    pub param_count: usize,
}

impl CheckpointMeta {
    pub fn new(variant: Variant, topology: Topology, k: usize, epoch: usize, seeds: Seeds) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            variant,
            topology,
            k,
            epoch,
            seeds,
            dtype: "f32le".into(),
            param_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub net: FeatureNet<f32>,
    pub head: Head<f32>,
}

fn paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("f32raw"))
}

impl Checkpoint {
    /// Writes both files; `path` may name either of them or the shared stem.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let (json, raw) = paths(path.as_ref());
        let buffers = param_buffers(&self.net, &self.head);
        let count: usize = buffers.iter().map(|b| b.len()).sum();
        let mut bytes = Vec::with_capacity(count * 4);
        for v in buffers.into_iter().flatten() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let meta = CheckpointMeta {
            param_count: count,
            ..self.meta.clone()
        };
        fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))?;
        let text = serde_json::to_string_pretty(&meta).expect("checkpoint meta serializes");
        fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (json, raw) = paths(path.as_ref());
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::json(&json, e))?;
        if meta.format_version != CHECKPOINT_FORMAT_VERSION || meta.dtype != "f32le" {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format {} / {}",
                meta.format_version, meta.dtype
            )));
        }
        let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
        if bytes.len() != meta.param_count * 4 {
            return Err(Error::PayloadSize {
                expected: meta.param_count * 4,
                found: bytes.len(),
            });
        }
        let mut values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let mut take = |n: usize| -> Vec<f32> { values.by_ref().take(n).collect() };

        let specs = meta.topology.layer_channels();
        let expected: usize = specs.iter().map(|&(ci, co)| co * ci * 27 + co).sum::<usize>()
            + meta.k * meta.topology.feature_channels
            + meta.k;
        if expected != meta.param_count {
            return Err(Error::Checkpoint(format!(
                "topology needs {expected} parameters, checkpoint holds {}",
                meta.param_count
            )));
        }
        let mut layers = Vec::with_capacity(specs.len());
        for (ci, co) in specs {
            let w = take(co * ci * 27);
            let b = take(co);
            layers.push(Conv3d::from_parts(ci, co, 3, w, b)?);
        }
        let net = FeatureNet::from_layers(meta.topology, layers)?;
        let f = meta.topology.feature_channels;
        let w = take(meta.k * f);
        let b = take(meta.k);
        let head = Head::from_parts(f, meta.k, w, b)?;
        Ok(Self { meta, net, head })
    }
}
