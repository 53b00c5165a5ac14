use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{generate_phantom, load_mask, load_volume, save_mask, save_volume, Dims, Subject};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, stream_rng};

/// Ordered collection of subjects sharing one set of dims.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    /// Number of generator classes (0 when the data carries no labels).
    pub k_true: usize,
}

impl Dataset {
    pub fn new(subjects: Vec<Subject>, k_true: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &subjects {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate subject id {:?}", s.id)));
            }
            if let Some(c) = s.true_class {
                if c >= k_true {
                    return Err(Error::LabelOutOfRange { label: c, k: k_true });
                }
            }
        }
        if let Some(first) = subjects.first() {
            if let Some(other) = subjects.iter().find(|s| s.dims() != first.dims()) {
                return Err(Error::DimMismatch(format!(
                    "subject {} has dims {:?}, expected {:?}",
                    other.id,
                    other.dims(),
                    first.dims()
                )));
            }
        }
        Ok(Self { subjects, k_true })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn dims(&self) -> Option<Dims> {
        self.subjects.first().map(Subject::dims)
    }

    /// Ground-truth classes, if every subject has one.
    pub fn true_classes(&self) -> Option<Vec<usize>> {
        self.subjects.iter().map(|s| s.true_class).collect()
    }

    pub fn find(&self, id: &str) -> Option<&Subject> {
        self.subjects.iter().find(|s| s.id == id)
    }
}

/// `k_true * n_per_class` balanced phantoms, shuffled by `seed`.
pub fn generate_dataset(k_true: usize, n_per_class: usize, dims: Dims, seed: u64) -> Result<Dataset> {
    if k_true < 2 {
        return Err(Error::InvalidParameter(format!("k_true = {k_true} must be at least 2")));
    }
    if n_per_class < 1 {
        return Err(Error::InvalidParameter("n_per_class must be at least 1".into()));
    }
    let mut subjects = Vec::with_capacity(k_true * n_per_class);
    for class in 0..k_true {
        for j in 0..n_per_class {
            let stream = (class * n_per_class + j) as u64;
            subjects.push(generate_phantom(class, dims, derive_seed(seed, stream))?);
        }
    }
    subjects.shuffle(&mut stream_rng(seed, u64::MAX));
    for (i, s) in subjects.iter_mut().enumerate() {
        s.id = format!("subject_{i:04}");
    }
    Dataset::new(subjects, k_true)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub volume_path: String,
    pub mask_path: String,
    pub true_class: Option<usize>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `volumes/`, `masks/` and `manifest.json` under `dir`.
/// Paths in the manifest are relative to `dir`.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["volumes", "masks"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut entries = Vec::with_capacity(dataset.len());
    for s in &dataset.subjects {
        let volume_path = format!("volumes/{}.f32raw", s.id);
        let mask_path = format!("masks/{}.u8raw", s.id);
        save_volume(&s.volume, dir.join(&volume_path))?;
        save_mask(&s.mask, dir.join(&mask_path))?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            volume_path,
            mask_path,
            true_class: s.true_class,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&entries).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Loads a dataset from a manifest file, or from `manifest.json` inside a
/// directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let manifest = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let base = manifest.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| Error::json(&manifest, e))?;
    let mut subjects = Vec::with_capacity(entries.len());
    for e in entries {
        let volume = load_volume(base.join(&e.volume_path))?;
        let mask = load_mask(base.join(&e.mask_path))?;
        subjects.push(Subject::new(e.id, volume, mask, e.true_class)?);
    }
    let k_true = subjects.iter().filter_map(|s| s.true_class).max().map_or(0, |m| m + 1);
    Dataset::new(subjects, k_true)
}
