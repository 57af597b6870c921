//! Dataset persistence: a row-major little-endian `f32` blob plus a TOML manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Domain, DomainDataset};
use crate::error::{Error, Result};
use crate::synth::FaultType;
use crate::Float;

pub const DATASET_FORMAT: &str = "ptpai-dataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    /// Blob file name, relative to the manifest.
    pub data_file: String,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub domain: Domain,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    /// Evaluation-only ground truth of an unlabeled domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sealed_labels: Option<Vec<usize>>,
    /// Noise scale drawn per row during synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn describe<T: Float>(ds: &DomainDataset<T>, data_file: impl Into<String>) -> Self {
        Self {
            format: DATASET_FORMAT.into(),
            data_file: data_file.into(),
            rows: ds.len(),
            cols: ds.dim(),
            dtype: "f32le".into(),
            domain: ds.domain,
            n_classes: ds.n_classes,
            class_names: (0..ds.n_classes)
                .map(|c| FaultType::from_class_id(c).map_or_else(|| c.to_string(), |f| f.label().to_string()))
                .collect(),
            fs: None,
            seed: None,
            labels: ds.labels.clone(),
            sealed_labels: ds.sealed_labels().map(|s| s.reveal().to_vec()),
            betas: None,
            notes: BTreeMap::new(),
        }
    }
}

fn manifest_path(bin: &Path) -> PathBuf {
    bin.with_extension("manifest.toml")
}

/// Writes `bin_path` and the manifest next to it; returns the manifest path.
pub fn write_dataset<T: Float>(bin_path: &Path, ds: &DomainDataset<T>, mut manifest: DatasetManifest) -> Result<PathBuf> {
    let file_name = bin_path
        .file_name()
        .and_then(|f| f.to_str())
        .ok_or_else(|| Error::InvalidInput(format!("bad dataset path {}", bin_path.display())))?;
    manifest.data_file = file_name.to_string();
    manifest.rows = ds.len();
    manifest.cols = ds.dim();
    let mut bytes = Vec::with_capacity(ds.len() * ds.dim() * 4);
    for v in ds.features.iter() {
        bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    if let Some(dir) = bin_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(bin_path, bytes)?;
    let path = manifest_path(bin_path);
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, text)?;
    Ok(path)
}

pub fn read_dataset<T: Float>(manifest: &Path) -> Result<(DomainDataset<T>, DatasetManifest)> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io_at(manifest, e))?;
    let m: DatasetManifest = toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", manifest.display())))?;
    if m.format != DATASET_FORMAT || m.dtype != "f32le" {
        return Err(Error::Format(format!("unsupported dataset format {} / {}", m.format, m.dtype)));
    }
    let bin = manifest.parent().unwrap_or(Path::new(".")).join(&m.data_file);
    let bytes = fs::read(&bin).map_err(|e| Error::io_at(&bin, e))?;
    if bytes.len() != m.rows * m.cols * 4 {
        return Err(Error::Format(format!(
            "{}: {} bytes, manifest declares {} x {} f32",
            bin.display(),
            bytes.len(),
            m.rows,
            m.cols
        )));
    }
    let values: Vec<T> = bytes
        .chunks_exact(4)
        .map(|c| T::lit(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))))
        .collect();
    let features = Array2::from_shape_vec((m.rows, m.cols), values).map_err(|e| Error::Shape(e.to_string()))?;
    let ds = match (&m.labels, &m.sealed_labels) {
        (Some(l), _) => DomainDataset::labeled(features, l.clone(), m.n_classes, m.domain)?,
        (None, Some(s)) => DomainDataset::unlabeled(features, m.n_classes, m.domain).with_sealed(s.clone())?,
        (None, None) => DomainDataset::unlabeled(features, m.n_classes, m.domain),
    };
    Ok((ds, m))
}
