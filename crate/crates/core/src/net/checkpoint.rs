//! Checkpoint format: an 8-byte magic, a little-endian `u64` header length,
//! a TOML header describing the tensors, then every tensor as `f64` little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, NetParams};
use crate::error::{Error, Result};
use crate::Float;

const MAGIC: &[u8; 8] = b"PTPAICK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: Architecture,
    /// Scalar type the weights were trained in.
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint<T: Float>(path: &Path, net: &NetParams<T>) -> Result<()> {
    let tensors = net.named_tensors();
    let header = CheckpointHeader {
        arch: net.arch.clone(),
        dtype: T::DTYPE.to_string(),
        tensors: tensors.iter().map(|(n, s, _)| TensorEntry { name: n.clone(), shape: s.clone() }).collect(),
    };
    let text = toml::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + text.len() + 8 * tensors.iter().map(|t| t.2.len()).sum::<usize>());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(text.len() as u64).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    for (_, _, data) in &tensors {
        for v in data.iter() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint<T: Float>(path: &Path) -> Result<(CheckpointHeader, NetParams<T>)> {
    let bytes = fs::read(path).map_err(|e| Error::io_at(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Format(format!("{} is not a checkpoint", path.display())));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| Error::Format("truncated checkpoint header".into()))?;
    let text = std::str::from_utf8(body).map_err(|e| Error::Format(e.to_string()))?;
    let header: CheckpointHeader = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;

    // structure comes from the architecture; values are overwritten below
    let mut rng = crate::rng::stream(0, 0);
    let mut net = NetParams::<T>::new(header.arch.clone(), &mut rng)?;
    let expected: Vec<(String, Vec<usize>)> = net.named_tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
    let stored: Vec<(String, Vec<usize>)> = header.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
    if expected != stored {
        return Err(Error::Format("checkpoint tensors do not match its architecture".into()));
    }
    let mut data = &bytes[16 + hlen..];
    for slot in net.all_tensors_mut() {
        let need = slot.len() * 8;
        if data.len() < need {
            return Err(Error::Format("truncated checkpoint data".into()));
        }
        for (v, chunk) in slot.iter_mut().zip(data[..need].chunks_exact(8)) {
            *v = T::lit(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
        }
        data = &data[need..];
    }
    if !data.is_empty() {
        return Err(Error::Format("trailing bytes after checkpoint data".into()));
    }
    Ok((header, net))
}
