//! Versioned checkpoint container.
//!
//! On-disk layout, all integers little-endian:
//!
//! ```text
//! bytes 0..8    magic "CSEGCKPT"
//! bytes 8..12   u32 format version (currently 1)
//! bytes 12..20  u64 header length in bytes
//! bytes 20..    JSON header: architecture spec, weight dtype, best
//!               validation accuracy/epoch, per-epoch history, seed,
//!               validation sample ids, and per-tensor name/shape entries
//! then          raw weight values, tensor after tensor in header order
//! ```
//!
//! Weights round-trip bit-exactly. Loading widens single- to
//! double-precision checkpoints (exact); narrowing is refused.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{build_network, Network};
use super::spec::{NetworkSpec, NnError};
use super::train::EpochStats;
use crate::scalar::{Dtype, Element};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"CSEGCKPT";
const FORMAT_VERSION: u32 = 1;

/// Errors from checkpoint save/load.
#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a valid checkpoint: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },
    #[error("checkpoint stores {stored} weights; loading as {requested} would lose precision")]
    Precision { stored: Dtype, requested: Dtype },
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
}

/// A trained network frozen at its best validation epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Element> {
    pub spec: NetworkSpec,
    /// Weight tensors in [`Network::named_tensors`] order.
    pub tensors: Vec<(String, Tensor<T>)>,
    pub best_val_acc: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
    /// Training seed; also reproduces the train/validation split.
    pub seed: u64,
    /// Ids of the validation samples `best_val_acc` was measured on.
    pub val_ids: Vec<String>,
}

impl<T: Element> Checkpoint<T> {
    /// Stable identifier: architecture id plus training seed.
    pub fn id(&self) -> String {
        format!("{}-s{}", self.spec.id, self.seed)
    }

    /// Rebuilds the network these weights belong to.
    pub fn restore(&self) -> Result<Network<T>, NnError> {
        let mut network = build_network(&self.spec, self.seed)?;
        network.load_tensors(&self.tensors)?;
        Ok(network)
    }

    /// Converts the stored weights to another precision.
    ///
    /// Widening (`f32` → `f64`) is exact; narrowing rounds.
    pub fn cast<U: Element>(&self) -> Checkpoint<U> {
        Checkpoint {
            spec: self.spec.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| (name.clone(), t.cast()))
                .collect(),
            best_val_acc: self.best_val_acc,
            best_epoch: self.best_epoch,
            history: self.history.clone(),
            seed: self.seed,
            val_ids: self.val_ids.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    dtype: Dtype,
    best_val_acc: f64,
    best_epoch: usize,
    history: Vec<EpochStats>,
    seed: u64,
    val_ids: Vec<String>,
    tensors: Vec<TensorMeta>,
}

/// Writes a checkpoint; see the module docs for the layout.
pub fn save_checkpoint<T: Element>(
    checkpoint: &Checkpoint<T>,
    path: &Path,
) -> Result<(), CheckpointError> {
    let header = Header {
        spec: checkpoint.spec.clone(),
        dtype: T::DTYPE,
        best_val_acc: checkpoint.best_val_acc,
        best_epoch: checkpoint.best_epoch,
        history: checkpoint.history.clone(),
        seed: checkpoint.seed,
        val_ids: checkpoint.val_ids.clone(),
        tensors: checkpoint
            .tensors
            .iter()
            .map(|(name, t)| TensorMeta {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;

    let blob_len: usize = checkpoint
        .tensors
        .iter()
        .map(|(_, t)| t.len() * T::DTYPE.byte_width())
        .sum();
    let mut out = Vec::with_capacity(20 + header_json.len() + blob_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (_, tensor) in &checkpoint.tensors {
        for &v in tensor.data() {
            v.write_le(&mut out);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a checkpoint saved by [`save_checkpoint`].
pub fn load_checkpoint<T: Element>(path: &Path) -> Result<Checkpoint<T>, CheckpointError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 20 {
        return Err(CheckpointError::Format(format!(
            "file is {} bytes, smaller than the fixed preamble",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body_start = 20usize.checked_add(header_len).ok_or_else(|| {
        CheckpointError::Format("header length overflows".into())
    })?;
    if body_start > bytes.len() {
        return Err(CheckpointError::Format(
            "header runs past the end of the file".into(),
        ));
    }
    let header: Header = serde_json::from_slice(&bytes[20..body_start])?;

    let stored = header.dtype;
    let requested = T::DTYPE;
    let widening = stored == Dtype::F32 && requested == Dtype::F64;
    if stored != requested && !widening {
        return Err(CheckpointError::Precision { stored, requested });
    }

    let width = stored.byte_width();
    let expected_blob: usize = header
        .tensors
        .iter()
        .map(|m| m.shape.iter().product::<usize>() * width)
        .sum();
    if bytes.len() - body_start != expected_blob {
        return Err(CheckpointError::Format(format!(
            "weight section is {} bytes, header promises {expected_blob}",
            bytes.len() - body_start
        )));
    }

    let mut offset = body_start;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for meta in &header.tensors {
        let count: usize = meta.shape.iter().product();
        let data: Vec<T> = (0..count)
            .map(|i| {
                let at = offset + i * width;
                let raw = &bytes[at..at + width];
                match stored {
                    Dtype::F32 => T::from_f64_value(f32::read_le(raw) as f64),
                    Dtype::F64 => T::from_f64_value(f64::read_le(raw)),
                }
            })
            .collect();
        offset += count * width;
        let tensor = Tensor::from_vec(meta.shape.clone(), data)
            .map_err(|e| CheckpointError::Format(e.to_string()))?;
        tensors.push((meta.name.clone(), tensor));
    }

    Ok(Checkpoint {
        spec: header.spec,
        tensors,
        best_val_acc: header.best_val_acc,
        best_epoch: header.best_epoch,
        history: header.history,
        seed: header.seed,
        val_ids: header.val_ids,
    })
}
