//! Binary weight files.
//!
//! Layout: `b"ILAB"`, `u32` version, `u64` header length, UTF-8 JSON header,
//! then the payload. Integers are little-endian. Each tensor is stored
//! row-major in little-endian at `offset` bytes into the payload.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lm::{ModelConfig, ModelParams, Vocab};
use crate::numerics::{DType, Real, Tensor};

pub const MAGIC: &[u8; 4] = b"ILAB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: u64,
}

impl TensorEntry {
    fn byte_len(&self) -> u64 {
        (self.shape.iter().product::<usize>() * self.dtype.size()) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vocab>,
}

/// Weights plus the vocabulary they were trained with, if known.
#[derive(Debug, Clone)]
pub struct Checkpoint<T: Real = f64> {
    pub params: ModelParams<T>,
    pub vocab: Option<Vocab>,
}

pub fn to_bytes<T: Real>(params: &ModelParams<T>, vocab: Option<&Vocab>) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    for (name, t) in params.names().into_iter().zip(params.tensors()) {
        entries.push(TensorEntry {
            name,
            dtype: T::DTYPE,
            shape: t.shape().to_vec(),
            offset: payload.len() as u64,
        });
        for &v in t.data() {
            v.write_le(&mut payload);
        }
    }
    let header = CheckpointHeader {
        config: params.config,
        tensors: entries,
        vocab: vocab.cloned(),
    };
    write_container(&header, &payload)
}

/// Frames a JSON header and a payload in the checkpoint layout.
pub fn write_container<H: Serialize>(header: &H, payload: &[u8]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(payload);
    Ok(out)
}

fn read_exact<'a>(bytes: &'a [u8], at: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| LabError::Format(format!("file truncated while reading {what}")))?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

/// Splits a container into its parsed header and payload bytes.
pub fn read_container<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, &[u8])> {
    let mut at = 0;
    if read_exact(bytes, &mut at, 4, "magic")? != MAGIC {
        return Err(LabError::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(read_exact(bytes, &mut at, 4, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(LabError::Format(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(read_exact(bytes, &mut at, 8, "header length")?.try_into().unwrap());
    let hlen = usize::try_from(hlen).map_err(|_| LabError::Format("header length overflow".into()))?;
    let header: H = serde_json::from_slice(read_exact(bytes, &mut at, hlen, "header")?)
        .map_err(|e| LabError::Format(format!("header is not valid JSON: {e}")))?;
    Ok((header, &bytes[at..]))
}

/// Checks that `entries` tile `payload` contiguously and decodes each one,
/// converting precision where the stored dtype differs from `T`.
pub fn read_tensors<T: Real>(entries: &[TensorEntry], payload: &[u8]) -> Result<Vec<(String, Tensor<T>)>> {
    let mut expected_offset = 0u64;
    for e in entries {
        if e.offset != expected_offset {
            return Err(LabError::Format(format!(
                "tensor {} at offset {} overlaps or leaves a gap (expected {expected_offset})",
                e.name, e.offset
            )));
        }
        expected_offset += e.byte_len();
    }
    if expected_offset != payload.len() as u64 {
        return Err(LabError::Format(format!(
            "header describes {expected_offset} payload bytes, file holds {}",
            payload.len()
        )));
    }
    let mut named = Vec::with_capacity(entries.len());
    for e in entries {
        let start = e.offset as usize;
        let raw = &payload[start..start + e.byte_len() as usize];
        let size = e.dtype.size();
        let data: Vec<T> = match e.dtype {
            DType::F64 => raw.chunks(size).map(|c| T::from_f64(f64::read_le(c))).collect(),
            DType::F32 if T::DTYPE == DType::F32 => raw.chunks(size).map(T::read_le).collect(),
            DType::F32 => raw.chunks(size).map(|c| T::from_f64(f32::read_le(c) as f64)).collect(),
        };
        named.push((e.name.clone(), Tensor::from_vec(e.shape.clone(), data)?));
    }
    Ok(named)
}

/// Parses a checkpoint. Tensors stored in another precision are converted;
/// same-precision loads are bit-exact.
pub fn from_bytes<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let (header, payload): (CheckpointHeader, _) = read_container(bytes)?;
    let named = read_tensors(&header.tensors, payload)?;
    let params = ModelParams::from_named(header.config, named)?;
    Ok(Checkpoint {
        params,
        vocab: header.vocab,
    })
}

pub fn save<T: Real>(path: &Path, params: &ModelParams<T>, vocab: Option<&Vocab>) -> Result<()> {
    let bytes = to_bytes(params, vocab)?;
    std::fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

pub fn load<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
    from_bytes(&bytes)
}
