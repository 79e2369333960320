//! Weight files: a JSON header line, a little-endian f32 blob, and a CRC32
//! of everything before it.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelWeights, Scalar, TensorKind};
use crate::error::{Error, Result};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    kind: TensorKind,
    dtype: String,
    shape: Vec<usize>,
    /// Element offset into the blob.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    architecture: String,
    config: ModelConfig,
    seed: u64,
    tensors: BTreeMap<String, TensorEntry>,
}

pub(crate) fn encode<F: Scalar>(w: &ModelWeights<F>) -> Result<Vec<u8>> {
    let mut tensors = BTreeMap::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0;
    for (kind, map) in [(TensorKind::Param, &w.params), (TensorKind::Buffer, &w.buffers)] {
        for (name, t) in map {
            tensors.insert(
                name.clone(),
                TensorEntry {
                    kind,
                    dtype: "f32".into(),
                    shape: t.shape().to_vec(),
                    offset,
                },
            );
            for v in t.iter() {
                blob.extend_from_slice(&v.to_f32().unwrap().to_le_bytes());
            }
            offset += t.len();
        }
    }
    let header = Header {
        format_version: WEIGHTS_FORMAT_VERSION,
        architecture: w.config.architecture().into(),
        config: w.config.clone(),
        seed: w.seed,
        tensors,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.extend_from_slice(&blob);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub(crate) fn decode<F: Scalar>(bytes: &[u8]) -> Result<ModelWeights<F>> {
    if bytes.len() < 4 {
        return Err(Error::ChecksumError("file shorter than its checksum".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::ChecksumError("CRC32 mismatch (truncated or corrupted)".into()));
    }
    let mut stream = serde_json::Deserializer::from_slice(body).into_iter::<serde_json::Value>();
    let value = match stream.next() {
        Some(Ok(v)) => v,
        _ => return Err(Error::ChecksumError("unreadable header".into())),
    };
    let header_end = stream.byte_offset();
    // Check the version before trusting the rest of the header's schema.
    let version = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != WEIGHTS_FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version as u32,
            expected: WEIGHTS_FORMAT_VERSION,
        });
    }
    let header: Header = serde_json::from_value(value)?;
    if header.architecture != header.config.architecture() {
        return Err(Error::IncompatibleModel(format!(
            "header says {}, config is {}",
            header.architecture,
            header.config.architecture()
        )));
    }
    let blob = body
        .get(header_end + 1..)
        .filter(|_| body.get(header_end) == Some(&b'\n'))
        .ok_or_else(|| Error::ChecksumError("missing header terminator".into()))?;
    if blob.len() % 4 != 0 {
        return Err(Error::ChecksumError("data block is not a whole number of f32 values".into()));
    }
    let n_elems = blob.len() / 4;
    let mut params = BTreeMap::new();
    let mut buffers = BTreeMap::new();
    for (name, e) in header.tensors {
        if e.dtype != "f32" {
            return Err(Error::UnsupportedFormat(format!("tensor dtype {}", e.dtype)));
        }
        let len: usize = e.shape.iter().product();
        if e.offset + len > n_elems {
            return Err(Error::ShapeMismatch(format!("{name} extends past the data block")));
        }
        let data: Vec<F> = blob[e.offset * 4..(e.offset + len) * 4]
            .chunks_exact(4)
            .map(|b| F::from_f32(f32::from_le_bytes(b.try_into().unwrap())).unwrap())
            .collect();
        let arr = ArrayD::from_shape_vec(IxDyn(&e.shape), data)
            .map_err(|err| Error::ShapeMismatch(err.to_string()))?;
        match e.kind {
            TensorKind::Param => params.insert(name, arr),
            TensorKind::Buffer => buffers.insert(name, arr),
        };
    }
    ModelWeights::from_parts(header.config, header.seed, params, buffers)
}

/// Writes weights atomically (temp file, then rename).
pub fn save_weights<F: Scalar>(w: &ModelWeights<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(w)?;
    let tmp = path.with_extension("weights.tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_weights<F: Scalar>(path: impl AsRef<Path>) -> Result<ModelWeights<F>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    decode(&bytes)
}
