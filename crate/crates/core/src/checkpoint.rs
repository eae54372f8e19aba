//! Flat binary parameter files.
//!
//! Layout: the 5 magic bytes `MEGA1`, six little-endian `u64` dimensions
//! (input, hidden, embedding, projection, layers, augmenter hidden), then
//! every tensor of [`ModelParams`] in [`ParamSet`] order as row-major
//! little-endian `f64`.

use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::eval::write_atomic;
use crate::gnn::{init_params, ModelDims, ModelParams, ParamSet};

pub const MAGIC: &[u8; 5] = b"MEGA1";
const HEADER_LEN: usize = MAGIC.len() + 6 * 8;

pub fn params_to_bytes(params: &ModelParams) -> Vec<u8> {
    let d = params.dims();
    let tensors = params.tensors();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.n_scalars());
    out.extend_from_slice(MAGIC);
    for v in [d.input, d.hidden, d.embedding, d.projection, d.layers, d.augmenter_hidden] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for t in &tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a parameter file; with `expected`, the header must match it.
pub fn params_from_bytes(bytes: &[u8], expected: Option<ModelDims>) -> Result<ModelParams> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes (expected MEGA1)".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint("truncated dimension header".into()));
    }
    let header: Vec<usize> = bytes[MAGIC.len()..HEADER_LEN]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
        .collect();
    let dims = ModelDims {
        input: header[0],
        hidden: header[1],
        embedding: header[2],
        projection: header[3],
        layers: header[4],
        augmenter_hidden: header[5],
    };
    if let Some(want) = expected {
        if want != dims {
            return Err(Error::Checkpoint(format!("dimension header {dims:?} does not match configuration {want:?}")));
        }
    }
    if header.iter().any(|&v| v == 0 || v > 1 << 20) {
        return Err(Error::Checkpoint(format!("implausible dimension header {dims:?}")));
    }
    // A fresh model of the same dimensions supplies shapes and order.
    let template = init_params(dims, 0)?;
    let body = &bytes[HEADER_LEN..];
    let expected_len = 8 * template.n_scalars();
    if body.len() != expected_len {
        return Err(Error::Checkpoint(format!("expected {expected_len} parameter bytes, found {}", body.len())));
    }
    let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let tensors = template
        .tensors()
        .iter()
        .map(|t| Tensor::new(values.by_ref().take(t.numel()).collect(), t.dims()))
        .collect::<Result<Vec<_>>>()?;
    template.with_tensors(&tensors)
}

pub fn save_params(path: &Path, params: &ModelParams) -> Result<()> {
    write_atomic(path, &params_to_bytes(params))
}

pub fn load_params(path: &Path, expected: Option<ModelDims>) -> Result<ModelParams> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    params_from_bytes(&bytes, expected)
}
