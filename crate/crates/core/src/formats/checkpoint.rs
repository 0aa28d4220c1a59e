//! Model checkpoints.
//!
//! Layout: magic `NFCK`, `u32` version, `u64` length of the JSON model spec,
//! the model spec, `u64` parameter count, then the parameters as `f64`. All
//! integers and floats are little-endian.

use std::path::Path;

use super::FormatError;
use crate::models::{Model, ModelSpec};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let spec = serde_json::to_vec(model.spec()).expect("spec serializes");
    let params = model.parameters();
    let mut out = Vec::with_capacity(24 + spec.len() + 8 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.len() as u64).to_le_bytes());
    out.extend_from_slice(&spec);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
    let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| {
        FormatError::Checkpoint(format!("truncated {what} at byte {}", *pos))
    })?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

fn read_u64(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u64, FormatError> {
    Ok(u64::from_le_bytes(take(bytes, pos, 8, what)?.try_into().expect("8 bytes")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model, FormatError> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4, "magic")? != CHECKPOINT_MAGIC {
        return Err(FormatError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, 4, "version")?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::Checkpoint(format!("unsupported version {version}")));
    }
    let spec_len = read_u64(bytes, &mut pos, "spec length")? as usize;
    let spec: ModelSpec = serde_json::from_slice(take(bytes, &mut pos, spec_len, "spec")?)
        .map_err(|e| FormatError::Checkpoint(format!("spec: {e}")))?;
    let n = read_u64(bytes, &mut pos, "parameter count")? as usize;
    let raw = take(bytes, &mut pos, n.saturating_mul(8), "parameters")?;
    if pos != bytes.len() {
        return Err(FormatError::Checkpoint(format!("{} trailing bytes", bytes.len() - pos)));
    }
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut model = Model::build(&spec, 0).map_err(|e| FormatError::Checkpoint(e.to_string()))?;
    model
        .set_parameters(&params)
        .map_err(|e| FormatError::Checkpoint(e.to_string()))?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| FormatError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode_checkpoint(&bytes)
}
