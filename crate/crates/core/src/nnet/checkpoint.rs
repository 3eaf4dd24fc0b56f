//! Model checkpoint container.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `DDLABMLP` |
//! | 4     | version `u32` (= 1) |
//! | 4     | hidden units `u32` |
//! | 4     | input width `u32` |
//! | 4     | output width `u32` |
//! | 8 * P | `f64` parameters: W1 row-major, b1, W2 row-major, b2 |

use std::fs;
use std::path::Path;

use super::model::{param_count, MlpModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DDLABMLP";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;
const DIMS_LEN: usize = 8;

pub fn checkpoint_bytes(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + DIMS_LEN + 8 * model.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.hidden_units() as u32).to_le_bytes());
    out.extend_from_slice(&(model.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(model.output_dim() as u32).to_le_bytes());
    for v in model.params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<MlpModel> {
    if bytes.len() < HEADER_LEN + DIMS_LEN {
        return Err(Error::Checkpoint(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = le_u32(bytes, 8);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let h = le_u32(bytes, 12) as usize;
    let d = le_u32(bytes, 16) as usize;
    let c = le_u32(bytes, 20) as usize;
    let count = param_count(d, h, c);
    let body = &bytes[HEADER_LEN + DIMS_LEN..];
    if body.len() != 8 * count {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            8 * count,
            body.len()
        )));
    }
    let mut model = MlpModel::zeros(d, h, c);
    for (p, chunk) in model.params_mut().zip(body.chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    model_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
