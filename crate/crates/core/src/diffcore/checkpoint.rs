//! Binary checkpoint of named parameters.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   "SGCK"
//! version u32            (currently 1)
//! count   u32
//! count × { name_len u32, name utf-8, ndim u32, dims u32 × ndim, data f32 × Π dims }
//! ```

use super::{DiffError, ParamStore, Real, Tensor};
use crate::binio::Reader;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_NDIM: usize = 8;

pub fn encode_checkpoint<T: Real>(store: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.num_scalars() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, name, tensor) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>, DiffError> {
    decode_records(bytes).map_err(DiffError::Checkpoint)
}

fn decode_records(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>, String> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let count = r.u32()? as usize;
    let mut records = Vec::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| "parameter name is not utf-8")?.to_string();
        let ndim = r.u32()? as usize;
        if ndim > MAX_NDIM {
            return Err(format!("{name}: rank {ndim} too large"));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut len = 1usize;
        for _ in 0..ndim {
            let d = r.u32()? as usize;
            len = len.checked_mul(d).ok_or_else(|| format!("{name}: size overflow"))?;
            shape.push(d);
        }
        let data = r.f32s(len)?;
        records.push((name, Tensor::from_vec(&shape, data).map_err(|e| e.to_string())?));
    }
    r.finish()?;
    Ok(records)
}

/// Restores a store from checkpoint bytes; names and shapes must match.
pub fn load_checkpoint<T: Real>(store: &mut ParamStore<T>, bytes: &[u8]) -> Result<(), DiffError> {
    let records = decode_checkpoint(bytes)?;
    if records.len() != store.len() {
        return Err(DiffError::Checkpoint(format!(
            "checkpoint holds {} parameters, model has {}",
            records.len(),
            store.len()
        )));
    }
    store.assign_from(&records)
}
