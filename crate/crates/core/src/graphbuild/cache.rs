//! Binary graph cache.
//!
//! ```text
//! magic "SGC1", N u32, f_in u32, N_et u32, n_ligand u32, n_bond_types u32
//! x  f32 × N·f_in            row-major
//! A  ⌈N·N·N_et / 8⌉ bytes    bit k = (i·N + j)·N_et + e, least significant bit first
//! R  f32 × N·N
//! ```

use super::{GraphError, GraphTensors};
use crate::binio::{put_f32s, put_u32, Reader};
use crate::diffcore::Tensor;

pub const GRAPH_MAGIC: &[u8; 4] = b"SGC1";

pub fn encode_graph(g: &GraphTensors) -> Vec<u8> {
    let n_bits = g.n * g.n * g.n_et;
    let mut out = Vec::with_capacity(24 + 4 * (g.x.len() + g.r.len()) + n_bits.div_ceil(8));
    out.extend_from_slice(GRAPH_MAGIC);
    for v in [g.n, g.f_in(), g.n_et, g.n_ligand, g.n_bond_types] {
        put_u32(&mut out, v as u32);
    }
    put_f32s(&mut out, g.x.data().iter().copied());
    let bytes = g.bits.iter().flat_map(|w| w.to_le_bytes());
    out.extend(bytes.take(n_bits.div_ceil(8)));
    put_f32s(&mut out, g.r.iter().copied());
    out
}

pub fn decode_graph(bytes: &[u8]) -> Result<GraphTensors, GraphError> {
    decode(bytes).map_err(GraphError::Cache)?.checked()
}

impl GraphTensors {
    fn checked(self) -> Result<Self, GraphError> {
        self.validate().map_err(|e| GraphError::Cache(e.to_string()))?;
        Ok(self)
    }
}

fn decode(bytes: &[u8]) -> Result<GraphTensors, String> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != GRAPH_MAGIC {
        return Err("bad magic".into());
    }
    let n = r.u32()? as usize;
    let f_in = r.u32()? as usize;
    let n_et = r.u32()? as usize;
    let n_ligand = r.u32()? as usize;
    let n_bond_types = r.u32()? as usize;
    let n_x = n.checked_mul(f_in).ok_or("size overflow")?;
    let n_r = n.checked_mul(n).ok_or("size overflow")?;
    let n_bits = n_r.checked_mul(n_et).ok_or("size overflow")?;
    let needed = n_x
        .checked_add(n_r)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(n_bits.div_ceil(8)))
        .ok_or("size overflow")?;
    if needed != r.remaining() {
        return Err(format!("payload is {} bytes, header implies {needed}", r.remaining()));
    }
    let x = Tensor::matrix(n, f_in, r.f32s(n_x)?).map_err(|e| e.to_string())?;
    let packed = r.take(n_bits.div_ceil(8))?;
    let mut bits = vec![0u64; n_bits.div_ceil(64)];
    for (k, &b) in packed.iter().enumerate() {
        bits[k / 8] |= (b as u64) << (8 * (k % 8));
    }
    if n_bits % 64 != 0 {
        if let Some(last) = bits.last() {
            if last >> (n_bits % 64) != 0 {
                return Err("padding bits set".into());
            }
        }
    }
    let dist = r.f32s(n_r)?;
    r.finish()?;
    Ok(GraphTensors { x, bits, r: dist, n, n_et, n_bond_types, n_ligand })
}
