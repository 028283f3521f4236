//! Binary checkpoint formats.
//!
//! Embedding checkpoint: magic "EKGE", u32 version, u32 dim, u32 |V|,
//! u32 |R|, then entity and relation matrices as row-major little-endian
//! f32.
//!
//! Policy checkpoint: magic "EKPO", u32 version, u32 d, u32 h, then the
//! weight tensors as little-endian f32 in the fixed order
//! w_i w_f w_o w_g b_i b_f b_o b_g w1 b1 w2 b2.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{EkarError, Result};
use crate::kge::EmbeddingTable;
use crate::policy::PolicyParams;

const EMBED_MAGIC: &[u8; 4] = b"EKGE";
const POLICY_MAGIC: &[u8; 4] = b"EKPO";
const VERSION: u32 = 1;

fn write_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn read_f32s(buf: &[u8], n: usize, off: &mut usize, path: &Path) -> Result<Vec<f64>> {
    let need = n * 4;
    if buf.len() < *off + need {
        return Err(EkarError::Checkpoint { path: path.into(), msg: "truncated file".into() });
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let s = *off + k * 4;
        out.push(f32::from_le_bytes([buf[s], buf[s + 1], buf[s + 2], buf[s + 3]]) as f64);
    }
    *off += need;
    Ok(out)
}

fn read_u32(buf: &[u8], off: &mut usize, path: &Path) -> Result<u32> {
    if buf.len() < *off + 4 {
        return Err(EkarError::Checkpoint { path: path.into(), msg: "truncated header".into() });
    }
    let v = u32::from_le_bytes([buf[*off], buf[*off + 1], buf[*off + 2], buf[*off + 3]]);
    *off += 4;
    Ok(v)
}

pub fn save_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(EMBED_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(table.dim as u32).to_le_bytes());
    out.extend_from_slice(&(table.num_entities as u32).to_le_bytes());
    out.extend_from_slice(&(table.num_relations as u32).to_le_bytes());
    write_f32s(&mut out, &table.entity);
    write_f32s(&mut out, &table.relation);
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| EkarError::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| EkarError::io(path, e))?;
    if buf.len() < 4 || &buf[..4] != EMBED_MAGIC {
        return Err(EkarError::Checkpoint { path: path.into(), msg: "bad magic".into() });
    }
    let mut off = 4;
    let version = read_u32(&buf, &mut off, path)?;
    if version != VERSION {
        return Err(EkarError::Checkpoint {
            path: path.into(),
            msg: format!("unsupported version {version}"),
        });
    }
    let dim = read_u32(&buf, &mut off, path)? as usize;
    let nv = read_u32(&buf, &mut off, path)? as usize;
    let nr = read_u32(&buf, &mut off, path)? as usize;
    let entity = read_f32s(&buf, nv * dim, &mut off, path)?;
    let relation = read_f32s(&buf, nr * dim, &mut off, path)?;
    Ok(EmbeddingTable { dim, num_entities: nv, num_relations: nr, entity, relation })
}

pub fn save_policy(path: &Path, params: &PolicyParams) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(POLICY_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.d as u32).to_le_bytes());
    out.extend_from_slice(&(params.h as u32).to_le_bytes());
    for buf in params.buffers() {
        write_f32s(&mut out, buf);
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| EkarError::io(path, e))
}

pub fn load_policy(path: &Path) -> Result<PolicyParams> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| EkarError::io(path, e))?;
    if buf.len() < 4 || &buf[..4] != POLICY_MAGIC {
        return Err(EkarError::Checkpoint { path: path.into(), msg: "bad magic".into() });
    }
    let mut off = 4;
    let version = read_u32(&buf, &mut off, path)?;
    if version != VERSION {
        return Err(EkarError::Checkpoint {
            path: path.into(),
            msg: format!("unsupported version {version}"),
        });
    }
    let d = read_u32(&buf, &mut off, path)? as usize;
    let h = read_u32(&buf, &mut off, path)? as usize;
    let mut params = PolicyParams::init(d, h, 0);
    let mut flat = Vec::new();
    let sizes: Vec<usize> = params.buffers().iter().map(|b| b.len()).collect();
    for n in sizes {
        flat.extend(read_f32s(&buf, n, &mut off, path)?);
    }
    params.set_from_flat(&flat);
    Ok(params)
}
