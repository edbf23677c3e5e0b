//! Binary parameter checkpoints.
//!
//! Byte layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "CGTJCKPT"
//! version    u32       1
//! meta_len   u32       length of the UTF-8 JSON metadata that follows
//! meta       meta_len bytes
//! count      u32       number of tensors
//! per tensor:
//!   name_len u32, name (UTF-8)
//!   ndim     u32, dims u64 × ndim
//!   data     f64 × product(dims)
//! ```

use super::params::ParamStore;
use super::tensor::Tensor;
use super::{NnError, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"CGTJCKPT";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, store: &ParamStore, meta: &str) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, t) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String> {
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| NnError::Checkpoint(e.to_string()))
}

/// Reads a checkpoint, returning the metadata string and the parameters.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(String, ParamStore)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let meta = read_string(&mut r, meta_len)?;
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let name = read_string(&mut r, name_len)?;
        let ndim = read_u32(&mut r)? as usize;
        let dims = (0..ndim)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(read_u64(&mut r)?.to_le_bytes()));
        }
        store.add(name, Tensor::new(dims, data)?)?;
    }
    Ok((meta, store))
}

pub fn save(path: &Path, store: &ParamStore, meta: &str) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(&mut w, store, meta)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(String, ParamStore)> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
