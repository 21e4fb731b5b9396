//! Checkpoint format.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! magic  "SCTX1"                      (5 bytes)
//! count  u64                          entries that follow
//! entry  name_len u64 | name UTF-8 | rank u64 | extents u64 × rank |
//!        values f32 × prod(extents)
//! ```
//!
//! Values are stored as raw little-endian f32 bits; round-tripping an f32
//! parameter set is bit-exact. Saving an f64 set truncates to f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::ParamSet;
use super::{Result, Scalar, Tensor, TensorError};

const MAGIC: &[u8; 5] = b"SCTX1";

pub fn save_checkpoint<S: Scalar>(path: &Path, params: &ParamSet<S>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<ParamSet<S>> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r)
}

pub fn write_checkpoint<S: Scalar, W: Write>(w: &mut W, params: &ParamSet<S>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u64).to_le_bytes())?;
        for &e in t.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<S: Scalar, R: Read>(r: &mut R) -> Result<ParamSet<S>> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let count = read_u64(r)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = read_u64(r)? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf)
            .map_err(|e| TensorError::Format(format!("bad name: {e}")))?;
        let rank = read_u64(r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 4];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            data.push(S::from_f64(f32::from_le_bytes(buf) as f64));
        }
        params.insert(name, Tensor::new(shape, data)?)?;
    }
    Ok(params)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
