//! Flat little-endian tensor container.
//!
//! Layout: magic `VLRL`, version `u32`, tensor count `u32`, then for every
//! tensor: name length `u32`, UTF-8 name, rank `u32`, one `u32` per dim,
//! and the data as `f64` values.

use std::io::{self, Read, Write};

use super::{Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VLRL";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<R: Real, W: Write>(mut out: W, tensors: &[(String, &Tensor<R>)]) -> io::Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for &x in t.data() {
            out.write_all(&x.as_f64().to_le_bytes())?;
        }
    }
    out.flush()
}

fn read_u32<Rd: Read>(input: &mut Rd) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn read_checkpoint<R: Real, Rd: Read>(mut input: Rd) -> io::Result<Vec<(String, Tensor<R>)>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(invalid("bad checkpoint magic"));
    }
    let version = read_u32(&mut input)?;
    if version != CHECKPOINT_VERSION {
        return Err(invalid(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(&mut input)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut input)? as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| invalid(e.to_string()))?;
        let rank = read_u32(&mut input)? as usize;
        let shape = (0..rank)
            .map(|_| read_u32(&mut input).map(|d| d as usize))
            .collect::<io::Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            input.read_exact(&mut buf)?;
            data.push(R::of(f64::from_le_bytes(buf)));
        }
        let t = Tensor::new(shape, data).map_err(|e| invalid(e.to_string()))?;
        tensors.push((name, t));
    }
    Ok(tensors)
}
