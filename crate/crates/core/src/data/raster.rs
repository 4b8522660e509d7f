//! `DFR1` raster files.
//!
//! ```text
//! "DFR1" | dtype: u8 (0 = f32, 1 = u8) | ndim: u32 | ndim × dim: u32 | payload
//! ```
//!
//! Integers and floats are little-endian, payload is row-major.

use std::path::Path;

use crate::checkpoint::Reader;
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"DFR1";

#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    F32(Tensor<f32>),
    U8(Mask),
}

impl Raster {
    pub fn shape(&self) -> &[usize] {
        match self {
            Raster::F32(t) => t.shape(),
            Raster::U8(m) => m.shape(),
        }
    }

    pub fn dtype_code(&self) -> u8 {
        match self {
            Raster::F32(_) => 0,
            Raster::U8(_) => 1,
        }
    }

    /// Bitwise equality, so NaN payloads compare equal to themselves.
    pub fn bit_eq(&self, other: &Raster) -> bool {
        match (self, other) {
            (Raster::F32(a), Raster::F32(b)) => a.bit_eq(b),
            (Raster::U8(a), Raster::U8(b)) => a == b,
            _ => false,
        }
    }
}

pub fn encode_raster(r: &Raster) -> Result<Vec<u8>> {
    let shape = r.shape();
    if shape.is_empty() {
        return Err(Error::Input("rasters need at least one dimension".into()));
    }
    if let Some(d) = shape.iter().find(|&&d| d > u32::MAX as usize) {
        return Err(Error::Input(format!("dimension {d} does not fit in u32")));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(r.dtype_code());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match r {
        Raster::F32(t) => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Raster::U8(m) => out.extend_from_slice(m.data()),
    }
    Ok(out)
}

pub fn decode_raster(bytes: &[u8]) -> Result<Raster> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let at = r.pos();
    let code = r.u8("dtype")?;
    let elem = match code {
        0 => 4,
        1 => 1,
        _ => return Err(Error::format(at, format!("unknown dtype code {code}"))),
    };
    let dims = r.dims(elem)?;
    let count: usize = dims.iter().product();
    let raster = if code == 0 {
        Raster::F32(Tensor::new(&dims, r.f32s(count)?)?)
    } else {
        Raster::U8(Mask::new(&dims, r.take(count, "payload")?.to_vec())?)
    };
    r.finish()?;
    Ok(raster)
}

pub fn write_raster(path: &Path, r: &Raster) -> Result<()> {
    std::fs::write(path, encode_raster(r)?)?;
    Ok(())
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    decode_raster(&std::fs::read(path)?)
}
