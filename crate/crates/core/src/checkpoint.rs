//! `DFW1` parameter checkpoints.
//!
//! Layout (all integers little-endian u32):
//!
//! ```text
//! "DFW1" | count | count × ( name_len | name (UTF-8) | ndim | dims… | f32 payload )
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Element, Tensor};

pub const MAGIC: &[u8; 4] = b"DFW1";

/// Upper bound on rank accepted when decoding.
const MAX_NDIM: usize = 16;

pub fn encode<T: Element>(store: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + store.num_scalars() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.ndim() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.pos, format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(Error::format(
                0,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(got), String::from_utf8_lossy(magic)),
            ));
        }
        Ok(())
    }

    /// Reads `ndim` then the dims; rejects empty shapes, zero dims and
    /// element counts that overflow or exceed the remaining payload.
    pub(crate) fn dims(&mut self, elem_size: usize) -> Result<Vec<usize>> {
        let at = self.pos;
        let ndim = self.u32("ndim")? as usize;
        if ndim == 0 || ndim > MAX_NDIM {
            return Err(Error::format(at, format!("rank {ndim} outside 1..={MAX_NDIM}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        let mut count: usize = 1;
        for _ in 0..ndim {
            let at = self.pos;
            let d = self.u32("dim")? as usize;
            if d == 0 {
                return Err(Error::format(at, "zero-sized dimension"));
            }
            count = count
                .checked_mul(d)
                .filter(|c| c.checked_mul(elem_size).is_some())
                .ok_or_else(|| Error::format(at, "dimension product overflows"))?;
            dims.push(d);
        }
        let remaining = self.bytes.len() - self.pos;
        if count * elem_size > remaining {
            return Err(Error::format(
                self.pos,
                format!("truncated payload: {count} elements need {} bytes, {remaining} left", count * elem_size),
            ));
        }
        Ok(dims)
    }

    pub(crate) fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(count * 4, "payload")?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(self.pos, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

/// Parses a checkpoint into `(name, tensor)` pairs in file order.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let count = r.u32("parameter count")? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let at = r.pos();
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::format(at, "parameter name is not UTF-8"))?
            .to_string();
        let dims = r.dims(4)?;
        let data = r.f32s(dims.iter().product())?;
        out.push((name, Tensor::new(&dims, data)?));
    }
    r.finish()?;
    Ok(out)
}

/// Copies decoded tensors into `store`. Every store parameter must be
/// present with a matching shape and no extra entries are allowed; all
/// offending parameters are reported together.
pub fn load_into<T: Element>(store: &mut ParamStore<T>, entries: Vec<(String, Tensor<f32>)>) -> Result<()> {
    let mut problems = Vec::new();
    let mut seen = vec![false; store.len()];
    let mut updates = Vec::new();
    for (name, tensor) in entries {
        match store.find(&name) {
            None => problems.push(format!("{name}: not a model parameter")),
            Some(id) => {
                seen[id.index()] = true;
                let want = store.value(id).shape();
                if want != tensor.shape() {
                    problems.push(format!("{name}: shape {:?}, model expects {want:?}", tensor.shape()));
                } else {
                    updates.push((id, tensor));
                }
            }
        }
    }
    for id in store.ids() {
        if !seen[id.index()] {
            problems.push(format!("{}: missing from checkpoint", store.name(id)));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Load(problems));
    }
    for (id, t) in updates {
        *store.value_mut(id) = t.cast();
    }
    Ok(())
}

pub fn save<T: Element>(path: &Path, store: &ParamStore<T>) -> Result<()> {
    std::fs::write(path, encode(store))?;
    Ok(())
}

pub fn load<T: Element>(path: &Path, store: &mut ParamStore<T>) -> Result<()> {
    let bytes = std::fs::read(path)?;
    load_into(store, decode(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.add("a.weight", Tensor::new(&[2, 3], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5, 1e-30, -7.25]).unwrap());
        s.add("a.bias", Tensor::new(&[3], vec![0.1, 0.2, 0.3]).unwrap());
        s
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&store());
        assert_eq!(&bytes[..4], b"DFW1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
        assert_eq!(&bytes[12..20], b"a.weight");
    }

    #[test]
    fn round_trip_is_bitwise() {
        let s = store();
        let mut t = s.clone();
        for id in t.ids().collect::<Vec<_>>() {
            t.value_mut(id).data_mut().fill(9.0);
        }
        load_into(&mut t, decode(&encode(&s)).unwrap()).unwrap();
        assert!(t.bit_eq(&s));
        assert_eq!(encode(&t), encode(&s));
    }

    #[test]
    fn mismatches_are_listed() {
        let mut other = ParamStore::<f32>::new();
        other.add("a.weight", Tensor::zeros(&[3, 2]));
        other.add("b.extra", Tensor::zeros(&[1]));
        let err = load_into(&mut other, decode(&encode(&store())).unwrap()).unwrap_err();
        let Error::Load(problems) = err else { panic!("expected load error") };
        assert_eq!(problems.len(), 3, "{problems:?}");
        assert!(problems.iter().any(|p| p.starts_with("a.weight: shape")));
        assert!(problems.iter().any(|p| p.starts_with("a.bias: not")));
        assert!(problems.iter().any(|p| p.starts_with("b.extra: missing")));
    }

    #[test]
    fn truncation_and_bad_magic() {
        let bytes = encode(&store());
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bad), Err(Error::Format { offset: 0, .. })));
    }
}
