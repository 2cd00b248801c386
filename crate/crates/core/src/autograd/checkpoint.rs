//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "PTMF" | version | count
//! repeated count times:
//!     name_len | name (UTF-8) | rank | extent * rank | f64 LE payload (row-major)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PTMF";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + store.num_scalars() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        let name = p.name().as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        let shape = p.value().shape();
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value().data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Option<&'b [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Decodes a checkpoint into `(name, tensor)` pairs in file order.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor)>> {
    let truncated = || Error::format(path, "truncated checkpoint");
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4) != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::format(path, "bad checkpoint magic (expected PTMF)"));
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let count = r.u32().ok_or_else(truncated)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32().ok_or_else(truncated)? as usize;
        let name = std::str::from_utf8(r.take(len).ok_or_else(truncated)?)
            .map_err(|_| Error::format(path, "parameter name is not UTF-8"))?
            .to_string();
        let rank = r.u32().ok_or_else(truncated)? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize).ok_or_else(truncated))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let payload = r.take(n.checked_mul(8).ok_or_else(truncated)?).ok_or_else(truncated)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data)
            .map_err(|e| Error::format(path, format!("parameter {name}: {e}")))?;
        out.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after checkpoint"));
    }
    Ok(out)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(store)).map_err(|e| Error::io(path, e))
}

/// Loads values into an existing store. Names and shapes must match exactly.
pub fn load_checkpoint(store: &mut ParamStore, path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let entries = decode_checkpoint(&bytes, path)?;
    if entries.len() != store.len() {
        return Err(Error::format(
            path,
            format!(
                "checkpoint holds {} parameters, model expects {}",
                entries.len(),
                store.len()
            ),
        ));
    }
    for (name, value) in entries {
        let id = store
            .find(&name)
            .ok_or_else(|| Error::format(path, format!("unknown parameter {name}")))?;
        store
            .set_value(id, value)
            .map_err(|e| Error::format(path, format!("parameter {name}: {e}")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_of_a_single_scalar() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(vec![1], vec![1.5]).unwrap()).unwrap();
        let bytes = encode_checkpoint(&s);
        let mut expected = b"PTMF".to_vec();
        for v in [1u32, 1, 1] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.push(b'w');
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1.5f64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_corruption() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::ones(&[2, 2])).unwrap();
        let bytes = encode_checkpoint(&s);
        let p = Path::new("x.ptmf");
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad, p).unwrap_err().to_string().contains("x.ptmf"));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint(&extra, p).is_err());
    }
}
