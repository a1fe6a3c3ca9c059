use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Tensor2;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"MGTA";
pub const ARCHIVE_VERSION: u32 = 1;

/// Named `f64` tensors in a little-endian binary envelope: magic, `u32`
/// version, `u32` count, then per tensor a `u32`-prefixed UTF-8 name,
/// `u32` rows and cols, and the row-major payload. Used for checkpoints
/// and per-instance data files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    tensors: BTreeMap<String, Tensor2>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor2) {
        self.tensors.insert(name.into(), t);
    }

    pub fn insert_scalar(&mut self, name: impl Into<String>, v: f64) {
        self.insert(name, Tensor2::filled(1, 1, v));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor2> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Format(format!("archive has no tensor {name:?}")))
    }

    pub fn take(&mut self, name: &str) -> Result<Tensor2> {
        self.tensors
            .remove(name)
            .ok_or_else(|| Error::Format(format!("archive has no tensor {name:?}")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let t = self.get(name)?;
        if t.shape() != (1, 1) {
            return Err(Error::Format(format!("{name} is {}, expected a scalar", t.shape_str())));
        }
        Ok(t.get(0, 0))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(ARCHIVE_MAGIC);
        b.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            b.extend_from_slice(&(name.len() as u32).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            b.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos
                .checked_add(n)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::Format(format!("truncated archive at offset {pos}")))?;
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4)? != ARCHIVE_MAGIC {
            return Err(Error::Format("missing MGTA magic".into()));
        }
        let u32_of = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes"));
        let version = u32_of(take(4)?);
        if version != ARCHIVE_VERSION {
            return Err(Error::Version {
                expected: ARCHIVE_VERSION,
                found: version,
            });
        }
        let count = u32_of(take(4)?) as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let n = u32_of(take(4)?) as usize;
            let name = std::str::from_utf8(take(n)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rows = u32_of(take(4)?) as usize;
            let cols = u32_of(take(4)?) as usize;
            let len = rows
                .checked_mul(cols)
                .and_then(|l| l.checked_mul(8))
                .ok_or_else(|| Error::Format("tensor size overflow".into()))?;
            let data = take(len)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.insert(name, Tensor2::from_vec(rows, cols, data)?);
        }
        if pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        // write-then-rename so an interrupted save never leaves a torn file
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut a = TensorArchive::new();
        a.insert(
            "w",
            Tensor2::from_rows(&[[0.1, -0.0, f64::MIN_POSITIVE], [1e300, -7.5, 3.0]]),
        );
        a.insert_scalar("step", 42.0);
        a.insert("empty", Tensor2::zeros(0, 3));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        a.save(&p).unwrap();
        let b = TensorArchive::load(&p).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(b.scalar("step").unwrap(), 42.0);
        assert!(b.get("w").unwrap().get(0, 1).is_sign_negative());
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut a = TensorArchive::new();
        a.insert("x", Tensor2::filled(2, 2, 1.0));
        let bytes = a.to_bytes();
        for cut in [0, 3, 11, bytes.len() - 1] {
            assert!(TensorArchive::from_bytes(&bytes[..cut]).is_err());
        }
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(
            TensorArchive::from_bytes(&v),
            Err(Error::Version { expected: 1, found: 9 })
        ));
        assert!(a.get("y").is_err());
        assert!(a.scalar("x").is_err());
    }
}
