use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Tensor2;

use super::encoder::PrototypeEncoder;

pub const LIBRARY_MAGIC: &[u8; 4] = b"MGPK";
pub const LIBRARY_VERSION: u32 = 1;

/// One category's prototype: its raw samples and their encoded features.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeEntry {
    /// Dataset id of the chosen instance.
    pub prototype_id: usize,
    /// `K×4` rows of `(x, y, z, sdf)`, fixed once built.
    pub samples: Tensor2,
    /// `K×D_p` features from the encoder that built the library.
    pub features: Tensor2,
}

/// The geometric prior: exactly one prototype per category.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeLibrary {
    pub entries: Vec<PrototypeEntry>,
    k: usize,
    d_p: usize,
}

impl PrototypeLibrary {
    pub fn new(entries: Vec<PrototypeEntry>) -> Result<Self> {
        let first = entries.first().ok_or(Error::EmptyInput("library has no categories"))?;
        let (k, d_p) = (first.samples.rows(), first.features.cols());
        for (c, e) in entries.iter().enumerate() {
            if e.samples.shape() != (k, 4) || e.features.shape() != (k, d_p) {
                return Err(Error::dim(
                    "prototype_library",
                    format!(
                        "category {c}: samples {} features {}",
                        e.samples.shape_str(),
                        e.features.shape_str()
                    ),
                    format!("{k}×4 and {k}×{d_p}"),
                ));
            }
        }
        Ok(Self { entries, k, d_p })
    }

    /// Encodes each category's samples with `encoder`.
    pub fn encode(prototypes: Vec<(usize, Tensor2)>, encoder: &PrototypeEncoder) -> Result<Self> {
        let entries = prototypes
            .into_iter()
            .map(|(prototype_id, samples)| {
                let features = encoder.eval(&samples)?;
                Ok(PrototypeEntry {
                    prototype_id,
                    samples,
                    features,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn num_categories(&self) -> usize {
        self.entries.len()
    }

    pub fn points_per_prototype(&self) -> usize {
        self.k
    }

    pub fn feature_width(&self) -> usize {
        self.d_p
    }

    /// All raw samples stacked category by category (`C·K×4`).
    pub fn stacked_samples(&self) -> Tensor2 {
        let parts: Vec<&Tensor2> = self.entries.iter().map(|e| &e.samples).collect();
        Tensor2::vstack(&parts).expect("equal widths by construction")
    }

    /// All stored features stacked category by category (`C·K×D_p`).
    pub fn stacked_features(&self) -> Tensor2 {
        let parts: Vec<&Tensor2> = self.entries.iter().map(|e| &e.features).collect();
        Tensor2::vstack(&parts).expect("equal widths by construction")
    }

    /// Category of every stacked token.
    pub fn token_categories(&self) -> Vec<usize> {
        (0..self.entries.len())
            .flat_map(|c| std::iter::repeat_n(c, self.k))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(20 + self.entries.len() * (4 + self.k * (4 + self.d_p) * 8));
        b.extend_from_slice(LIBRARY_MAGIC);
        for v in [
            LIBRARY_VERSION,
            self.entries.len() as u32,
            self.k as u32,
            self.d_p as u32,
        ] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for e in &self.entries {
            b.extend_from_slice(&(e.prototype_id as u32).to_le_bytes());
            for v in e.samples.data().iter().chain(e.features.data()) {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != LIBRARY_MAGIC {
            return Err(Error::Format("missing MGPK magic".into()));
        }
        let version = r.u32()?;
        if version != LIBRARY_VERSION {
            return Err(Error::Version {
                expected: LIBRARY_VERSION,
                found: version,
            });
        }
        let (c, k, d_p) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let mut entries = Vec::with_capacity(c);
        for _ in 0..c {
            let prototype_id = r.u32()? as usize;
            let samples = Tensor2::from_vec(k, 4, r.f64s(k * 4)?)?;
            let features = Tensor2::from_vec(k, d_p, r.f64s(k * d_p)?)?;
            entries.push(PrototypeEntry {
                prototype_id,
                samples,
                features,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Self::new(entries)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn save_library(path: impl AsRef<Path>, lib: &PrototypeLibrary) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, lib.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_library(path: impl AsRef<Path>) -> Result<PrototypeLibrary> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    PrototypeLibrary::from_bytes(&bytes)
}
