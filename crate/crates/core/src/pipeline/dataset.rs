use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{render_depth, sample_training_points, samples_to_tensors, AnalyticShape, ShapeFamily};
use crate::numcore::rng;
use crate::numcore::Tensor2;

use super::archive::TensorArchive;
use super::config::RunConfig;

pub const DATASET_MANIFEST: &str = "dataset.json";
/// Train, validation and test fractions.
pub const SPLIT_FRACTIONS: [f64; 3] = [0.556, 0.223, 0.221];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?} (train|val|test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: usize,
    pub category: usize,
    /// Index within the category, in generation order.
    pub index: usize,
    pub family: String,
    pub shape: AnalyticShape,
    pub seed: u64,
    pub split: Split,
    /// Per-instance tensor archive, relative to the dataset directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub categories: Vec<String>,
    pub image_res: usize,
    pub samples_per_instance: usize,
    pub instances: Vec<InstanceRecord>,
    /// SHA-256 over the manifest body and every instance file.
    pub hash: String,
}

/// Generated inputs for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceData {
    /// Flattened depth render, row-major, one row.
    pub depth: Tensor2,
    /// `n×4` rows of `(x, y, z, sdf)`.
    pub samples: Tensor2,
}

impl InstanceData {
    fn to_archive(&self) -> TensorArchive {
        let mut a = TensorArchive::new();
        a.insert("depth", self.depth.clone());
        a.insert("samples", self.samples.clone());
        a
    }

    fn from_archive(mut a: TensorArchive) -> Result<Self> {
        Ok(Self {
            depth: a.take("depth")?,
            samples: a.take("samples")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub data: Vec<InstanceData>,
}

/// Largest-remainder apportionment of `n` over [`SPLIT_FRACTIONS`].
pub fn split_counts(n: usize) -> [usize; 3] {
    let exact: Vec<f64> = SPLIT_FRACTIONS.iter().map(|f| f * n as f64).collect();
    let mut counts: [usize; 3] = std::array::from_fn(|i| exact[i].floor() as usize);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

impl Dataset {
    /// Generates `C × instances_per_category` instances. Instances are
    /// interleaved across categories before the split is cut, so every
    /// split holds every category once it has at least `C` members.
    pub fn generate(cfg: &RunConfig) -> Result<Self> {
        let (c, per) = (cfg.categories, cfg.instances_per_category);
        let counts = split_counts(c * per);
        let mut instances = Vec::with_capacity(c * per);
        let mut data = Vec::with_capacity(c * per);
        for index in 0..per {
            for category in 0..c {
                let id = instances.len();
                let split = if id < counts[0] {
                    Split::Train
                } else if id < counts[0] + counts[1] {
                    Split::Val
                } else {
                    Split::Test
                };
                let seed = rng::derive(cfg.seed, &[0xda7a, category as u64, index as u64]);
                let family = ShapeFamily::for_category(category);
                let shape = family.sample(&mut rng::stream(seed, &[0]));
                let samples = sample_training_points(&shape, cfg.samples_per_instance, rng::derive(seed, &[1]))?;
                let (pts, sdf) = samples_to_tensors(&samples);
                let depth = render_depth(&shape, cfg.image_res).to_row();
                data.push(InstanceData {
                    depth,
                    samples: Tensor2::hcat(&[&pts, &sdf])?,
                });
                instances.push(InstanceRecord {
                    id,
                    category,
                    index,
                    family: family.name().to_string(),
                    shape,
                    seed,
                    split,
                    file: format!("instances/{id:04}.bin"),
                });
            }
        }
        let mut manifest = DatasetManifest {
            seed: cfg.seed,
            categories: (0..c)
                .map(|k| ShapeFamily::for_category(k).name().to_string())
                .collect(),
            image_res: cfg.image_res,
            samples_per_instance: cfg.samples_per_instance,
            instances,
            hash: String::new(),
        };
        manifest.hash = content_hash(&manifest, &data)?;
        Ok(Self { manifest, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn num_categories(&self) -> usize {
        self.manifest.categories.len()
    }

    pub fn record(&self, id: usize) -> &InstanceRecord {
        &self.manifest.instances[id]
    }

    pub fn ids(&self, split: Split) -> Vec<usize> {
        self.manifest
            .instances
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.id)
            .collect()
    }

    pub fn shape(&self, id: usize) -> &AnalyticShape {
        &self.manifest.instances[id].shape
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let inst_dir = dir.join("instances");
        std::fs::create_dir_all(&inst_dir).map_err(|e| Error::io(&inst_dir, e))?;
        for (rec, d) in self.manifest.instances.iter().zip(&self.data) {
            d.to_archive().save(dir.join(&rec.file))?;
        }
        let path = dir.join(DATASET_MANIFEST);
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Loads a saved dataset and verifies its content hash.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(DATASET_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        let data = manifest
            .instances
            .iter()
            .map(|r| InstanceData::from_archive(TensorArchive::load(dir.join(&r.file))?))
            .collect::<Result<Vec<_>>>()?;
        let hash = content_hash(&manifest, &data)?;
        if hash != manifest.hash {
            return Err(Error::Data(format!(
                "dataset hash mismatch: manifest {}, files {hash}",
                manifest.hash
            )));
        }
        for (r, d) in manifest.instances.iter().zip(&data) {
            if d.depth.shape() != (1, manifest.image_res * manifest.image_res) || d.samples.cols() != 4 {
                return Err(Error::Data(format!("instance {} has malformed tensors", r.id)));
            }
        }
        Ok(Self { manifest, data })
    }
}

fn content_hash(manifest: &DatasetManifest, data: &[InstanceData]) -> Result<String> {
    let mut body = manifest.clone();
    body.hash.clear();
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&body)?);
    for d in data {
        h.update(d.to_archive().to_bytes());
    }
    Ok(hex(&h.finalize()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            instances_per_category: 4,
            samples_per_instance: 100,
            image_res: 8,
            ..RunConfig::desk()
        }
    }

    #[test]
    fn split_counts_track_fractions() {
        for n in 1..200 {
            let c = split_counts(n);
            assert_eq!(c.iter().sum::<usize>(), n);
            for (k, f) in SPLIT_FRACTIONS.iter().enumerate() {
                assert!((c[k] as f64 - f * n as f64).abs() <= 1.0, "n={n} {c:?}");
            }
        }
        assert_eq!(split_counts(60), [33, 14, 13]);
    }

    #[test]
    fn desk_splits_cover_every_category() {
        let cfg = RunConfig {
            samples_per_instance: 10,
            image_res: 4,
            ..RunConfig::desk()
        };
        let ds = Dataset::generate(&cfg).unwrap();
        assert_eq!(ds.len(), 60);
        for split in [Split::Train, Split::Val, Split::Test] {
            let mut seen = [false; 3];
            for id in ds.ids(split) {
                seen[ds.record(id).category] = true;
            }
            assert!(seen.iter().all(|&s| s), "{split:?}");
        }
    }

    #[test]
    fn save_load_round_trip_and_determinism() {
        let ds = Dataset::generate(&small()).unwrap();
        assert_eq!(ds, Dataset::generate(&small()).unwrap());
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        assert_eq!(Dataset::load(dir.path()).unwrap(), ds);
        let other = Dataset::generate(&RunConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(other.manifest.hash, ds.manifest.hash);
    }

    #[test]
    fn tampered_file_fails_hash() {
        let ds = Dataset::generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let mut d = ds.data[0].clone();
        d.samples.set(0, 3, 9.0);
        d.to_archive()
            .save(dir.path().join(&ds.manifest.instances[0].file))
            .unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::Data(_))));
    }

    #[test]
    fn samples_match_shapes() {
        let ds = Dataset::generate(&small()).unwrap();
        for (r, d) in ds.manifest.instances.iter().zip(&ds.data) {
            for row in d.samples.iter_rows() {
                assert!((r.shape.sdf([row[0], row[1], row[2]]) - row[3]).abs() < 1e-12);
            }
        }
    }
}
