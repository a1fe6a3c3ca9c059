use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::canonical_surface_points;
use crate::numcore::rng;
use crate::numcore::Tensor2;
use crate::prior::{pca_projection, sample_prototype_points, select_prototype, PrototypeLibrary, CANONICAL_POINTS};

use super::config::RunConfig;
use super::dataset::{Dataset, Split};
use super::model::initial_prototype_encoder;

const TAG_CANONICAL: u64 = 0xca70;
const TAG_PROTOTYPE: u64 = 0x9107;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeChoice {
    pub category: usize,
    /// Dataset instance id of the prototype.
    pub instance: usize,
    /// Train instances the choice was made among.
    pub candidates: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PriorBuild {
    pub library: PrototypeLibrary,
    pub choices: Vec<PrototypeChoice>,
    /// `(category, pc1, pc2)` of every prototype's encoded features.
    pub pca: Vec<(usize, f64, f64)>,
}

/// Canonically ordered surface points of one instance.
pub fn canonical_points(ds: &Dataset, id: usize) -> Result<Tensor2> {
    let rec = ds.record(id);
    canonical_surface_points(&rec.shape, CANONICAL_POINTS, rng::derive(rec.seed, &[TAG_CANONICAL]))
}

/// Picks one prototype per category from the train split, samples `K`
/// points from it and encodes them with the run's initial prototype
/// encoder. Validation and test instances are never read.
pub fn build_priors(ds: &Dataset, cfg: &RunConfig) -> Result<PriorBuild> {
    let train = ds.ids(Split::Train);
    let encoder = initial_prototype_encoder(cfg)?;
    let mut choices = Vec::with_capacity(cfg.categories);
    let mut protos = Vec::with_capacity(cfg.categories);
    for c in 0..cfg.categories {
        let candidates: Vec<usize> = train
            .iter()
            .copied()
            .filter(|&id| ds.record(id).category == c)
            .collect();
        if candidates.is_empty() {
            return Err(Error::EmptyCategory(c));
        }
        let clouds = candidates
            .iter()
            .map(|&id| canonical_points(ds, id))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor2> = clouds.iter().collect();
        let instance = candidates[select_prototype(c, &refs)?];
        let samples = sample_prototype_points(
            ds.shape(instance),
            cfg.k,
            rng::derive(cfg.seed, &[TAG_PROTOTYPE, c as u64]),
        )?;
        protos.push((instance, samples));
        choices.push(PrototypeChoice {
            category: c,
            instance,
            candidates,
        });
    }
    let library = PrototypeLibrary::encode(protos, &encoder)?;
    let feats: Vec<&Tensor2> = library.entries.iter().map(|e| &e.features).collect();
    let pca = if feats.len() >= 2 {
        pca_projection(&feats)?
    } else {
        vec![(0, 0.0, 0.0)]
    };
    Ok(PriorBuild { library, choices, pca })
}
