use crate::error::Result;
use crate::geometry::{marching_cubes, Mesh, SdfGrid};
use crate::metrics::{aggregate, evaluate_instance, EvalConfig, InstanceResult, Prediction, Summary};
use crate::numcore::Tensor2;

use super::config::RunConfig;
use super::dataset::{Dataset, Split};
use super::model::{image_input, Batch, ReconModel};

/// Lattice points decoded per batch.
pub const DECODE_CHUNK: usize = 4096;

/// Evaluates the model over a `res³` lattice on `[-1, 1]³` for one input
/// image. Features are computed once and shared by every chunk.
pub fn decode_grid(model: &ReconModel, depth: &Tensor2, category: usize, res: usize) -> Result<SdfGrid> {
    let lattice = SdfGrid::from_fn(res, -1.0, 1.0, |_| 0.0)?;
    let points = lattice.points();
    let images = image_input(depth);
    let features = model.features(&images, &[category])?;
    let mut values = Vec::with_capacity(points.len());
    for chunk in points.chunks(DECODE_CHUNK) {
        let pts = Tensor2::from_rows(chunk);
        let batch = Batch {
            images: images.clone(),
            categories: vec![category],
            points: pts,
            owner: vec![0; chunk.len()],
        };
        let x = model.decoder_input(&batch, features.clone())?;
        values.extend_from_slice(model.decoder.eval(&x)?.data());
    }
    SdfGrid::new(res, -1.0, 1.0, values)
}

/// Mesh and SDF lattice for one dataset instance.
pub fn reconstruct_instance(model: &ReconModel, ds: &Dataset, id: usize, res: usize) -> Result<Prediction> {
    let sdf_grid = decode_grid(model, &ds.data[id].depth, ds.record(id).category, res)?;
    let mesh = extract(&sdf_grid)?;
    Ok(Prediction { mesh, sdf_grid })
}

/// Zero level set, or an empty mesh when the field never crosses zero.
pub fn extract(grid: &SdfGrid) -> Result<Mesh> {
    let (lo, hi) = grid.min_max();
    if !(lo < 0.0 && hi > 0.0) {
        return Ok(Mesh::default());
    }
    marching_cubes(grid, 0.0)
}

pub fn eval_config(cfg: &RunConfig) -> EvalConfig {
    EvalConfig {
        samples: cfg.eval_samples,
        grid_res: cfg.eval_res,
        tau: cfg.fscore_tau,
        delta: cfg.loss_delta,
        seed: cfg.seed,
    }
}

/// Reconstructs and scores every instance of `split`.
pub fn evaluate_split(model: &ReconModel, ds: &Dataset, split: Split, cfg: &RunConfig) -> Result<Summary> {
    let ecfg = eval_config(cfg);
    let mut results = Vec::new();
    for id in ds.ids(split) {
        let pred = reconstruct_instance(model, ds, id, cfg.eval_res)?;
        let report = evaluate_instance(&pred, ds.shape(id), &ecfg)?;
        results.push(InstanceResult {
            instance: format!("{id:04}"),
            category: ds.record(id).category,
            report,
        });
    }
    aggregate(&results, &ds.manifest.categories)
}
