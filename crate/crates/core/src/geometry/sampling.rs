use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::rng;
use crate::numcore::Tensor2;

use super::grid::SdfGrid;
use super::marching_cubes::marching_cubes;
use super::shapes::{AnalyticShape, Vec3};

/// Lattice resolution of the proxy mesh used to seed surface samples.
pub const SURFACE_PROXY_RES: usize = 32;
/// Standard deviation of the near-surface offsets.
pub const NEAR_SIGMA: f64 = 0.03;
/// Half-width of the thin shell around the surface.
pub const SHELL_WIDTH: f64 = 0.01;

/// A query point with its ground-truth signed distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdfSample {
    pub position: Vec3,
    pub sdf: f64,
}

/// Packs samples into an `n×3` position tensor and an `n×1` target tensor.
pub fn samples_to_tensors(samples: &[SdfSample]) -> (Tensor2, Tensor2) {
    let mut p = Tensor2::zeros(samples.len(), 3);
    let mut s = Tensor2::zeros(samples.len(), 1);
    for (r, smp) in samples.iter().enumerate() {
        p.row_mut(r).copy_from_slice(&smp.position);
        s.set(r, 0, smp.sdf);
    }
    (p, s)
}

/// Roughly area-uniform points on the zero level set: a marching-cubes
/// proxy is sampled by area and every sample is projected onto the exact
/// surface.
pub fn surface_points(shape: &AnalyticShape, n: usize, seed: u64) -> Result<Tensor2> {
    let grid = SdfGrid::from_shape(shape, SURFACE_PROXY_RES)?;
    let proxy = marching_cubes(&grid, 0.0)?;
    if proxy.is_empty() {
        return Err(Error::Data(format!("shape {shape:?} has no surface in the domain")));
    }
    let (mut pts, _) = proxy.sample_surface(n, seed)?;
    for r in 0..n {
        let p = shape.project([pts.get(r, 0), pts.get(r, 1), pts.get(r, 2)]);
        pts.row_mut(r).copy_from_slice(&p);
    }
    Ok(pts)
}

/// Surface points in a canonical order (lexicographic by x, y, z), so
/// instances of one category can be compared row by row.
pub fn canonical_surface_points(shape: &AnalyticShape, n: usize, seed: u64) -> Result<Tensor2> {
    let pts = surface_points(shape, n, seed)?;
    let mut rows: Vec<&[f64]> = pts.iter_rows().collect();
    rows.sort_by(|a, b| {
        a[0].total_cmp(&b[0])
            .then(a[1].total_cmp(&b[1]))
            .then(a[2].total_cmp(&b[2]))
    });
    Ok(Tensor2::from_rows(&rows))
}

/// Supervision samples: 40% near the surface (Gaussian offsets of
/// [`NEAR_SIGMA`]), 40% uniform over `[-1, 1]³`, and the rest inside the
/// `|sdf| < SHELL_WIDTH` shell.
pub fn sample_training_points(shape: &AnalyticShape, n: usize, seed: u64) -> Result<Vec<SdfSample>> {
    let near = n * 4 / 10;
    let uniform = n * 4 / 10;
    let shell = n - near - uniform;
    let surf = surface_points(shape, near + shell, rng::derive(seed, &[1]))?;
    let mut r = rng::stream(seed, &[2]);
    let mut out = Vec::with_capacity(n);
    let mut push = |p: Vec3| {
        out.push(SdfSample {
            position: p,
            sdf: shape.sdf(p),
        })
    };
    for s in 0..near {
        let p: Vec3 = std::array::from_fn(|a| (surf.get(s, a) + NEAR_SIGMA * rng::normal(&mut r)).clamp(-1.0, 1.0));
        push(p);
    }
    for _ in 0..uniform {
        push(std::array::from_fn(|_| rng::uniform(&mut r, -1.0, 1.0)));
    }
    for s in near..near + shell {
        let base = [surf.get(s, 0), surf.get(s, 1), surf.get(s, 2)];
        let normal = shape.normal(base);
        // exact SDFs are 1-Lipschitz, so a normal offset below the width stays in the shell
        let off = rng::uniform(&mut r, -0.99, 0.99) * SHELL_WIDTH;
        push(std::array::from_fn(|a| (base[a] + off * normal[a]).clamp(-1.0, 1.0)));
    }
    Ok(out)
}
