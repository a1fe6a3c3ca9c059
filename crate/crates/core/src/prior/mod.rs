//! Category-level geometric priors: prototype selection, per-point
//! encoding, library persistence and a PCA diagnostic.

mod encoder;
mod library;

pub use encoder::PrototypeEncoder;
pub use library::{load_library, save_library, PrototypeEntry, PrototypeLibrary, LIBRARY_MAGIC, LIBRARY_VERSION};

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::geometry::{surface_points, AnalyticShape, SdfSample};
use crate::numcore::rng;
use crate::numcore::Tensor2;

/// Surface points per instance used for prototype selection.
pub const CANONICAL_POINTS: usize = 1024;
/// Half-width of the near-surface band for prototype samples.
pub const PROTOTYPE_BAND: f64 = 0.05;

/// Index of the instance closest (squared Frobenius norm) to the pointwise
/// mean of all instances. Rows must correspond across instances; ties go
/// to the lowest index.
pub fn select_prototype(category: usize, instances: &[&Tensor2]) -> Result<usize> {
    let first = instances.first().ok_or(Error::EmptyCategory(category))?;
    for t in instances {
        if t.shape() != first.shape() {
            return Err(Error::dim("select_prototype", first.shape_str(), t.shape_str()));
        }
    }
    let mut mean = Tensor2::zeros(first.rows(), first.cols());
    for t in instances {
        mean.add_assign(t)?;
    }
    let mean = mean.scale(1.0 / instances.len() as f64);
    let mut best = (0, f64::INFINITY);
    for (i, t) in instances.iter().enumerate() {
        let d = t.sub(&mean)?.sum_squares();
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// `K` prototype samples `(x, y, z, sdf)`: the first half inside the
/// `|sdf| < 0.05` band, the rest uniform over `[-1, 1]³`.
pub fn sample_prototype_points(shape: &AnalyticShape, k: usize, seed: u64) -> Result<Tensor2> {
    let near = k / 2;
    let surf = surface_points(shape, near.max(1), rng::derive(seed, &[1]))?;
    let mut r = rng::stream(seed, &[2]);
    let mut out = Tensor2::zeros(k, 4);
    for s in 0..k {
        let p = if s < near {
            let base = [surf.get(s, 0), surf.get(s, 1), surf.get(s, 2)];
            let n = shape.normal(base);
            // 1-Lipschitz: an offset along the normal below the band stays inside it
            let off = rng::uniform(&mut r, -0.98, 0.98) * PROTOTYPE_BAND;
            std::array::from_fn(|a| (base[a] + off * n[a]).clamp(-1.0, 1.0))
        } else {
            std::array::from_fn(|_| rng::uniform(&mut r, -1.0, 1.0))
        };
        out.row_mut(s).copy_from_slice(&[p[0], p[1], p[2], shape.sdf(p)]);
    }
    Ok(out)
}

/// Same split as [`sample_prototype_points`] drawn from precomputed
/// samples when no analytic SDF is available.
pub fn sample_prototype_points_from(samples: &[SdfSample], k: usize, seed: u64) -> Result<Tensor2> {
    let near: Vec<&SdfSample> = samples.iter().filter(|s| s.sdf.abs() < PROTOTYPE_BAND).collect();
    let far: Vec<&SdfSample> = samples.iter().filter(|s| s.sdf.abs() >= PROTOTYPE_BAND).collect();
    let want_near = k / 2;
    if near.len() < want_near || samples.len() < k {
        return Err(Error::Data(format!(
            "need {k} samples with {want_near} near the surface, have {} with {} near",
            samples.len(),
            near.len()
        )));
    }
    let mut r = rng::stream(seed, &[3]);
    let mut near = near;
    near.shuffle(&mut r);
    let mut chosen: Vec<&SdfSample> = near[..want_near].to_vec();
    let mut rest: Vec<&SdfSample> = near[want_near..].iter().chain(&far).copied().collect();
    rest.shuffle(&mut r);
    chosen.extend(&rest[..k - want_near]);
    let mut out = Tensor2::zeros(k, 4);
    for (row, s) in chosen.iter().enumerate() {
        out.row_mut(row)
            .copy_from_slice(&[s.position[0], s.position[1], s.position[2], s.sdf]);
    }
    Ok(out)
}

/// Projection of each category's flattened prototype features onto the
/// top two principal components across categories.
pub fn pca_projection(features: &[&Tensor2]) -> Result<Vec<(usize, f64, f64)>> {
    let c = features.len();
    if c < 2 {
        return Err(Error::dim("pca_projection", format!("{c} categories"), "at least 2"));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::dim(
            "pca_projection",
            features[0].shape_str(),
            "equal feature sizes",
        ));
    }
    let mut centred = DMatrix::<f64>::zeros(c, d);
    for (i, f) in features.iter().enumerate() {
        for (j, &v) in f.data().iter().enumerate() {
            centred[(i, j)] = v;
        }
    }
    let mean = centred.row_mean();
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    // C is small: work with the C×C Gram matrix instead of the D×D covariance
    let gram = &centred * centred.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let coord = |comp: usize, i: usize| -> f64 {
        let k = order[comp];
        let lambda = eig.eigenvalues[k].max(0.0);
        let col = eig.eigenvectors.column(k);
        // fixed sign: the largest-magnitude loading is positive
        let pivot = col
            .iter()
            .cloned()
            .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        sign * col[i] * lambda.sqrt()
    };
    Ok((0..c)
        .map(|i| (i, coord(0, i), if c > 1 { coord(1, i) } else { 0.0 }))
        .collect())
}

pub fn pca_csv(rows: &[(usize, f64, f64)]) -> String {
    let mut s = String::from("category,x,y\n");
    for (c, x, y) in rows {
        let _ = writeln!(s, "{c},{x:.9},{y:.9}");
    }
    s
}
