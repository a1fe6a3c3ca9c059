//! Reconstruction metrics: Chamfer distance, F-score, normal consistency,
//! volumetric IoU and a clamped-SDF PSNR proxy, plus macro aggregation.

mod kdtree;

pub use kdtree::{brute_force_nearest, PointCloudNN};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{surface_points, AnalyticShape, Mesh, SdfGrid};
use crate::numcore::rng;
use crate::numcore::Tensor2;

/// Scale applied to Chamfer distances.
pub const CD_SCALE: f64 = 1e3;
pub const PSNR_CAP: f64 = 99.0;

fn row3(t: &Tensor2, r: usize) -> [f64; 3] {
    [t.get(r, 0), t.get(r, 1), t.get(r, 2)]
}

fn check_cloud(t: &Tensor2, what: &'static str) -> Result<()> {
    if t.rows() == 0 {
        return Err(Error::EmptyInput(what));
    }
    if t.cols() != 3 {
        return Err(Error::dim("point_cloud", t.shape_str(), "n×3"));
    }
    Ok(())
}

/// Squared nearest-neighbour distances from every point of `from` to `to`.
fn nn_sq_dists(from: &Tensor2, to: &PointCloudNN) -> Vec<f64> {
    (0..from.rows())
        .map(|r| to.nearest(row3(from, r)).expect("non-empty").1)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `10³ · (mean_a min_b ‖p−q‖² + mean_b min_a ‖p−q‖²)`.
pub fn chamfer(a: &Tensor2, b: &Tensor2) -> Result<f64> {
    check_cloud(a, "chamfer cloud a")?;
    check_cloud(b, "chamfer cloud b")?;
    let (ta, tb) = (PointCloudNN::new(a), PointCloudNN::new(b));
    Ok(CD_SCALE * (mean(&nn_sq_dists(a, &tb)) + mean(&nn_sq_dists(b, &ta))))
}

/// F-score in percent at distance threshold `tau`.
pub fn fscore(a: &Tensor2, b: &Tensor2, tau: f64) -> Result<f64> {
    check_cloud(a, "fscore cloud a")?;
    check_cloud(b, "fscore cloud b")?;
    let (ta, tb) = (PointCloudNN::new(a), PointCloudNN::new(b));
    let t2 = tau * tau;
    let frac = |d: Vec<f64>| d.iter().filter(|&&x| x <= t2).count() as f64 / d.len() as f64;
    let precision = frac(nn_sq_dists(a, &tb));
    let recall = frac(nn_sq_dists(b, &ta));
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(200.0 * precision * recall / (precision + recall))
}

/// Mean over both directions of `|n_p · n_nn(p)|` for oriented clouds.
pub fn normal_consistency_clouds(pa: &Tensor2, na: &Tensor2, pb: &Tensor2, nb: &Tensor2) -> Result<f64> {
    check_cloud(pa, "normal cloud a")?;
    check_cloud(pb, "normal cloud b")?;
    pa.same_shape(na, "normal_consistency")?;
    pb.same_shape(nb, "normal_consistency")?;
    let one_way = |p: &Tensor2, n: &Tensor2, q: &Tensor2, m: &Tensor2| {
        let tree = PointCloudNN::new(q);
        let s: f64 = (0..p.rows())
            .map(|r| {
                let j = tree.nearest(row3(p, r)).expect("non-empty").0;
                let (u, v) = (row3(n, r), row3(m, j));
                (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).abs()
            })
            .sum();
        s / p.rows() as f64
    };
    let nc = 0.5 * (one_way(pa, na, pb, nb) + one_way(pb, nb, pa, na));
    Ok(nc.clamp(0.0, 1.0))
}

/// Normal consistency of two meshes from `n` area-weighted samples each.
pub fn normal_consistency(a: &Mesh, b: &Mesh, n: usize, seed: u64) -> Result<f64> {
    let (pa, na) = a.sample_surface(n, rng::derive(seed, &[1]))?;
    let (pb, nb) = b.sample_surface(n, rng::derive(seed, &[2]))?;
    normal_consistency_clouds(&pa, &na, &pb, &nb)
}

/// Intersection over union of the `sdf < 0` occupancies.
pub fn iou(a: &SdfGrid, b: &SdfGrid) -> Result<f64> {
    a.same_lattice(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let (ia, ib) = (x < 0.0, y < 0.0);
        inter += usize::from(ia && ib);
        union += usize::from(ia || ib);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// PSNR of SDF grids clamped to `±delta`, capped at [`PSNR_CAP`].
pub fn psnr_proxy(pred: &SdfGrid, gt: &SdfGrid, delta: f64) -> Result<f64> {
    pred.same_lattice(gt)?;
    if !(delta > 0.0) {
        return Err(Error::Config(format!("psnr delta must be positive, got {delta}")));
    }
    let mse = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&p, &g)| {
            let d = p.clamp(-delta, delta) - g.clamp(-delta, delta);
            d * d
        })
        .sum::<f64>()
        / pred.values().len() as f64;
    Ok(psnr_from_mse(mse, delta))
}

pub fn psnr_from_mse(mse: f64, delta: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (delta * delta / mse).log10()).min(PSNR_CAP)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Surface samples per mesh.
    pub samples: usize,
    /// Occupancy and PSNR lattice resolution.
    pub grid_res: usize,
    pub tau: f64,
    /// Clamp for the PSNR proxy.
    pub delta: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            grid_res: 64,
            tau: 0.05,
            delta: 0.1,
            seed: 0,
        }
    }
}

/// A reconstruction to score: its extracted mesh and the predicted SDF on
/// the evaluation lattice.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mesh: Mesh,
    pub sdf_grid: SdfGrid,
}

/// Scores of one reconstruction. A failed instance keeps zeroed scores and
/// a note, and is left out of aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cd: f64,
    pub fscore: f64,
    pub nc: f64,
    pub iou: f64,
    pub psnr_sdf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl MetricReport {
    pub fn failed(note: impl Into<String>) -> Self {
        Self {
            cd: 0.0,
            fscore: 0.0,
            nc: 0.0,
            iou: 0.0,
            psnr_sdf: 0.0,
            failure: Some(note.into()),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }

    fn values(&self) -> [f64; 5] {
        [self.cd, self.fscore, self.nc, self.iou, self.psnr_sdf]
    }

    fn from_values(v: [f64; 5]) -> Self {
        Self {
            cd: v[0],
            fscore: v[1],
            nc: v[2],
            iou: v[3],
            psnr_sdf: v[4],
            failure: None,
        }
    }
}

/// Ground-truth surface samples with analytic normals.
pub fn ground_truth_cloud(shape: &AnalyticShape, n: usize, seed: u64) -> Result<(Tensor2, Tensor2)> {
    let pts = surface_points(shape, n, seed)?;
    let mut normals = Tensor2::zeros(n, 3);
    for r in 0..n {
        normals.row_mut(r).copy_from_slice(&shape.normal(row3(&pts, r)));
    }
    Ok((pts, normals))
}

/// Scores `pred` against an analytic ground truth.
pub fn evaluate_instance(pred: &Prediction, gt: &AnalyticShape, cfg: &EvalConfig) -> Result<MetricReport> {
    if pred.mesh.is_empty() {
        return Ok(MetricReport::failed("empty predicted mesh"));
    }
    let gt_grid = SdfGrid::from_shape(gt, cfg.grid_res)?;
    let (gp, gn) = ground_truth_cloud(gt, cfg.samples, rng::derive(cfg.seed, &[10]))?;
    let (pp, pn) = pred.mesh.sample_surface(cfg.samples, rng::derive(cfg.seed, &[11]))?;
    let report = MetricReport {
        cd: chamfer(&pp, &gp)?,
        fscore: fscore(&pp, &gp, cfg.tau)?,
        nc: normal_consistency_clouds(&pp, &pn, &gp, &gn)?,
        iou: iou(&pred.sdf_grid, &gt_grid)?,
        psnr_sdf: psnr_proxy(&pred.sdf_grid, &gt_grid, cfg.delta)?,
        failure: None,
    };
    if report.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite metric {report:?}")));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance: String,
    pub category: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: usize,
    pub name: String,
    /// Instances that contributed to the mean.
    pub count: usize,
    /// Instances left out because their evaluation failed.
    pub excluded: usize,
    pub mean: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub per_category: Vec<CategorySummary>,
    /// Unweighted mean over categories.
    pub overall: MetricReport,
    pub instances: Vec<InstanceResult>,
}

/// Per-category instance means and their unweighted category mean.
pub fn aggregate(results: &[InstanceResult], category_names: &[String]) -> Result<Summary> {
    let mut per_category = Vec::new();
    for (c, name) in category_names.iter().enumerate() {
        let of_cat: Vec<&InstanceResult> = results.iter().filter(|r| r.category == c).collect();
        let valid: Vec<[f64; 5]> = of_cat
            .iter()
            .filter(|r| r.report.is_valid())
            .map(|r| r.report.values())
            .collect();
        if of_cat.is_empty() {
            continue;
        }
        if valid.is_empty() {
            per_category.push(CategorySummary {
                category: c,
                name: name.clone(),
                count: 0,
                excluded: of_cat.len(),
                mean: MetricReport::failed("no valid instance"),
            });
            continue;
        }
        let mut sum = [0.0; 5];
        for v in &valid {
            for k in 0..5 {
                sum[k] += v[k];
            }
        }
        per_category.push(CategorySummary {
            category: c,
            name: name.clone(),
            count: valid.len(),
            excluded: of_cat.len() - valid.len(),
            mean: MetricReport::from_values(sum.map(|s| s / valid.len() as f64)),
        });
    }
    if per_category.is_empty() {
        return Err(Error::EmptyInput("no instance to aggregate"));
    }
    let scored: Vec<&CategorySummary> = per_category.iter().filter(|c| c.mean.is_valid()).collect();
    let overall = if scored.is_empty() {
        MetricReport::failed("no valid instance")
    } else {
        let mut sum = [0.0; 5];
        for cs in &scored {
            let v = cs.mean.values();
            for k in 0..5 {
                sum[k] += v[k];
            }
        }
        MetricReport::from_values(sum.map(|s| s / scored.len() as f64))
    };
    Ok(Summary {
        per_category,
        overall,
        instances: results.to_vec(),
    })
}

impl Summary {
    /// Instances excluded from every mean.
    pub fn failures(&self) -> usize {
        self.per_category.iter().map(|c| c.excluded).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per category plus the macro mean.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,count,excluded,cd,fscore,nc,iou,psnr_sdf\n");
        let row = |s: &mut String, name: &str, n: usize, x: usize, m: &MetricReport| {
            if !m.is_valid() {
                let _ = writeln!(s, "{name},{n},{x},nan,nan,nan,nan,nan");
                return;
            }
            let _ = writeln!(
                s,
                "{name},{n},{x},{:.6},{:.4},{:.6},{:.6},{:.4}",
                m.cd, m.fscore, m.nc, m.iou, m.psnr_sdf
            );
        };
        for c in &self.per_category {
            row(&mut s, &c.name, c.count, c.excluded, &c.mean);
        }
        let n: usize = self.per_category.iter().map(|c| c.count).sum();
        let x: usize = self.per_category.iter().map(|c| c.excluded).sum();
        row(&mut s, "mean", n, x, &self.overall);
        s
    }
}
