//! Synthetic shapes, SDF sampling, depth rendering, marching cubes and
//! mesh IO.

mod grid;
mod marching_cubes;
mod mc_tables;
mod mesh;
mod obj;
mod render;
mod sampling;
mod shapes;

pub use grid::SdfGrid;
pub use marching_cubes::{marching_cubes, MIN_TRIANGLE_AREA};
pub use mesh::Mesh;
pub use obj::{parse_obj, read_obj, to_obj_string, write_obj};
pub use render::{render_depth, DepthImage, BACKGROUND_DEPTH, HIT_THRESHOLD, TRACE_STEPS};
pub use sampling::{
    canonical_surface_points, sample_training_points, samples_to_tensors, surface_points, SdfSample, NEAR_SIGMA,
    SHELL_WIDTH, SURFACE_PROXY_RES,
};
pub use shapes::{normalize, AnalyticShape, ShapeFamily, ShapeKind, Vec3, DOMAIN_LIMIT};

/// Exact signed distance of `shape` at `p`.
pub fn analytic_sdf(shape: &AnalyticShape, p: Vec3) -> f64 {
    shape.sdf(p)
}
