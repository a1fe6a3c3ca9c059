use serde::{Deserialize, Serialize};

use crate::numcore::Tensor2;

use super::shapes::AnalyticShape;

/// Depth recorded for rays that miss the shape.
pub const BACKGROUND_DEPTH: f64 = 2.0;
pub const TRACE_STEPS: usize = 64;
pub const HIT_THRESHOLD: f64 = 1e-4;

/// Orthographic depth map; row 0 is the top (`y = 1`) edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depths: Vec<f64>,
}

impl DepthImage {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.depths[row * self.width + col]
    }

    /// Flattened pixels as a single feature row.
    pub fn to_row(&self) -> Tensor2 {
        Tensor2::row_vector(&self.depths)
    }

    pub fn hit_fraction(&self) -> f64 {
        let hits = self.depths.iter().filter(|&&d| d < BACKGROUND_DEPTH).count();
        hits as f64 / self.depths.len() as f64
    }
}

/// Renders `shape` with rays travelling along −z from the `z = 1` plane,
/// one per pixel centre over `[-1, 1]²`.
pub fn render_depth(shape: &AnalyticShape, resolution: usize) -> DepthImage {
    let px = 2.0 / resolution as f64;
    let mut depths = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        let y = 1.0 - (row as f64 + 0.5) * px;
        for col in 0..resolution {
            let x = -1.0 + (col as f64 + 0.5) * px;
            depths.push(trace(shape, x, y));
        }
    }
    DepthImage {
        width: resolution,
        height: resolution,
        depths,
    }
}

fn trace(shape: &AnalyticShape, x: f64, y: f64) -> f64 {
    let mut t = 0.0;
    for _ in 0..TRACE_STEPS {
        let d = shape.sdf([x, y, 1.0 - t]);
        if d < HIT_THRESHOLD {
            return t;
        }
        t += d;
        if t >= BACKGROUND_DEPTH {
            break;
        }
    }
    BACKGROUND_DEPTH
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::ShapeKind;

    #[test]
    fn centre_pixel_hits_sphere_cap() {
        let img = render_depth(&AnalyticShape::sphere(0.5), 33);
        assert!((img.at(16, 16) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn off_centre_matches_ray_sphere() {
        let img = render_depth(&AnalyticShape::sphere(0.5), 32);
        let px = 2.0 / 32.0;
        for (row, col) in [(14, 15), (12, 18), (10, 16)] {
            let x: f64 = -1.0 + (col as f64 + 0.5) * px;
            let y: f64 = 1.0 - (row as f64 + 0.5) * px;
            let want = 1.0 - (0.25 - x * x - y * y).sqrt();
            assert!((img.at(row, col) - want).abs() < 1e-3);
        }
    }

    #[test]
    fn tiny_sphere_is_background() {
        let img = render_depth(&AnalyticShape::sphere(1e-6), 32);
        assert!(img.depths.iter().all(|&d| d == BACKGROUND_DEPTH));
    }

    #[test]
    fn mirror_symmetric_in_x() {
        let s = AnalyticShape::new(ShapeKind::Torus {
            major: 0.5,
            minor: 0.15,
        });
        let img = render_depth(&s, 32);
        for r in 0..32 {
            for c in 0..32 {
                assert!((img.at(r, c) - img.at(r, 31 - c)).abs() < 1e-6);
            }
        }
        assert!(img.depths.iter().all(|&d| (0.0..=BACKGROUND_DEPTH).contains(&d)));
    }
}
