use crate::error::{Error, Result};

use super::shapes::{AnalyticShape, Vec3};

/// Scalar field sampled on a cubic lattice of `res³` nodes spanning
/// `[lo, hi]³`. Node `(i, j, k)` sits at `lo + h·(i, j, k)`; storage is
/// x-major, so `k` (z) varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    res: usize,
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

impl SdfGrid {
    pub fn new(res: usize, lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if res < 2 {
            return Err(Error::dim("sdf_grid", format!("res {res}"), "at least 2"));
        }
        if !(hi > lo) {
            return Err(Error::DegenerateRange { min: lo, max: hi });
        }
        if values.len() != res * res * res {
            return Err(Error::dim(
                "sdf_grid",
                format!("{} values", values.len()),
                format!("{res}^3 = {}", res * res * res),
            ));
        }
        Ok(Self { res, lo, hi, values })
    }

    /// Samples `f` at every lattice node.
    pub fn from_fn(res: usize, lo: f64, hi: f64, mut f: impl FnMut(Vec3) -> f64) -> Result<Self> {
        let h = (hi - lo) / (res.max(2) - 1) as f64;
        let mut values = Vec::with_capacity(res * res * res);
        for i in 0..res {
            for j in 0..res {
                for k in 0..res {
                    values.push(f([lo + h * i as f64, lo + h * j as f64, lo + h * k as f64]));
                }
            }
        }
        Self::new(res, lo, hi, values)
    }

    /// Ground-truth grid of an analytic shape over `[-1, 1]³`.
    pub fn from_shape(shape: &AnalyticShape, res: usize) -> Result<Self> {
        Self::from_fn(res, -1.0, 1.0, |p| shape.sdf(p))
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.res - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.res + j) * self.res + k
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.spacing();
        [self.lo + h * i as f64, self.lo + h * j as f64, self.lo + h * k as f64]
    }

    /// Lattice positions in storage order, one row per node.
    pub fn points(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.values.len());
        for i in 0..self.res {
            for j in 0..self.res {
                for k in 0..self.res {
                    out.push(self.point(i, j, k));
                }
            }
        }
        out
    }

    /// Central-difference gradient at a node, one-sided on the boundary.
    pub fn node_gradient(&self, n: [usize; 3]) -> Vec3 {
        let h = self.spacing();
        let mut g = [0.0; 3];
        for (a, ga) in g.iter_mut().enumerate() {
            let mut lo = n;
            let mut hi = n;
            if n[a] > 0 {
                lo[a] -= 1;
            }
            if n[a] + 1 < self.res {
                hi[a] += 1;
            }
            let span = (hi[a] - lo[a]) as f64 * h;
            *ga = (self.at(hi[0], hi[1], hi[2]) - self.at(lo[0], lo[1], lo[2])) / span;
        }
        g
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }

    pub fn same_lattice(&self, other: &SdfGrid) -> Result<()> {
        if self.res != other.res || self.lo != other.lo || self.hi != other.hi {
            return Err(Error::dim(
                "grid_compare",
                format!("{}^3 on [{}, {}]", self.res, self.lo, self.hi),
                format!("{}^3 on [{}, {}]", other.res, other.lo, other.hi),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_points() {
        let g = SdfGrid::from_fn(3, -1.0, 1.0, |p| p[0] + 10.0 * p[1] + 100.0 * p[2]).unwrap();
        assert_eq!(g.point(2, 0, 1), [1.0, -1.0, 0.0]);
        assert_eq!(g.at(2, 0, 1), 1.0 - 10.0);
        assert_eq!(g.points()[g.index(1, 2, 0)], g.point(1, 2, 0));
    }

    #[test]
    fn gradient_of_linear_field_is_exact() {
        let g = SdfGrid::from_fn(5, -1.0, 1.0, |p| 2.0 * p[0] - p[1] + 0.5 * p[2]).unwrap();
        for n in [[0, 0, 0], [2, 3, 4], [4, 4, 4]] {
            let d = g.node_gradient(n);
            for (a, b) in d.iter().zip([2.0, -1.0, 0.5]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SdfGrid::new(1, 0.0, 1.0, vec![0.0]).is_err());
        assert!(SdfGrid::new(2, 0.0, 1.0, vec![0.0; 7]).is_err());
        assert!(SdfGrid::new(2, 1.0, 1.0, vec![0.0; 8]).is_err());
    }
}
