//! B-spline bases on extended knot grids.
//!
//! A grid over `[x_min, x_max]` with `grid_size` intervals and order `k`
//! carries `grid_size + 2k + 1` knots and supports `grid_size + k` basis
//! functions. Evaluation uses the triangular Cox–de Boor scheme on the
//! knot span containing `x`, producing the `k + 1` non-zero values and
//! their derivatives. Inputs outside the extended span are clamped to it.

use crate::error::{Error, Result};
use crate::numcore::Tensor2;

/// Highest spline order the fixed-size evaluation buffers accept.
pub const MAX_ORDER: usize = 7;

const FIT_DAMPING: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineGrid {
    knots: Vec<f64>,
    grid_size: usize,
    order: usize,
}

impl SplineGrid {
    pub fn uniform(x_min: f64, x_max: f64, grid_size: usize, order: usize) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::DegenerateRange { min: x_min, max: x_max });
        }
        if grid_size == 0 {
            return Err(Error::Config("grid_size must be at least 1".into()));
        }
        let h = (x_max - x_min) / grid_size as f64;
        let k = order as isize;
        let knots = (-k..=grid_size as isize + k).map(|j| x_min + h * j as f64).collect();
        Self::from_knots(knots, order)
    }

    pub fn from_knots(knots: Vec<f64>, order: usize) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::Config(format!(
                "spline order {order} exceeds maximum {MAX_ORDER}"
            )));
        }
        if knots.len() < 2 * order + 2 {
            return Err(Error::dim(
                "SplineGrid::from_knots",
                format!("{} knots", knots.len()),
                format!("at least {} for order {order}", 2 * order + 2),
            ));
        }
        if let Some(w) = knots.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateRange { min: w[0], max: w[1] });
        }
        let grid_size = knots.len() - 2 * order - 1;
        Ok(Self {
            knots,
            grid_size,
            order,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_basis(&self) -> usize {
        self.grid_size + self.order
    }

    /// `[knots[k], knots[len−1−k]]`, where the basis sums to one.
    pub fn interior(&self) -> (f64, f64) {
        (self.knots[self.order], self.knots[self.knots.len() - 1 - self.order])
    }

    /// `[knots[0], knots[len−1]]`, the clamping range.
    pub fn extent(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Knot lookup that continues the first/last spacing past the ends.
    #[inline]
    fn knot(&self, idx: isize) -> f64 {
        let n = self.knots.len() as isize;
        if idx < 0 {
            let h = self.knots[1] - self.knots[0];
            self.knots[0] + h * idx as f64
        } else if idx >= n {
            let h = self.knots[(n - 1) as usize] - self.knots[(n - 2) as usize];
            self.knots[(n - 1) as usize] + h * (idx - n + 1) as f64
        } else {
            self.knots[idx as usize]
        }
    }

    /// Non-zero basis values (and d/dx) at `x`.
    pub fn local_basis(&self, x: f64) -> LocalBasis {
        let k = self.order;
        let (lo, hi) = self.extent();
        let clamped = !(x > lo && x < hi);
        let x = x.clamp(lo, hi);
        let last_span = self.knots.len() - 2;
        let span = self.knots.partition_point(|&t| t <= x).saturating_sub(1).min(last_span);
        let i = span as isize;

        let mut n = [0.0f64; MAX_ORDER + 1];
        let mut prev = [0.0f64; MAX_ORDER + 1];
        let mut left = [0.0f64; MAX_ORDER + 1];
        let mut right = [0.0f64; MAX_ORDER + 1];
        n[0] = 1.0;
        for j in 1..=k {
            if j == k {
                prev[..k].copy_from_slice(&n[..k]);
            }
            left[j] = x - self.knot(i + 1 - j as isize);
            right[j] = self.knot(i + j as isize) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }

        let start = i - k as isize;
        let mut d = [0.0f64; MAX_ORDER + 1];
        if k > 0 && !clamped {
            // prev[r] = B_{start+1+r, k-1}
            let kf = k as f64;
            for (r, dr) in d.iter_mut().enumerate().take(k + 1) {
                let j = start + r as isize;
                let mut v = 0.0;
                if r >= 1 {
                    v += prev[r - 1] / (self.knot(j + k as isize) - self.knot(j));
                }
                if r < k {
                    v -= prev[r] / (self.knot(j + k as isize + 1) - self.knot(j + 1));
                }
                *dr = kf * v;
            }
        }
        LocalBasis {
            start,
            count: k + 1,
            num_basis: self.num_basis(),
            values: n,
            derivs: d,
        }
    }

    /// Dense `B × num_basis` basis matrix.
    pub fn basis(&self, xs: &[f64]) -> Tensor2 {
        let nb = self.num_basis();
        let mut out = Tensor2::zeros(xs.len(), nb);
        for (r, &x) in xs.iter().enumerate() {
            let lb = self.local_basis(x);
            let row = out.row_mut(r);
            for (j, v, _) in lb.iter() {
                row[j] = v;
            }
        }
        out
    }

    /// `Σ_j coeffs[j]·B_j(x)`.
    pub fn evaluate(&self, coeffs: &[f64], x: f64) -> f64 {
        debug_assert_eq!(coeffs.len(), self.num_basis());
        self.local_basis(x).iter().map(|(j, v, _)| coeffs[j] * v).sum()
    }
}

/// The `k + 1` potentially non-zero basis functions at one input.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    /// Index of the first function; may be negative near the left end.
    pub start: isize,
    count: usize,
    num_basis: usize,
    values: [f64; MAX_ORDER + 1],
    derivs: [f64; MAX_ORDER + 1],
}

impl LocalBasis {
    /// `(basis index, value, derivative)` for in-range indices.
    #[inline]
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..self.count).filter_map(move |r| {
            let j = self.start + r as isize;
            (j >= 0 && (j as usize) < self.num_basis).then(|| (j as usize, self.values[r], self.derivs[r]))
        })
    }
}

/// Least-squares spline coefficients for one target series.
pub fn fit_coefficients(xs: &[f64], ys: &[f64], grid: &SplineGrid) -> Result<Vec<f64>> {
    if xs.len() != ys.len() {
        return Err(Error::dim(
            "fit_coefficients",
            format!("{} inputs", xs.len()),
            format!("{} targets", ys.len()),
        ));
    }
    let targets = Tensor2::from_vec(ys.len(), 1, ys.to_vec())?;
    Ok(fit_coefficients_multi(xs, &targets, grid)?.into_vec())
}

/// Least-squares fit of several target columns sharing the same inputs.
///
/// Solves `(BᵀB + λI)·C = BᵀY` with `λ = 1e-8`; returns `cols(Y) × num_basis`.
pub fn fit_coefficients_multi(xs: &[f64], ys: &Tensor2, grid: &SplineGrid) -> Result<Tensor2> {
    let nb = grid.num_basis();
    if ys.rows() != xs.len() {
        return Err(Error::dim(
            "fit_coefficients",
            format!("{} inputs", xs.len()),
            format!("{} target rows", ys.rows()),
        ));
    }
    if xs.len() < nb {
        return Err(Error::Conditioning(format!(
            "{} samples for {nb} basis functions",
            xs.len()
        )));
    }
    let nt = ys.cols();
    let mut gram = vec![0.0; nb * nb];
    let mut rhs = vec![0.0; nb * nt];
    for (r, &x) in xs.iter().enumerate() {
        let lb = grid.local_basis(x);
        let y = ys.row(r);
        for (a, va, _) in lb.iter() {
            for (b, vb, _) in lb.iter() {
                gram[a * nb + b] += va * vb;
            }
            for (t, &yt) in y.iter().enumerate() {
                rhs[a * nt + t] += va * yt;
            }
        }
    }
    for a in 0..nb {
        gram[a * nb + a] += FIT_DAMPING;
    }
    let chol = cholesky(&mut gram, nb)?;
    let mut out = Tensor2::zeros(nt, nb);
    let mut col = vec![0.0; nb];
    for t in 0..nt {
        for a in 0..nb {
            col[a] = rhs[a * nt + t];
        }
        chol.solve(&mut col);
        out.row_mut(t).copy_from_slice(&col);
    }
    Ok(out)
}

struct Cholesky<'a> {
    l: &'a [f64],
    n: usize,
}

fn cholesky(a: &mut [f64], n: usize) -> Result<Cholesky<'_>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for p in 0..j {
            d -= a[j * n + p] * a[j * n + p];
        }
        if !d.is_finite() || d < 0.5 * FIT_DAMPING {
            return Err(Error::Conditioning(format!("pivot {d:.3e} at basis function {j}")));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for p in 0..j {
                s -= a[i * n + p] * a[j * n + p];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(Cholesky { l: a, n })
}

impl Cholesky<'_> {
    fn solve(&self, b: &mut [f64]) {
        let (l, n) = (self.l, self.n);
        for i in 0..n {
            let mut s = b[i];
            for p in 0..i {
                s -= l[i * n + p] * b[p];
            }
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for p in i + 1..n {
                s -= l[p * n + i] * b[p];
            }
            b[i] = s / l[i * n + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook recursive Cox–de Boor over the raw knot vector.
    fn cox_de_boor(knots: &[f64], i: usize, k: usize, x: f64) -> f64 {
        if k == 0 {
            return if knots[i] <= x && x < knots[i + 1] { 1.0 } else { 0.0 };
        }
        let a = (x - knots[i]) / (knots[i + k] - knots[i]);
        let b = (knots[i + k + 1] - x) / (knots[i + k + 1] - knots[i + 1]);
        a * cox_de_boor(knots, i, k - 1, x) + b * cox_de_boor(knots, i + 1, k - 1, x)
    }

    #[test]
    fn uniform_grid_examples() {
        let g = SplineGrid::uniform(0.0, 1.0, 2, 1).unwrap();
        assert_eq!(g.knots(), &[-0.5, 0.0, 0.5, 1.0, 1.5]);
        let g = SplineGrid::uniform(-1.0, 1.0, 4, 3).unwrap();
        assert_eq!(g.knots().len() - 1, 10);
        assert_eq!(g.knots()[0], -2.5);
        assert_eq!(*g.knots().last().unwrap(), 2.5);
        assert_eq!(g.num_basis(), 7);
        assert!(matches!(
            SplineGrid::uniform(1.0, 1.0, 4, 3),
            Err(Error::DegenerateRange { .. })
        ));
    }

    #[test]
    fn order_zero_is_indicator() {
        let g = SplineGrid::from_knots(vec![0.0, 1.0, 2.0], 0).unwrap();
        assert_eq!(g.basis(&[0.5]).data(), &[1.0, 0.0]);
        assert_eq!(g.basis(&[1.5]).data(), &[0.0, 1.0]);
    }

    #[test]
    fn matches_recursive_definition() {
        let knots = vec![-1.3, -0.9, -0.2, 0.1, 0.15, 0.6, 0.9, 1.4, 2.0, 2.2, 3.0];
        for k in 1..=3 {
            let g = SplineGrid::from_knots(knots.clone(), k).unwrap();
            for s in 0..200 {
                let x = -1.29 + 4.28 * s as f64 / 200.0;
                let b = g.basis(&[x]);
                for j in 0..g.num_basis() {
                    let want = cox_de_boor(&knots, j, k, x);
                    assert!((b.get(0, j) - want).abs() < 1e-12, "k={k} x={x} j={j}");
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let g = SplineGrid::uniform(-1.0, 1.0, 5, 3).unwrap();
        let h = 1e-6;
        for s in 1..100 {
            let x = -1.5 + 3.0 * s as f64 / 100.0;
            let lb = g.local_basis(x);
            let up = g.basis(&[x + h]);
            let dn = g.basis(&[x - h]);
            for (j, _, d) in lb.iter() {
                let fd = (up.get(0, j) - dn.get(0, j)) / (2.0 * h);
                assert!((d - fd).abs() < 1e-5, "x={x} j={j} {d} {fd}");
            }
        }
    }

    #[test]
    fn clamped_outside_extent() {
        let g = SplineGrid::uniform(0.0, 1.0, 4, 3).unwrap();
        let (lo, hi) = g.extent();
        assert_eq!(g.basis(&[lo - 5.0]), g.basis(&[lo]));
        assert_eq!(g.basis(&[hi + 5.0]), g.basis(&[hi]));
        assert!(g.local_basis(hi + 1.0).iter().all(|(_, _, d)| d == 0.0));
    }

    #[test]
    fn continuity_at_interior_knots() {
        // one-sided limits estimated at knot ± δ with a first-order correction
        let delta = 1e-7;
        for k in 2..=4 {
            let g = SplineGrid::uniform(-1.0, 1.0, 6, k).unwrap();
            let (a, b) = g.interior();
            for &t in g.knots().iter().filter(|&&t| t > a && t < b) {
                let l = g.local_basis(t - delta);
                let r = g.local_basis(t + delta);
                let mut left = vec![0.0; g.num_basis()];
                let mut right = vec![0.0; g.num_basis()];
                for (j, v, d) in l.iter() {
                    left[j] = v + delta * d;
                }
                for (j, v, d) in r.iter() {
                    right[j] = v - delta * d;
                }
                for j in 0..g.num_basis() {
                    assert!((left[j] - right[j]).abs() < 1e-9, "k={k} t={t} j={j}");
                }
            }
        }
    }

    #[test]
    fn constant_is_reproduced() {
        let g = SplineGrid::uniform(-1.0, 1.0, 5, 3).unwrap();
        let xs: Vec<f64> = (0..50).map(|i| -1.0 + 2.0 * i as f64 / 49.0).collect();
        let c = fit_coefficients(&xs, &vec![5.0; 50], &g).unwrap();
        for i in 0..=100 {
            let x = -1.0 + 0.02 * i as f64;
            assert!((g.evaluate(&c, x) - 5.0).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_samples_is_conditioning_error() {
        let g = SplineGrid::uniform(-1.0, 1.0, 5, 3).unwrap();
        assert!(matches!(
            fit_coefficients(&[0.0, 0.1], &[1.0, 2.0], &g),
            Err(Error::Conditioning(_))
        ));
    }

    proptest! {
        #[test]
        fn uniform_grid_is_strictly_increasing(
            lo in -10.0f64..10.0, width in 1e-3f64..20.0, gs in 1usize..30, k in 0usize..=MAX_ORDER
        ) {
            let g = SplineGrid::uniform(lo, lo + width, gs, k).unwrap();
            prop_assert_eq!(g.knots().len(), gs + 2 * k + 1);
            prop_assert!(g.knots().windows(2).all(|w| w[1] > w[0]));
        }

        #[test]
        fn partition_of_unity_and_range(u in 0.0f64..1.0, gs in 1usize..12, k in 1usize..=4) {
            let g = SplineGrid::uniform(-2.0, 3.0, gs, k).unwrap();
            let (a, b) = g.interior();
            let x = a + (b - a) * u;
            let row = g.basis(&[x]);
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
            prop_assert!(row.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
